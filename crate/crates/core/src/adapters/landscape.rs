//! Closed-form two-phase error landscape over a two-parameter solver.
//!
//! Axis 0 pays off until `phase_one_cap`; past that it overshoots. Axis 1 only
//! pays off once axis 0 is close to its cap and is penalized before then, so
//! the direction of improvement flips once the first phase is exhausted.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{aggregate_mean_error, metric_name, EvaluationResult, Evaluator, METRIC_COUNT};
use crate::error::{EveError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeConfig {
    pub base_error: f64,
    pub phase_one_cap: f64,
    /// Zero gives a single-phase landscape.
    pub phase_two_cap: f64,
    /// Fraction of `phase_one_cap` at which axis 1 starts to unlock.
    pub unlock_start: f64,
    pub overshoot_penalty: f64,
    pub premature_penalty: f64,
    /// Solver parameter file, relative to the solver root.
    pub params_path: String,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self {
            base_error: 0.48,
            phase_one_cap: 0.16,
            phase_two_cap: 0.24,
            unlock_start: 0.75,
            overshoot_penalty: 1.0,
            premature_penalty: 1.0,
            params_path: "solver/params.json".into(),
        }
    }
}

impl LandscapeConfig {
    pub fn single_phase(base_error: f64) -> Self {
        Self {
            base_error,
            phase_one_cap: 1.0,
            phase_two_cap: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.base_error.is_finite()
            && self.base_error >= 0.0
            && self.phase_one_cap.is_finite()
            && self.phase_one_cap > 0.0
            && self.phase_two_cap.is_finite()
            && self.phase_two_cap >= 0.0
            && (0.0..1.0).contains(&self.unlock_start)
            && self.overshoot_penalty >= 0.0
            && self.premature_penalty >= 0.0
            && !self.params_path.is_empty();
        if ok {
            Ok(())
        } else {
            Err(EveError::Config("invalid synthetic landscape parameters".into()))
        }
    }
}

/// Contents of the solver parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub x: [f64; 2],
    pub tag: String,
}

impl SolverParams {
    pub fn read(path: &Path) -> Result<Self> {
        crate::fsutil::read_json(path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    pub config: LandscapeConfig,
}

impl Landscape {
    pub fn new(config: LandscapeConfig) -> Self {
        Self { config }
    }

    pub fn error(&self, x: &[f64; 2]) -> f64 {
        let c = &self.config;
        let (c0, c1) = (c.phase_one_cap, c.phase_two_cap);
        let g0 = x[0].min(c0) - c.overshoot_penalty * (x[0] - c0).max(0.0);
        let g1 = if c1 > 0.0 {
            let ramp = (1.0 - c.unlock_start) * c0;
            let u = ((x[0] - c.unlock_start * c0) / ramp).clamp(0.0, 1.0);
            let x1 = x[1].max(0.0);
            u * (x1.min(c1) - c.overshoot_penalty * (x1 - c1).max(0.0)) - (1.0 - u) * c.premature_penalty * x1
        } else {
            0.0
        };
        (c.base_error - g0 - g1).max(0.0)
    }

    /// Spreads the error over ten metrics whose mean is the error.
    pub fn metrics(&self, x: &[f64; 2]) -> Vec<f64> {
        let e = self.error(x);
        (0..METRIC_COUNT).map(|k| e * (0.5 + k as f64 / 9.0)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticEvaluator {
    landscape: Landscape,
}

impl SyntheticEvaluator {
    pub fn new(config: LandscapeConfig) -> Self {
        Self {
            landscape: Landscape::new(config),
        }
    }
}

impl Evaluator for SyntheticEvaluator {
    fn evaluate(&self, solver_dir: &Path, _timeout: Duration) -> EvaluationResult {
        let path = solver_dir.join(&self.landscape.config.params_path);
        let params: SolverParams = match fs::read(&path)
            .map_err(|e| e.to_string())
            .and_then(|b| serde_json::from_slice(&b).map_err(|e| e.to_string()))
        {
            Ok(p) => p,
            Err(e) => return EvaluationResult::failure(format!("cannot read {}: {e}", path.display())),
        };
        if !params.x.iter().all(|v| v.is_finite()) {
            return EvaluationResult::failure("non-finite solver parameters".into());
        }
        let per_k = self.landscape.metrics(&params.x);
        let mean = match aggregate_mean_error(&per_k) {
            Ok(m) => m,
            Err(e) => return EvaluationResult::failure(e.to_string()),
        };
        let mut log = format!("synthetic evaluation of {}\nx = {:?}\n", params.tag, params.x);
        let per_metric: BTreeMap<String, f64> = per_k
            .iter()
            .enumerate()
            .map(|(i, e)| {
                log.push_str(&format!("{} = {e:.6}\n", metric_name(i + 1)));
                (metric_name(i + 1), *e)
            })
            .collect();
        log.push_str(&format!("mean error = {mean:.6}\n"));
        EvaluationResult::success(mean, per_metric, log, Some(params.tag))
    }
}
