//! Agent and evaluator backends.
//!
//! Agents see a workspace built by [`crate::workspace`]. External agents get
//! the absolute path of `.eve/task.json` in `EVE_TASK_MANIFEST`, run with the
//! workspace root as working directory, and report through `.eve/session.log`,
//! `.eve/tokens.json` and `.eve/done`. Evaluators receive the solver snapshot
//! directory as their last argument and write `score.json`.

mod command;
mod landscape;
mod mock;

use std::collections::BTreeMap;
use std::fs;
use std::ops::Add;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{EveError, Result};
use crate::workspace::{WorkspaceSpec, DONE_FLAG, SESSION_LOG, TOKEN_USAGE};

pub use command::{CommandAgent, CommandEvaluator, CommandSpec, SCORE_FILE};
pub use landscape::{Landscape, LandscapeConfig, SolverParams, SyntheticEvaluator};
pub use mock::{decide, Directive, MockAgent, MockConfig, MockDecision, MockInput, MockPolicy};

pub const MANIFEST_ENV: &str = "EVE_TASK_MANIFEST";
pub const METRIC_COUNT: usize = 10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub cached_input: u64,
    pub fresh_input: u64,
    pub output: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turns: Option<u64>,
}

impl Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, o: TokenUsage) -> TokenUsage {
        TokenUsage {
            cached_input: self.cached_input + o.cached_input,
            fresh_input: self.fresh_input + o.fresh_input,
            output: self.output + o.output,
            turns: self.turns.zip(o.turns).map(|(a, b)| a + b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionFailure {
    Spawn(String),
    NonZeroExit(String),
    TimedOut,
    MissingDoneFlag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSessionResult {
    pub session_log: String,
    pub token_usage: TokenUsage,
    pub duration: Duration,
    pub failure: Option<SessionFailure>,
}

impl AgentSessionResult {
    pub fn exit_ok(&self) -> bool {
        self.failure.is_none()
    }

    pub fn timed_out(&self) -> bool {
        self.failure == Some(SessionFailure::TimedOut)
    }
}

/// Per-session inputs that are not part of the workspace itself.
#[derive(Debug, Clone, Copy)]
pub struct SessionContext {
    pub iteration: u32,
    pub slot: usize,
    /// Seed for the session's private random stream.
    pub seed: u64,
    pub timeout: Duration,
}

pub trait AgentBackend: Send + Sync {
    fn run_session(&self, ws: &WorkspaceSpec, ctx: &SessionContext) -> AgentSessionResult;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    pub ok: bool,
    pub error_mean: Option<f64>,
    pub score: Option<f64>,
    pub per_metric: BTreeMap<String, f64>,
    pub log: String,
    pub tag: Option<String>,
}

impl EvaluationResult {
    pub fn success(error_mean: f64, per_metric: BTreeMap<String, f64>, log: String, tag: Option<String>) -> Self {
        Self {
            ok: true,
            error_mean: Some(error_mean),
            score: Some(0.0 - error_mean),
            per_metric,
            log,
            tag,
        }
    }

    pub fn failure(log: String) -> Self {
        Self {
            ok: false,
            error_mean: None,
            score: None,
            per_metric: BTreeMap::new(),
            log,
            tag: None,
        }
    }
}

pub trait Evaluator: Send + Sync {
    fn evaluate(&self, solver_dir: &Path, timeout: Duration) -> EvaluationResult;
}

/// Mean of exactly ten finite, nonnegative per-metric errors.
pub fn aggregate_mean_error(per_k: &[f64]) -> Result<f64> {
    if per_k.len() != METRIC_COUNT {
        return Err(EveError::InvalidInput(format!(
            "expected {METRIC_COUNT} metric errors, got {}",
            per_k.len()
        )));
    }
    if let Some(bad) = per_k.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(EveError::InvalidInput(format!("metric error {bad} is not a finite nonnegative number")));
    }
    Ok(per_k.iter().sum::<f64>() / METRIC_COUNT as f64)
}

pub fn metric_name(k: usize) -> String {
    format!("e_{k}")
}

/// Pulls `e_1..e_10` out of a metric map, if all are present.
pub fn standard_metrics(per_metric: &BTreeMap<String, f64>) -> Option<Vec<f64>> {
    (1..=METRIC_COUNT).map(|k| per_metric.get(&metric_name(k)).copied()).collect()
}

/// Reads the agent-written files under `.eve/`.
pub fn collect_session_outputs(ws: &WorkspaceSpec) -> (String, TokenUsage, bool) {
    let log = fs::read(ws.root.join(SESSION_LOG))
        .map(|b| String::from_utf8_lossy(&b).into_owned())
        .unwrap_or_default();
    let tokens_path = ws.root.join(TOKEN_USAGE);
    let tokens = match fs::read(&tokens_path) {
        Ok(bytes) => serde_json::from_slice(&bytes).unwrap_or_else(|e| {
            log::warn!("{}: unreadable token usage ({e}); counting zero", tokens_path.display());
            TokenUsage::default()
        }),
        Err(_) => {
            log::warn!("{}: no token usage reported; counting zero", tokens_path.display());
            TokenUsage::default()
        }
    };
    let done = ws.root.join(DONE_FLAG).exists();
    (log, tokens, done)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentSpec {
    Command(CommandSpec),
    Mock(MockConfig),
}

impl Default for AgentSpec {
    fn default() -> Self {
        Self::Mock(MockConfig::default())
    }
}

impl AgentSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Command(c) => c.validate(),
            Self::Mock(m) => m.validate(),
        }
    }

    pub fn build(&self) -> Box<dyn AgentBackend> {
        match self {
            Self::Command(c) => Box::new(CommandAgent::new(c.clone())),
            Self::Mock(m) => Box::new(MockAgent::new(m.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvaluatorSpec {
    Command(CommandSpec),
    Synthetic(LandscapeConfig),
}

impl Default for EvaluatorSpec {
    fn default() -> Self {
        Self::Synthetic(LandscapeConfig::default())
    }
}

impl EvaluatorSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Command(c) => c.validate(),
            Self::Synthetic(l) => l.validate(),
        }
    }

    pub fn build(&self) -> Box<dyn Evaluator> {
        match self {
            Self::Command(c) => Box::new(CommandEvaluator::new(c.clone())),
            Self::Synthetic(l) => Box::new(SyntheticEvaluator::new(l.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_mean_error(&[0.0; 10]).unwrap(), 0.0);
        let ks: Vec<f64> = (1..=10).map(|k| k as f64 / 100.0).collect();
        assert!((aggregate_mean_error(&ks).unwrap() - 0.055).abs() < 1e-15);
        let mixed = [0.05, 0.05, 0.05, 0.05, 0.05, 0.9, 0.9, 0.9, 0.9, 0.9];
        assert!((aggregate_mean_error(&mixed).unwrap() - 0.475).abs() < 1e-15);
        assert!(aggregate_mean_error(&[0.1; 9]).is_err());
        assert!(aggregate_mean_error(&[f64::NAN; 10]).is_err());
        assert!(aggregate_mean_error(&[-0.1; 10]).is_err());
    }

    #[test]
    fn success_scores_are_negated_errors() {
        let r = EvaluationResult::success(0.4848, BTreeMap::new(), String::new(), None);
        assert_eq!(r.score, Some(-0.4848));
        let r = EvaluationResult::success(0.0, BTreeMap::new(), String::new(), None);
        assert_eq!(r.score.unwrap().to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn spec_serialization_is_tagged() {
        let spec = AgentSpec::Command(CommandSpec {
            program: "/bin/true".into(),
            args: vec![],
        });
        let json = serde_json::to_value(&spec).unwrap();
        assert_eq!(json["kind"], "command");
        let back: AgentSpec = serde_json::from_value(json).unwrap();
        assert_eq!(back, spec);
        let mock: AgentSpec = serde_json::from_str(r#"{"kind":"mock","policy":"improver"}"#).unwrap();
        assert!(matches!(mock, AgentSpec::Mock(m) if m.policy == MockPolicy::Improver));
    }

    proptest! {
        #[test]
        fn aggregate_matches_brute_force(v in prop::collection::vec(0.0f64..10.0, 10)) {
            let mut s = 0.0;
            for x in &v { s += x; }
            prop_assert!((aggregate_mean_error(&v).unwrap() - s / 10.0).abs() < 1e-15);
        }
    }
}
