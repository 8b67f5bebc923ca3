//! Seeded experiment drivers: Elo convergence races and the variant ablation
//! over the synthetic preset. Sweeps fan out over seeds with [`par_map`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::ids::AgentId;
use crate::model::{RunConfig, RunManifest, RunState, VariantKind};
use crate::orchestrator::{select_best_agent, Engine, SeedInputs, VariantMode};
use crate::par::{par_map, Execution};
use crate::presets::{synthetic_config, write_synthetic_preset, SeedPaths};
use crate::rating::{elo_update, MatchOutcome};
use crate::store::AGENTS_DIR;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EloRace {
    pub races: usize,
    pub p_win: f64,
    pub k: f64,
}

impl Default for EloRace {
    fn default() -> Self {
        Self {
            races: 2000,
            p_win: 0.75,
            k: 32.0,
        }
    }
}

/// Rating gap (stronger minus weaker) after `races` pairwise matches.
pub fn elo_race_gap(params: EloRace, seed: u64) -> f64 {
    let (a, b) = (AgentId(0), AgentId(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratings = BTreeMap::from([(a, 1500.0), (b, 1500.0)]);
    for _ in 0..params.races {
        let s_i = if rng.gen_bool(params.p_win) { 1.0 } else { 0.0 };
        ratings = elo_update(&ratings, &[MatchOutcome { agent_i: a, agent_j: b, s_i }], params.k)
            .expect("both agents rated");
    }
    ratings[&a] - ratings[&b]
}

pub fn elo_sweep(params: EloRace, seeds: &[u64], exec: Execution) -> Vec<f64> {
    par_map(exec, seeds.to_vec(), |s| elo_race_gap(params, s))
}

/// Seeds a run of the synthetic preset under `dir` (`dir/preset`, `dir/run`).
pub fn synthetic_run(
    dir: &Path,
    seed: u64,
    variant: VariantKind,
    frozen_agent: Option<PathBuf>,
    config: RunConfig,
    exec: Execution,
) -> Result<(Engine, RunState)> {
    let SeedPaths {
        base,
        seed_solver,
        seed_guidance,
    } = write_synthetic_preset(&dir.join("preset"))?;
    let manifest = RunManifest {
        rng_seed: seed,
        variant,
        frozen_guidance_hash: None,
        config,
    };
    let engine = Engine::from_manifest(&manifest).with_execution(exec);
    let mode = VariantMode {
        kind: variant,
        frozen_agent_ref: frozen_agent,
    };
    let seeds = SeedInputs {
        base_repo: base,
        seed_solver,
        seed_guidance: vec![seed_guidance],
    };
    let state = engine.seed_run(&dir.join("run"), manifest, &mode, &seeds, false)?;
    Ok((engine, state))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationOutcome {
    pub seed: u64,
    pub eve: f64,
    pub static_initial: f64,
    pub static_final: f64,
}

impl AblationOutcome {
    pub fn eve_leads(&self) -> bool {
        self.eve <= self.static_initial && self.eve <= self.static_final
    }
}

fn final_best(state: &RunState) -> Result<f64> {
    state.best_so_far(state.last_iteration())
}

/// Runs eve, then static-initial, then static-final frozen on the eve run's
/// best-rated agent, all from the same preset and seed.
pub fn ablation_run(root: &Path, seed: u64, iterations: u32, exec: Execution) -> Result<AblationOutcome> {
    let config = RunConfig {
        total_iterations: iterations,
        ..synthetic_config()
    };
    let mut best = [0.0; 3];
    let mut frozen = None;
    for (i, variant) in VariantKind::ALL.into_iter().enumerate() {
        let dir = root.join(format!("{seed}-{variant}"));
        let frozen_agent = (variant == VariantKind::StaticFinal).then(|| frozen.clone()).flatten();
        let (engine, mut state) = synthetic_run(&dir, seed, variant, frozen_agent, config.clone(), exec)?;
        engine.run(&mut state, None)?;
        if variant == VariantKind::Eve {
            let id = select_best_agent(&state)?.id;
            frozen = Some(state.run_dir.join(AGENTS_DIR).join(id.to_string()));
        }
        best[i] = final_best(&state)?;
    }
    Ok(AblationOutcome {
        seed,
        eve: best[0],
        static_initial: best[1],
        static_final: best[2],
    })
}

pub fn ablation_sweep(root: &Path, seeds: &[u64], iterations: u32, exec: Execution) -> Result<Vec<AblationOutcome>> {
    par_map(exec, seeds.to_vec(), |s| ablation_run(root, s, iterations, exec))
        .into_iter()
        .collect()
}
