//! Shared fixtures plus a straight-line re-implementation of the race loop
//! over the synthetic preset. The reference keeps everything in memory, runs
//! slots one after another, and shares only the environment with the engine:
//! the random streams, the mock agent's decision function and the landscape.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use walkdir::WalkDir;

use eve_core::adapters::{decide, AgentSpec, Directive, Landscape, MockConfig, MockInput, SolverParams};
use eve_core::model::{RunConfig, RunManifest, RunState, VariantKind};
use eve_core::orchestrator::{Engine, SeedInputs, VariantMode};
use eve_core::par::Execution;
use eve_core::presets::{write_guidance, write_synthetic_preset};
use eve_core::rng::{stream, stream_seed, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverView {
    pub id: u32,
    pub origin: u32,
    pub producer: Option<u32>,
    pub x: [u64; 2],
    pub tag: String,
    pub error: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentView {
    pub id: u32,
    pub parent: Option<u32>,
    pub origin: u32,
    pub rating: u64,
    pub directive: Directive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunView {
    pub solvers: Vec<SolverView>,
    pub agents: Vec<AgentView>,
    pub best_so_far: Vec<u64>,
}

fn mock_config(config: &RunConfig) -> MockConfig {
    match &config.agent {
        AgentSpec::Mock(m) => m.clone(),
        other => panic!("reference loop needs the mock agent, got {other:?}"),
    }
}

/// Indices into `weights` drawn without replacement, returned in ascending order.
fn draw(weights: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    use rand::Rng;
    let mut pool: Vec<usize> = (0..weights.len()).collect();
    let mut got = Vec::new();
    for _ in 0..count.min(weights.len()) {
        let total: f64 = pool.iter().map(|&i| weights[i]).sum();
        let target = rng.gen::<f64>() * total;
        let mut running = 0.0;
        let mut chosen = pool.len() - 1;
        for (pos, &i) in pool.iter().enumerate() {
            running += weights[i];
            if target < running {
                chosen = pos;
                break;
            }
        }
        got.push(pool.remove(chosen));
    }
    got.sort();
    got
}

/// Error as the evaluator reports it: the mean over its ten metrics.
fn scored(landscape: &Landscape, x: &[f64; 2]) -> f64 {
    landscape.metrics(x).iter().sum::<f64>() / 10.0
}

fn rank_weights(n: usize, beta: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|r| (-beta * r as f64).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

pub fn reference_run(seed: u64, config: &RunConfig, guidance: &[Directive], expand: bool) -> RunView {
    let mock = mock_config(config);
    let landscape = Landscape::new(mock.landscape.clone());
    let start = SolverParams {
        x: [0.0, 0.0],
        tag: "VanillaSeed".into(),
    };
    // (params, error, origin, producer)
    let mut solvers: Vec<(SolverParams, f64, u32, Option<u32>)> =
        vec![(start.clone(), scored(&landscape, &start.x), 0, None)];
    // (directive, rating, parent, origin)
    let mut agents: Vec<(Directive, f64, Option<u32>, u32)> =
        guidance.iter().map(|d| (*d, 1500.0, None, 0)).collect();
    let mut best = Vec::new();

    for n in 1..=config.total_iterations {
        let mut by_rating: Vec<usize> = (0..agents.len()).collect();
        by_rating.sort_by(|&a, &b| agents[b].1.total_cmp(&agents[a].1).then(a.cmp(&b)));
        let mut rng = stream(seed, n, Purpose::WorkingAgents, 0);
        let mut working = Vec::new();
        while working.len() < config.working_count {
            let want = (config.working_count - working.len()).min(agents.len());
            for r in draw(&rank_weights(agents.len(), config.rank_beta), want, &mut rng) {
                working.push(by_rating[r]);
            }
        }

        let mut by_error: Vec<usize> = (0..solvers.len()).collect();
        by_error.sort_by(|&a, &b| solvers[a].1.total_cmp(&solvers[b].1).then(a.cmp(&b)));
        let prefill = if config.reference_solver_count == 0 {
            by_error[0]
        } else {
            let mut rng = stream(seed, n, Purpose::ReferenceSolvers, 0);
            let picks = draw(
                &rank_weights(solvers.len(), config.rank_beta),
                config.reference_solver_count,
                &mut rng,
            );
            by_error[picks[0]]
        };

        let mut errors = Vec::new();
        let mut revisions = Vec::new();
        for (slot, &a) in working.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, n, Purpose::Session, slot));
            let input = MockInput {
                prefill: &solvers[prefill].0,
                directive: agents[a].0,
                iteration: n,
                slot,
            };
            let d = decide(&mock, &input, &mut rng);
            if d.misbehave {
                errors.push(None);
                continue;
            }
            let e = scored(&landscape, &d.candidate.x);
            solvers.push((d.candidate, e, n, Some(a as u32)));
            errors.push(Some(e));
            if let Some(next) = d.revision {
                revisions.push((a, next));
            }
        }

        let mut games = Vec::new();
        for i in 0..working.len() {
            for j in i + 1..working.len() {
                let (Some(ei), Some(ej)) = (errors[i], errors[j]) else { continue };
                if working[i] == working[j] {
                    continue;
                }
                let s = if (ei - ej).abs() <= config.tie_epsilon {
                    0.5
                } else if ei < ej {
                    1.0
                } else {
                    0.0
                };
                let (lo, hi, s_lo) = if working[i] < working[j] {
                    (working[i], working[j], s)
                } else {
                    (working[j], working[i], 1.0 - s)
                };
                games.push((lo, hi, s_lo));
            }
        }
        games.sort_by_key(|g| (g.0, g.1));
        for (lo, hi, s) in games {
            let (rl, rh) = (agents[lo].1, agents[hi].1);
            let el = 1.0 / (1.0 + 10f64.powf((rh - rl) / 400.0));
            let eh = 1.0 / (1.0 + 10f64.powf((rl - rh) / 400.0));
            agents[lo].1 = rl + config.elo_k * (s - el);
            agents[hi].1 = rh + config.elo_k * ((1.0 - s) - eh);
        }

        if expand {
            for (producer, next) in revisions {
                agents.push((next, agents[producer].1, Some(producer as u32), n));
            }
        }
        best.push(
            solvers
                .iter()
                .map(|s| s.1)
                .min_by(f64::total_cmp)
                .unwrap()
                .to_bits(),
        );
    }

    RunView {
        solvers: solvers
            .into_iter()
            .enumerate()
            .map(|(id, (p, e, origin, producer))| SolverView {
                id: id as u32,
                origin,
                producer,
                x: p.x.map(f64::to_bits),
                tag: p.tag,
                error: e.to_bits(),
            })
            .collect(),
        agents: agents
            .into_iter()
            .enumerate()
            .map(|(id, (directive, rating, parent, origin))| AgentView {
                id: id as u32,
                parent,
                origin,
                rating: rating.to_bits(),
                directive,
            })
            .collect(),
        best_so_far: best,
    }
}

/// What the engine persisted, read back from the run directory.
pub fn observed(state: &RunState) -> RunView {
    let run = &state.run_dir;
    RunView {
        solvers: state
            .solvers
            .iter()
            .filter(|s| s.valid)
            .map(|s| {
                let p = SolverParams::read(&run.join(&s.files_ref).join("solver/params.json")).unwrap();
                SolverView {
                    id: s.id.0,
                    origin: s.origin_iteration,
                    producer: s.producer_agent_id.map(|a| a.0),
                    x: p.x.map(f64::to_bits),
                    tag: p.tag,
                    error: s.error().unwrap().to_bits(),
                }
            })
            .collect(),
        agents: state
            .agents
            .iter()
            .map(|a| {
                let text = fs::read_to_string(run.join(&a.guidance_ref).join("directions.md")).unwrap();
                AgentView {
                    id: a.id.0,
                    parent: a.parent_id.map(|p| p.0),
                    origin: a.origin_iteration,
                    rating: a.rating.to_bits(),
                    directive: Directive::parse(&text),
                }
            })
            .collect(),
        best_so_far: state.iterations.iter().map(|r| r.best_so_far.to_bits()).collect(),
    }
}

pub fn config(iterations: u32) -> RunConfig {
    RunConfig {
        total_iterations: iterations,
        ..eve_core::presets::synthetic_config()
    }
}

/// Seeds a synthetic run under `dir` with one seed agent per directive.
pub fn seed_run(
    dir: &Path,
    seed: u64,
    variant: VariantKind,
    config: RunConfig,
    guidance: &[Directive],
    exec: Execution,
) -> (Engine, RunState) {
    let preset = write_synthetic_preset(&dir.join("preset")).unwrap();
    let seed_guidance: Vec<PathBuf> = guidance
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let g = dir.join(format!("guidance-{i}"));
            write_guidance(&g, *d).unwrap();
            g
        })
        .collect();
    let manifest = RunManifest {
        rng_seed: seed,
        variant,
        frozen_guidance_hash: None,
        config,
    };
    let engine = Engine::from_manifest(&manifest)
        .with_execution(exec)
        .with_scratch_root(dir.join("scratch"));
    let mode = VariantMode {
        kind: variant,
        frozen_agent_ref: None,
    };
    let seeds = SeedInputs {
        base_repo: preset.base,
        seed_solver: preset.seed_solver,
        seed_guidance,
    };
    let state = engine.seed_run(&dir.join("run"), manifest, &mode, &seeds, false).unwrap();
    (engine, state)
}

/// Every file under `root` (relative path -> bytes), lock file excluded.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .map(Result::unwrap)
        .filter(|e| e.file_type().is_file() && e.file_name() != "run.lock")
        .map(|e| {
            let rel = e.path().strip_prefix(root).unwrap().to_string_lossy().into_owned();
            (rel, fs::read(e.path()).unwrap())
        })
        .collect()
}

pub fn assert_nonincreasing(values: &[f64]) {
    for w in values.windows(2) {
        assert!(w[1] <= w[0], "best_so_far rose from {} to {}", w[0], w[1]);
    }
}
