//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eve_core::accounting::{equivalent_tokens, millions};
use eve_core::adapters::{Directive, TokenUsage};
use eve_core::model::{FailureKind, VariantKind};
use eve_core::orchestrator::resume;
use eve_core::par::Execution;
use eve_core::rating::{elo_expected, elo_update, MatchOutcome};
use eve_core::report::{render_csv, rows};
use eve_core::sim::{ablation_sweep, elo_sweep, EloRace};
use eve_core::store::{load_run, LoadMode};
use eve_core::AgentId;
use eve_pe::{
    compress_linear_clamp, compress_log1p, compress_sqrt, compress_tanh, lerp_lookup, rescale_global,
    CompressionParams, Matrix, PeVariant,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

struct Gate {
    failed: usize,
}

impl Gate {
    fn check(&mut self, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let mut result = f();
        let took = start.elapsed();
        if let (Ok(detail), Some(limit)) = (&result, budget) {
            if took > limit {
                result = Err(format!("{detail}; took {took:.2?}, budget {limit:?}"));
            }
        }
        match result {
            Ok(detail) => println!("PASS  {name}: {detail} [{took:.2?}]"),
            Err(why) => {
                self.failed += 1;
                println!("FAIL  {name}: {why} [{took:.2?}]");
            }
        }
    }
}

const SEED_AGENT: Directive = Directive {
    axis: 0,
    adversarial: false,
};

fn elo_formula() -> Outcome {
    let e = elo_expected(1600.0, 1400.0);
    ensure((e - 0.759746926).abs() <= 1e-6, format!("E(1600,1400) = {e}"))?;
    let (a, b) = (AgentId(0), AgentId(1));
    let start = BTreeMap::from([(a, 1500.0), (b, 1500.0)]);
    let won = elo_update(&start, &[MatchOutcome { agent_i: a, agent_j: b, s_i: 1.0 }], 32.0).unwrap();
    ensure(won[&a] == 1516.0 && won[&b] == 1484.0, format!("win update gave {won:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut ratings: BTreeMap<AgentId, f64> = (0..8).map(|i| (AgentId(i), 1500.0)).collect();
    let total = 8.0 * 1500.0;
    for _ in 0..10_000 {
        let i = rng.gen_range(0..8);
        let j = (i + rng.gen_range(1..8)) % 8;
        let s = [0.0, 0.5, 1.0][rng.gen_range(0..3)];
        ratings = elo_update(&ratings, &[MatchOutcome { agent_i: AgentId(i), agent_j: AgentId(j), s_i: s }], 32.0).unwrap();
    }
    let drift = (ratings.values().sum::<f64>() - total).abs();
    ensure(drift <= 1e-9, format!("rating sum drifted by {drift:e}"))?;
    Ok(format!("E = {e:.9}, win -> (1516, 1484), sum drift {drift:.1e} over 10000 updates"))
}

fn elo_convergence() -> Outcome {
    let seeds: Vec<u64> = (0..50).collect();
    let gaps = elo_sweep(EloRace::default(), &seeds, Execution::Parallel);
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let target = 400.0 * 3f64.log10();
    ensure((mean - target).abs() <= 60.0, format!("mean gap {mean:.2} vs {target:.2}"))?;
    Ok(format!("mean final gap {mean:.2} (target {target:.2} +/- 60, 50 seeds x 2000 races)"))
}

fn oracle_equivalence(root: &Path, runs: &mut Vec<PathBuf>) -> Outcome {
    let cfg = common::config(5);
    let seeds: Vec<u64> = (100..125).collect();
    let results = eve_core::par::par_map(Execution::Parallel, seeds, |seed| {
        let dir = root.join(format!("oracle-{seed}"));
        let (engine, mut state) =
            common::seed_run(&dir, seed, VariantKind::Eve, cfg.clone(), &[SEED_AGENT], Execution::Parallel);
        engine.run(&mut state, None).unwrap();
        let persisted = load_run(&state.run_dir, LoadMode::ReadOnly).unwrap();
        let same = common::observed(&persisted) == common::reference_run(seed, &cfg, &[SEED_AGENT], true);
        (seed, same, state.run_dir)
    });
    let mismatched: Vec<u64> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    runs.extend(results.into_iter().map(|r| r.2));
    ensure(mismatched.is_empty(), format!("seeds differing from the reference: {mismatched:?}"))?;
    Ok("25/25 runs (T=5, |I|=2) identical in solvers, agents, ratings and best_so_far".into())
}

fn boundary_enforcement(root: &Path, runs: &mut Vec<PathBuf>) -> Outcome {
    let adversary = Directive {
        axis: 0,
        adversarial: true,
    };
    let dir = root.join("boundary");
    let (engine, mut state) = common::seed_run(
        &dir,
        5,
        VariantKind::Eve,
        common::config(12),
        &[SEED_AGENT, adversary],
        Execution::Parallel,
    );
    engine.run(&mut state, None).unwrap();
    runs.push(state.run_dir.clone());
    let mut mixed = 0;
    for r in &state.iterations {
        let bad: Vec<_> = r.outcomes.iter().filter(|o| o.agent_id == AgentId(1)).collect();
        for o in &bad {
            let kind = o.failure.as_ref().map(|f| f.kind);
            ensure(kind == Some(FailureKind::BoundaryViolation), format!("iteration {}: {kind:?}", r.iteration))?;
            ensure(o.new_solver_id.is_none(), "violating candidate was kept")?;
        }
        if !bad.is_empty() {
            ensure(
                r.rating_after[&AgentId(1)] == r.rating_before[&AgentId(1)],
                format!("violator rated in iteration {}", r.iteration),
            )?;
        }
        if bad.len() == 1 && r.outcomes.iter().any(|o| o.agent_id == AgentId(0)) {
            mixed += 1;
            let produced = r.outcomes.iter().filter(|o| o.new_solver_id.is_some()).count();
            ensure(produced == 1, format!("iteration {} kept {produced} solvers", r.iteration))?;
            ensure(r.rating_after == r.rating_before, "ratings moved in a one-agent iteration")?;
        }
    }
    ensure(mixed > 0, "the adversary never raced the honest agent")?;
    Ok(format!("{mixed} mixed races: violator rejected, one solver kept, ratings unchanged"))
}

fn token_accounting(runs: &[PathBuf]) -> Outcome {
    let teq = equivalent_tokens(&TokenUsage {
        cached_input: 100,
        fresh_input: 50,
        output: 10,
        turns: None,
    });
    ensure(teq == 320.0, format!("T_eq(100,50,10) = {teq}"))?;
    ensure(millions(12_345_678.0) == "12.3", format!("millions rendered {}", millions(12_345_678.0)))?;
    for run in runs {
        let state = load_run(run, LoadMode::ReadOnly).map_err(|e| e.to_string())?;
        let cum: Vec<f64> = state.iterations.iter().map(|r| r.cost.cumulative_teq).collect();
        ensure(cum.windows(2).all(|w| w[1] >= w[0]), format!("{} cumulative T_eq decreased", run.display()))?;
        let csv = render_csv(&rows(&state).map_err(|e| e.to_string())?);
        for line in csv.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            for col in &cols[4..] {
                let one_decimal = col.split_once('.').is_some_and(|(_, d)| d.len() == 1);
                ensure(one_decimal, format!("T_eq column {col:?} is not in millions with one decimal"))?;
            }
        }
    }
    Ok(format!("T_eq(100,50,10) = 320, millions column ok, cumulative nondecreasing on {} runs", runs.len()))
}

fn ablation(root: &Path, runs: &mut Vec<PathBuf>) -> Outcome {
    let seeds: Vec<u64> = (1..=20).collect();
    let dir = root.join("ablation");
    let out = ablation_sweep(&dir, &seeds, 15, Execution::Parallel).map_err(|e| e.to_string())?;
    for seed in &seeds {
        for v in VariantKind::ALL {
            runs.push(dir.join(format!("{seed}-{v}")).join("run"));
        }
    }
    let wins = out.iter().filter(|o| o.eve_leads()).count();
    let mean = |f: fn(&eve_core::sim::AblationOutcome) -> f64| out.iter().map(f).sum::<f64>() / out.len() as f64;
    let summary = format!(
        "eve <= both static modes in {wins}/20 (mean final error eve {:.4}, static-initial {:.4}, static-final {:.4})",
        mean(|o| o.eve),
        mean(|o| o.static_initial),
        mean(|o| o.static_final)
    );
    ensure(wins >= 18, summary.clone())?;
    Ok(summary)
}

fn monotone(runs: &[PathBuf]) -> Outcome {
    let mut variants = BTreeMap::new();
    for run in runs {
        let state = load_run(run, LoadMode::ReadOnly).map_err(|e| format!("{}: {e}", run.display()))?;
        let seq: Vec<f64> = state.iterations.iter().map(|r| r.best_so_far).collect();
        let seed_error = state.solvers[0].error().unwrap();
        ensure(
            seq.first().is_none_or(|b| *b <= seed_error) && seq.windows(2).all(|w| w[1] <= w[0]),
            format!("{} best_so_far rose: {seq:?}", run.display()),
        )?;
        *variants.entry(state.variant().name()).or_insert(0) += 1;
    }
    ensure(variants.len() == 3, format!("only saw variants {variants:?}"))?;
    Ok(format!("nonincreasing on all {} runs ({variants:?})", runs.len()))
}

fn pe_kernels() -> Outcome {
    let p = CompressionParams::default();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
    let log1p = compress_log1p(7.0, &CompressionParams { alpha: 2.0, ..p });
    let tanh = compress_tanh(7.0, &CompressionParams { delta: 2.0, tau: 3.0, ..p }, None);
    ensure(rescale_global(10.0, 10.0, 5) == 5.0, "rescale_global(10,10,5)")?;
    ensure(close(log1p, 5.0 + 2.0 * 2f64.ln()), format!("compress_log1p(7) = {log1p}"))?;
    ensure(compress_sqrt(9.0, &CompressionParams { alpha: 1.0, ..p }) == 7.0, "compress_sqrt(9)")?;
    ensure(compress_linear_clamp(7.0, &p) == 6.0, "compress_linear_clamp(7)")?;
    ensure(close(tanh, 4.0 + 2.0 * 1f64.tanh()), format!("compress_tanh(7) = {tanh}"))?;

    let fixture = Matrix::from_rows(vec![vec![-1.0, 2.0], vec![3.0, 3.0], vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
    let mid = lerp_lookup(&fixture, 2.5).unwrap();
    ensure(mid == vec![0.5, 0.5], format!("lerp midpoint {mid:?}"))?;

    let bound = p.m_train as f64 - 1.0 + p.delta;
    for variant in PeVariant::ALL {
        let name = variant.name();
        let edge = variant.identity_boundary(&p);
        let f = |m: f64| variant.demo_coordinate(m, None, &p);
        for i in 0..=1000 {
            let m = edge * i as f64 / 1000.0;
            ensure(f(m) == m, format!("{name}: not the identity at {m}"))?;
        }
        // jump at the edge, extrapolated from three right-hand offsets
        let d: Vec<f64> = [1e-4, 1e-6, 1e-8].iter().map(|h| f(edge + h) - f(edge)).collect();
        let denom = d[0] + d[2] - 2.0 * d[1];
        let jump = if denom.abs() < 1e-300 { d[2] } else { (d[0] * d[2] - d[1] * d[1]) / denom };
        ensure(jump.abs() <= 1e-9, format!("{name}: jump {jump:e} at m = {edge}"))?;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=10_000 {
            let m = i as f64 * 0.01;
            let c = variant.demo_coordinate(m, Some(100.0), &p);
            ensure(c >= prev, format!("{name}: decreasing at m = {m}"))?;
            prev = c;
        }
    }
    for m in [4.5, 10.0, 1e3, 1e9, f64::MAX] {
        let t = compress_tanh(m, &p, None);
        ensure(t < bound, format!("tanh({m}) = {t} reaches the bound {bound}"))?;
    }
    Ok("6 variants: identity, continuity, monotonicity; tanh bound; closed-form values".into())
}

fn resume_determinism(root: &Path, runs: &mut Vec<PathBuf>) -> Outcome {
    let straight = root.join("resume-straight");
    let (engine, mut state) =
        common::seed_run(&straight, 33, VariantKind::Eve, common::config(15), &[SEED_AGENT], Execution::Parallel);
    engine.run(&mut state, None).map_err(|e| e.to_string())?;
    let interrupted = root.join("resume-split");
    let (engine, mut state) =
        common::seed_run(&interrupted, 33, VariantKind::Eve, common::config(15), &[SEED_AGENT], Execution::Parallel);
    engine.run(&mut state, Some(7)).map_err(|e| e.to_string())?;
    drop((engine, state));
    resume(&interrupted.join("run"), None, Execution::Parallel).map_err(|e| e.to_string())?;
    let (a, b) = (common::snapshot(&straight.join("run")), common::snapshot(&interrupted.join("run")));
    runs.push(straight.join("run"));
    runs.push(interrupted.join("run"));
    ensure(a == b, "resumed run directory differs from the uninterrupted one")?;
    Ok(format!("stopped at 7/15, resumed; {} files byte-identical", a.len()))
}

fn main() {
    let scratch = tempfile::tempdir().expect("scratch dir");
    let root = scratch.path();
    let mut gate = Gate { failed: 0 };
    let mut runs = Vec::new();

    gate.check("elo formula", Some(Duration::from_secs(1)), elo_formula);
    gate.check("elo convergence", Some(Duration::from_secs(5)), elo_convergence);
    gate.check("oracle equivalence", Some(Duration::from_secs(30)), || oracle_equivalence(root, &mut runs));
    gate.check("boundary enforcement", None, || boundary_enforcement(root, &mut runs));
    gate.check("variant ablation surrogate", Some(Duration::from_secs(60)), || ablation(root, &mut runs));
    gate.check("resume determinism", None, || resume_determinism(root, &mut runs));
    gate.check("token accounting", None, || token_accounting(&runs));
    gate.check("best-so-far monotonicity", None, || monotone(&runs));
    gate.check("pe kernels", Some(Duration::from_secs(5)), pe_kernels);

    if gate.failed > 0 {
        println!("{} acceptance criteria failed", gate.failed);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
