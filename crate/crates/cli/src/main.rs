use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use eve_core::model::{RunConfig, RunManifest, VariantKind};
use eve_core::orchestrator::{select_best_agent, Engine, SeedInputs, VariantMode};
use eve_core::par::Execution;
use eve_core::presets::{synthetic_config, write_synthetic_preset};
use eve_core::report::{render_csv, render_table, rows};
use eve_core::store::{load_run, LoadMode, RunLock};
use eve_core::EveError;

/// `println!` that ignores a closed stdout (e.g. when piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        let mut out = ::std::io::stdout().lock();
        let _ = writeln!(out, $($arg)*);
    }};
}

mod pe;

/// Co-evolves solver file trees and agent guidance trees through seeded races.
#[derive(Debug, Parser)]
#[command(name = "eve", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a run directory and evaluate the seed solver (iteration 0).
    Init(InitArgs),
    /// Run (or resume) iterations up to the configured total or `--iterations`.
    Run(RunArgs),
    /// Per-iteration trajectory as CSV or a table.
    Report(ReportArgs),
    /// Verify hashes and cross references without modifying anything.
    Check(RunDir),
    /// Print the directory of the highest-rated agent.
    BestAgent(RunDir),
    /// Positional-encoding kernels.
    Pe {
        #[command(subcommand)]
        command: pe::PeCommand,
    },
}

#[derive(Debug, Args)]
struct RunDir {
    #[arg(long)]
    run_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Synthetic,
}

#[derive(Debug, Args)]
struct InitArgs {
    #[arg(long)]
    run_dir: PathBuf,
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "eve")]
    variant: VariantKind,
    #[arg(long)]
    iterations: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Agent directory (or bare guidance tree) to freeze for static-final.
    #[arg(long)]
    frozen_agent: Option<PathBuf>,
    /// Replace an existing run directory.
    #[arg(long)]
    force: bool,
    /// Built-in task providing base repository, seed solver and guidance.
    #[arg(long, conflicts_with_all = ["base", "seed_solver", "seed_guidance"])]
    preset: Option<Preset>,
    #[arg(long, requires_all = ["seed_solver", "seed_guidance"])]
    base: Option<PathBuf>,
    #[arg(long)]
    seed_solver: Option<PathBuf>,
    /// Repeat for several seed agents.
    #[arg(long)]
    seed_guidance: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    run_dir: PathBuf,
    /// Stop after this iteration instead of the configured total.
    #[arg(long)]
    iterations: Option<u32>,
    /// Run agent sessions one after another.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Table,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    run_dir: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

/// Failure carrying its exit status: 1 usage/config, 2 integrity, 3 plugin.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<EveError> for Failure {
    fn from(e: EveError) -> Self {
        let code = match &e {
            EveError::Integrity(_) => 2,
            EveError::SeedEvaluation(_) => 3,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn load_config(path: Option<&Path>, preset: Option<Preset>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", p.display())))
        }
        None if preset.is_some() => Ok(synthetic_config()),
        None => Err(usage("--config is required unless --preset is given")),
    }
}

fn init(args: InitArgs) -> Result<(), Failure> {
    let mut config = load_config(args.config.as_deref(), args.preset)?;
    if let Some(n) = args.iterations {
        config.total_iterations = n;
    }
    let preset_dir = tempfile::tempdir().map_err(|e| usage(e.to_string()))?;
    let seeds = match args.preset {
        Some(Preset::Synthetic) => {
            let p = write_synthetic_preset(preset_dir.path())?;
            SeedInputs {
                base_repo: p.base,
                seed_solver: p.seed_solver,
                seed_guidance: vec![p.seed_guidance],
            }
        }
        None => SeedInputs {
            base_repo: args.base.ok_or_else(|| usage("--base or --preset is required"))?,
            seed_solver: args.seed_solver.ok_or_else(|| usage("--seed-solver is required"))?,
            seed_guidance: args.seed_guidance,
        },
    };
    let manifest = RunManifest {
        rng_seed: args.seed,
        variant: args.variant,
        frozen_guidance_hash: None,
        config,
    };
    let mode = VariantMode {
        kind: args.variant,
        frozen_agent_ref: args.frozen_agent,
    };
    let state = Engine::from_manifest(&manifest).seed_run(&args.run_dir, manifest, &mode, &seeds, args.force)?;
    let seed = &state.solvers[0];
    say!(
        "initialized {} ({}, seed {}): seed error {:.4}, {} agent(s)",
        state.run_dir.display(),
        state.variant(),
        state.rng_seed(),
        seed.error().unwrap_or(f64::NAN),
        state.agents.len()
    );
    Ok(())
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let _lock = RunLock::acquire(&args.run_dir)?;
    let mut state = load_run(&args.run_dir, LoadMode::Repair)?;
    let exec = if args.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let engine = Engine::from_manifest(&state.manifest).with_execution(exec);
    let target = args.iterations.unwrap_or(state.config().total_iterations);
    if state.last_iteration() >= target {
        say!("nothing to do: iteration {} already committed", state.last_iteration());
        return Ok(());
    }
    for n in state.last_iteration() + 1..=target {
        engine.run_iteration(&mut state, n)?;
        let r = state.iterations.last().expect("just committed");
        let error = r.best_error.map_or_else(|| "-".to_string(), |e| format!("{e:.4}"));
        say!(
            "iteration {n:>2}: error {error}, best so far {:.4}, {} failed slot(s), {} agent(s)",
            r.best_so_far,
            r.failed_slots(),
            state.agents.len()
        );
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), Failure> {
    let state = load_run(&args.run_dir, LoadMode::ReadOnly)?;
    let rows = rows(&state)?;
    let text = match args.format {
        Format::Csv => render_csv(&rows),
        Format::Table => render_table(&rows),
    };
    say!("{}", text.trim_end_matches('\n'));
    Ok(())
}

fn check(args: RunDir) -> Result<(), Failure> {
    let state = load_run(&args.run_dir, LoadMode::ReadOnly)?;
    say!(
        "ok: {} iteration(s), {} solver(s), {} agent(s)",
        state.last_iteration(),
        state.solvers.len(),
        state.agents.len()
    );
    Ok(())
}

fn best_agent(args: RunDir) -> Result<(), Failure> {
    let state = load_run(&args.run_dir, LoadMode::ReadOnly)?;
    let best = select_best_agent(&state)?;
    eprintln!("agent {} rating {:.2}", best.id, best.rating);
    say!("{}", state.run_dir.join(best.id.dir()).display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Init(a) => init(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
        Command::Check(a) => check(a),
        Command::BestAgent(a) => best_agent(a),
        Command::Pe { command } => pe::run(command).map_err(usage),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
