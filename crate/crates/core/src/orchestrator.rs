//! The race loop: sample, build workspaces, run sessions, extract, evaluate,
//! rate, expand, persist.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::accounting::iteration_cost;
use crate::adapters::{AgentBackend, AgentSessionResult, EvaluationResult, Evaluator, SessionContext, SessionFailure};
use crate::error::{EveError, IoContext, Result};
use crate::fsutil::{copy_tree, tree_digest};
use crate::ids::{AgentId, SolverId};
use crate::model::{
    AgentRecord, Failure, FailureKind, IterationResult, ProducedAgent, RunManifest, RunState, SlotOutcome, SolverRecord,
    VariantKind, INITIAL_RATING,
};
use crate::par::{par_map, Execution};
use crate::rating::{competition, elo_update, match_outcomes};
use crate::rng::{stream, stream_seed, Purpose};
use crate::selection::{sample_reference_agents, sample_reference_solvers, sample_working_agents};
use crate::store::{self, LoadMode, RunLock, BASE_DIR};
use crate::workspace::{
    boundary_check, build_workspace, extract_agent_revision, extract_solver, ReferenceAgent, ReferenceSolver,
    WorkspaceInputs,
};

/// How a variant treats the agent population.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantPolicy {
    pub expand_agents: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantMode {
    pub kind: VariantKind,
    /// Agent directory (with `guidance/`, `logs/`, `meta.json`) or a bare
    /// guidance tree. Required for static-final.
    pub frozen_agent_ref: Option<PathBuf>,
}

impl VariantMode {
    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.frozen_agent_ref) {
            (VariantKind::StaticFinal, None) => Err(EveError::Config("static-final needs a frozen agent".into())),
            (VariantKind::StaticFinal, Some(p)) if !p.is_dir() => {
                Err(EveError::Config(format!("frozen agent {} is not a directory", p.display())))
            }
            (VariantKind::Eve | VariantKind::StaticInitial, Some(_)) => Err(EveError::Config(format!(
                "a frozen agent only applies to static-final, not {}",
                self.kind
            ))),
            _ => Ok(()),
        }
    }
}

pub fn apply_variant(mode: &VariantMode) -> Result<VariantPolicy> {
    mode.validate()?;
    Ok(VariantPolicy {
        expand_agents: mode.kind.expands_agents(),
    })
}

/// Highest rating; ties go to the most recent agent.
pub fn select_best_agent(state: &RunState) -> Result<&AgentRecord> {
    state
        .agents
        .iter()
        .max_by(|a, b| a.rating.total_cmp(&b.rating).then(a.id.cmp(&b.id)))
        .ok_or(EveError::EmptyPopulation("agent"))
}

#[derive(Debug, Clone)]
pub struct SeedInputs {
    pub base_repo: PathBuf,
    pub seed_solver: PathBuf,
    pub seed_guidance: Vec<PathBuf>,
}

pub struct Engine {
    agent: Box<dyn AgentBackend>,
    evaluator: Box<dyn Evaluator>,
    execution: Execution,
    scratch_root: Option<PathBuf>,
}

struct SlotJob {
    slot: usize,
    agent_id: AgentId,
    guidance_dir: PathBuf,
    guidance_hash: String,
}

struct SlotRun {
    slot: usize,
    agent_id: AgentId,
    session: Option<AgentSessionResult>,
    failure: Option<Failure>,
    solver: Option<(PathBuf, String, EvaluationResult)>,
    revision: Option<(PathBuf, String)>,
}

fn failure(kind: FailureKind, detail: impl Into<String>) -> Failure {
    Failure {
        kind,
        detail: detail.into(),
        violations: Vec::new(),
    }
}

fn read_logs(run_dir: &Path, refs: &[String]) -> String {
    refs.iter()
        .filter_map(|r| fs::read_to_string(run_dir.join(r)).ok())
        .collect::<Vec<_>>()
        .join("\n")
}

impl Engine {
    pub fn new(agent: Box<dyn AgentBackend>, evaluator: Box<dyn Evaluator>) -> Self {
        Self {
            agent,
            evaluator,
            execution: Execution::default(),
            scratch_root: None,
        }
    }

    pub fn from_manifest(manifest: &RunManifest) -> Self {
        Self::new(manifest.config.agent.build(), manifest.config.evaluator.build())
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    /// Where per-iteration workspaces are created (defaults to the system temp dir).
    pub fn with_scratch_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.scratch_root = Some(root.into());
        self
    }

    pub fn evaluator(&self) -> &dyn Evaluator {
        self.evaluator.as_ref()
    }

    /// Creates the run directory and evaluates the seed (iteration 0).
    pub fn seed_run(
        &self,
        run_dir: &Path,
        mut manifest: RunManifest,
        mode: &VariantMode,
        seeds: &SeedInputs,
        force: bool,
    ) -> Result<RunState> {
        manifest.config.validate()?;
        if mode.kind != manifest.variant {
            return Err(EveError::Config("variant mode does not match the manifest".into()));
        }
        apply_variant(mode)?;
        let guidance: Vec<PathBuf> = match mode.kind {
            VariantKind::StaticFinal => vec![mode.frozen_agent_ref.clone().expect("validated")],
            _ => seeds.seed_guidance.clone(),
        };
        if guidance.is_empty() {
            return Err(EveError::Config("at least one seed guidance tree is required".into()));
        }
        if mode.kind == VariantKind::StaticInitial && guidance.len() != 1 {
            return Err(EveError::Config("static-initial pins exactly one seed agent".into()));
        }
        if run_dir.exists() {
            if !force {
                return Err(EveError::RunExists(run_dir.to_path_buf()));
            }
            fs::remove_dir_all(run_dir).at(run_dir)?;
        }
        let name = run_dir
            .file_name()
            .ok_or_else(|| EveError::InvalidInput(format!("bad run directory {}", run_dir.display())))?
            .to_string_lossy()
            .into_owned();
        let parent = run_dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent).at(parent)?;
        let staging = parent.join(format!(".{name}.init"));
        if staging.exists() {
            fs::remove_dir_all(&staging).at(&staging)?;
        }
        let built = self.populate_seed(&staging, &mut manifest, mode, seeds, &guidance);
        if let Err(e) = built {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
        fs::rename(&staging, run_dir).at(run_dir)?;
        store::load_run(run_dir, LoadMode::ReadOnly)
    }

    fn populate_seed(
        &self,
        staging: &Path,
        manifest: &mut RunManifest,
        mode: &VariantMode,
        seeds: &SeedInputs,
        guidance: &[PathBuf],
    ) -> Result<()> {
        let cfg = &manifest.config;
        if !seeds.base_repo.is_dir() {
            return Err(EveError::Config(format!("base repository {} not found", seeds.base_repo.display())));
        }
        copy_tree(&seeds.base_repo, &staging.join(BASE_DIR))?;

        let scratch = tempfile::tempdir().map_err(|e| EveError::Workspace(e.to_string()))?;
        let files = scratch.path().join("files");
        fs::create_dir_all(&files).at(&files)?;
        for entry in &cfg.allowlist {
            let src = seeds.seed_solver.join(entry);
            if !src.exists() {
                return Err(EveError::Config(format!(
                    "seed solver {} lacks allowlisted path {entry}",
                    seeds.seed_solver.display()
                )));
            }
            let dst = files.join(entry);
            if src.is_dir() {
                copy_tree(&src, &dst)?;
            } else {
                crate::fsutil::copy_file(&src, &dst)?;
            }
        }
        let eval = self
            .evaluator
            .evaluate(&files, Duration::from_secs_f64(cfg.eval_timeout_secs));
        if !eval.ok {
            return Err(EveError::SeedEvaluation(eval.log));
        }
        let seed = SolverRecord {
            id: SolverId(0),
            files_ref: store::solver_files_ref(SolverId(0)),
            score: eval.score,
            valid: true,
            origin_iteration: 0,
            producer_agent_id: None,
            tag: eval.tag,
            per_metric: eval.per_metric,
            files_hash: tree_digest(&files)?,
            eval_log: eval.log,
        };
        store::write_solver(staging, &seed, &files)?;

        for (i, src) in guidance.iter().enumerate() {
            let id = AgentId(i as u32);
            let (guidance_dir, logs) = import_agent(src)?;
            if !guidance_dir.is_dir() {
                return Err(EveError::Config(format!("guidance tree {} not found", guidance_dir.display())));
            }
            let hash = tree_digest(&guidance_dir)?;
            if mode.kind == VariantKind::StaticFinal {
                manifest.frozen_guidance_hash = Some(hash.clone());
            }
            let record = AgentRecord {
                id,
                guidance_ref: store::guidance_ref(id),
                guidance_hash: hash,
                rating: INITIAL_RATING,
                initial_rating: INITIAL_RATING,
                parent_id: None,
                origin_iteration: 0,
                working_logs: logs.iter().map(|(n, _)| format!("{}/logs/{n}", id.dir())).collect(),
            };
            store::write_agent(staging, &record, &guidance_dir, &logs)?;
        }
        store::write_manifest(staging, manifest)
    }

    /// Runs iterations until `until` (default: the configured total).
    pub fn run(&self, state: &mut RunState, until: Option<u32>) -> Result<()> {
        let target = until.unwrap_or(state.config().total_iterations);
        while state.last_iteration() < target {
            let n = state.last_iteration() + 1;
            self.run_iteration(state, n)?;
        }
        Ok(())
    }

    pub fn run_iteration(&self, state: &mut RunState, n: u32) -> Result<()> {
        let expected = state.last_iteration() + 1;
        if n != expected {
            return Err(EveError::IterationOrder { expected, got: n });
        }
        let cfg = state.config().clone();
        let seed = state.rng_seed();
        let beta = cfg.rank_beta;
        let run_dir = state.run_dir.clone();

        let working = sample_working_agents(
            &state.agents,
            cfg.working_count,
            beta,
            &mut stream(seed, n, Purpose::WorkingAgents, 0),
        )?;
        let ref_solver_ids = sample_reference_solvers(
            &state.solvers,
            cfg.reference_solver_count,
            beta,
            &mut stream(seed, n, Purpose::ReferenceSolvers, 0),
        )?;
        let ref_agent_ids = sample_reference_agents(
            &state.agents,
            cfg.reference_agent_count,
            beta,
            &mut stream(seed, n, Purpose::ReferenceAgents, 0),
        )?;
        let prefill_id = match ref_solver_ids.first() {
            Some(id) => *id,
            None => state.best_solver()?.id,
        };

        let reference_solver = |id: SolverId| {
            let s = state.solver(id).expect("sampled from population");
            ReferenceSolver {
                id,
                files_dir: run_dir.join(&s.files_ref),
                score: s.score.expect("valid solvers carry scores"),
                eval_log: s.eval_log.clone(),
            }
        };
        let prefill = reference_solver(prefill_id);
        let ref_solvers: Vec<_> = ref_solver_ids.iter().map(|id| reference_solver(*id)).collect();
        let ref_agents: Vec<_> = ref_agent_ids
            .iter()
            .map(|id| {
                let a = state.agent(*id).expect("sampled from population");
                ReferenceAgent {
                    id: *id,
                    guidance_dir: run_dir.join(&a.guidance_ref),
                    rating: a.rating,
                    log: read_logs(&run_dir, &a.working_logs),
                }
            })
            .collect();
        let jobs: Vec<SlotJob> = working
            .iter()
            .enumerate()
            .map(|(slot, id)| {
                let a = state.agent(*id).expect("sampled from population");
                SlotJob {
                    slot,
                    agent_id: *id,
                    guidance_dir: run_dir.join(&a.guidance_ref),
                    guidance_hash: a.guidance_hash.clone(),
                }
            })
            .collect();

        let scratch = match &self.scratch_root {
            Some(root) => {
                fs::create_dir_all(root).at(root)?;
                tempfile::Builder::new().prefix("eve-race-").tempdir_in(root)
            }
            None => tempfile::Builder::new().prefix("eve-race-").tempdir(),
        }
        .map_err(|e| EveError::Workspace(e.to_string()))?;
        let base_repo = run_dir.join(BASE_DIR);
        let shared = SlotShared {
            iteration: n,
            run_seed: seed,
            scratch: scratch.path(),
            base_repo: &base_repo,
            prefill: &prefill,
            ref_solvers: &ref_solvers,
            ref_agents: &ref_agents,
            allowlist: &cfg.allowlist,
            log_tail_bytes: cfg.log_tail_bytes,
            session_timeout: Duration::from_secs_f64(cfg.session_timeout_secs),
            eval_timeout: Duration::from_secs_f64(cfg.eval_timeout_secs),
        };
        let runs = par_map(self.execution, jobs, |job| self.execute_slot(&shared, job));

        let policy = VariantPolicy {
            expand_agents: state.variant().expands_agents(),
        };
        self.commit(state, n, policy, Committed {
            working,
            ref_solver_ids,
            ref_agent_ids,
            prefill_id,
            runs,
        })
    }

    fn execute_slot(&self, shared: &SlotShared<'_>, job: SlotJob) -> SlotRun {
        let mut run = SlotRun {
            slot: job.slot,
            agent_id: job.agent_id,
            session: None,
            failure: None,
            solver: None,
            revision: None,
        };
        let slot_dir = shared.scratch.join(format!("slot-{:02}", job.slot));
        let inputs = WorkspaceInputs {
            iteration: shared.iteration,
            base_repo: shared.base_repo,
            prefill: shared.prefill,
            reference_solvers: shared.ref_solvers,
            reference_agents: shared.ref_agents,
            guidance_dir: &job.guidance_dir,
            allowlist: shared.allowlist,
            log_tail_bytes: shared.log_tail_bytes,
        };
        let ws = match build_workspace(&slot_dir.join("workspace"), &inputs) {
            Ok(ws) => ws,
            Err(e) => {
                run.failure = Some(failure(FailureKind::WorkspaceError, e.to_string()));
                return run;
            }
        };
        let ctx = SessionContext {
            iteration: shared.iteration,
            slot: job.slot,
            seed: stream_seed(shared.run_seed, shared.iteration, Purpose::Session, job.slot),
            timeout: shared.session_timeout,
        };
        let session = self.agent.run_session(&ws, &ctx);
        let session_failure = session.failure.clone();
        run.session = Some(session);
        if let Some(f) = session_failure {
            run.failure = Some(match f {
                SessionFailure::TimedOut => failure(FailureKind::TimedOut, "session exceeded its timeout"),
                SessionFailure::MissingDoneFlag => failure(FailureKind::MissingDoneFlag, "agent did not write .eve/done"),
                SessionFailure::Spawn(m) | SessionFailure::NonZeroExit(m) => failure(FailureKind::SessionFailed, m),
            });
            return run;
        }
        let report = match boundary_check(&ws) {
            Ok(r) => r,
            Err(e) => {
                run.failure = Some(failure(FailureKind::WorkspaceError, e.to_string()));
                return run;
            }
        };
        if !report.passed {
            run.failure = Some(Failure {
                kind: FailureKind::BoundaryViolation,
                detail: format!("{} path(s) changed outside the allowlist", report.violations.len()),
                violations: report.violations,
            });
            return run;
        }
        match extract_agent_revision(&ws, &job.guidance_hash) {
            Ok(rev) if rev.changed => run.revision = Some((ws.guidance_dir.clone(), rev.guidance_hash)),
            Ok(_) => {}
            Err(e) => log::warn!("slot {}: cannot hash revised guidance: {e}", job.slot),
        }
        let solver_dir = slot_dir.join("solver");
        match extract_solver(&ws, &report, &solver_dir) {
            Ok(hash) => {
                let eval = self.evaluator.evaluate(&solver_dir, shared.eval_timeout);
                if !eval.ok {
                    run.failure = Some(failure(FailureKind::EvaluationFailed, eval.log.clone()));
                }
                run.solver = Some((solver_dir, hash, eval));
            }
            Err(e) => run.failure = Some(failure(FailureKind::IncompleteSolver, e.to_string())),
        }
        run
    }

    fn commit(&self, state: &mut RunState, n: u32, policy: VariantPolicy, c: Committed) -> Result<()> {
        let run_dir = state.run_dir.clone();
        let cfg = state.config().clone();
        let mut errors = vec![None; c.runs.len()];
        let mut outcomes = Vec::with_capacity(c.runs.len());
        let mut sessions = Vec::with_capacity(c.runs.len());
        let mut new_logs: Vec<(AgentId, String)> = Vec::new();

        for run in &c.runs {
            let log_text = run.session.as_ref().map_or("", |s| s.session_log.as_str());
            let tokens = run.session.as_ref().map(|s| s.token_usage).unwrap_or_default();
            sessions.push(tokens);
            let log_ref = store::session_log_ref(run.agent_id, n, run.slot);
            crate::fsutil::write_atomic(&run_dir.join(&log_ref), log_text.as_bytes())?;
            new_logs.push((run.agent_id, log_ref.clone()));

            let mut new_solver_id = None;
            if let Some((dir, hash, eval)) = &run.solver {
                let id = state.next_solver_id();
                let record = SolverRecord {
                    id,
                    files_ref: store::solver_files_ref(id),
                    score: eval.score,
                    valid: eval.ok,
                    origin_iteration: n,
                    producer_agent_id: Some(run.agent_id),
                    tag: eval.tag.clone(),
                    per_metric: eval.per_metric.clone(),
                    files_hash: hash.clone(),
                    eval_log: eval.log.clone(),
                };
                store::write_solver(&run_dir, &record, dir)?;
                errors[run.slot] = record.error();
                state.add_solver(record)?;
                new_solver_id = Some(id);
            }
            outcomes.push(SlotOutcome {
                slot: run.slot,
                agent_id: run.agent_id,
                new_solver_id,
                new_agent_id: None,
                revision_discarded: false,
                session_log_ref: log_ref,
                token_usage: tokens,
                error: errors[run.slot],
                failure: run.failure.clone(),
            });
        }
        for (agent, log_ref) in new_logs {
            state
                .agent_mut(agent)
                .ok_or_else(|| EveError::UnknownAgent(agent.to_string()))?
                .working_logs
                .push(log_ref);
        }

        let win_loss = competition(&errors, cfg.tie_epsilon);
        let matches = match_outcomes(&c.working, &win_loss);
        let rating_before: BTreeMap<AgentId, f64> = c
            .working
            .iter()
            .map(|id| (*id, state.agent(*id).expect("working agent exists").rating))
            .collect();
        let rating_after = elo_update(&rating_before, &matches, cfg.elo_k)?;
        for (id, r) in &rating_after {
            state.agent_mut(*id).expect("working agent exists").rating = *r;
        }

        let mut produced = Vec::new();
        for run in &c.runs {
            let Some((guidance_dir, hash)) = &run.revision else { continue };
            if !policy.expand_agents {
                outcomes[run.slot].revision_discarded = true;
                continue;
            }
            let id = AgentId(state.agents.len() as u32 + produced.len() as u32);
            let log_name = format!("{n:04}-{:02}.log", run.slot);
            let log_text = run.session.as_ref().map_or("", |s| s.session_log.as_str());
            let rating = state.agent(run.agent_id).expect("producer exists").rating;
            let record = AgentRecord {
                id,
                guidance_ref: store::guidance_ref(id),
                guidance_hash: hash.clone(),
                rating,
                initial_rating: rating,
                parent_id: Some(run.agent_id),
                origin_iteration: n,
                working_logs: vec![format!("{}/logs/{log_name}", id.dir())],
            };
            store::write_agent(&run_dir, &record, guidance_dir, &[(log_name, log_text.as_bytes().to_vec())])?;
            outcomes[run.slot].new_agent_id = Some(id);
            produced.push(ProducedAgent {
                producer: run.agent_id,
                changed: true,
                guidance_ref: record.guidance_ref,
                guidance_hash: record.guidance_hash,
                iteration: n,
                initial_logs: record.working_logs,
            });
        }
        let added = state.expand_agents(&produced)?;
        debug_assert_eq!(
            added,
            outcomes.iter().filter_map(|o| o.new_agent_id).collect::<Vec<_>>()
        );

        let prior = state.iterations.last().map_or(0.0, |r| r.cost.cumulative_teq);
        let cost = iteration_cost(&sessions, prior, &cfg.token_weights);
        let best = outcomes
            .iter()
            .filter_map(|o| o.error.map(|e| (e, o.new_solver_id)))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        let best_tag = best
            .and_then(|(_, id)| id)
            .and_then(|id| state.solver(id))
            .and_then(|s| s.tag.clone());
        let result = IterationResult {
            iteration: n,
            working_agent_ids: c.working.clone(),
            reference_solver_ids: c.ref_solver_ids,
            reference_agent_ids: c.ref_agent_ids,
            prefill_solver_id: c.prefill_id,
            outcomes,
            win_loss,
            rating_before,
            rating_after: rating_after.clone(),
            best_error: best.map(|b| b.0),
            best_tag,
            best_so_far: state.best_so_far(n)?,
            cost,
        };
        store::write_result(&run_dir, &result)?;
        for id in rating_after.keys() {
            store::write_agent_meta(&run_dir, state.agent(*id).expect("working agent exists"))?;
        }
        state.iterations.push(result);
        Ok(())
    }
}

struct SlotShared<'a> {
    iteration: u32,
    run_seed: u64,
    scratch: &'a Path,
    base_repo: &'a Path,
    prefill: &'a ReferenceSolver,
    ref_solvers: &'a [ReferenceSolver],
    ref_agents: &'a [ReferenceAgent],
    allowlist: &'a [String],
    log_tail_bytes: usize,
    session_timeout: Duration,
    eval_timeout: Duration,
}

struct Committed {
    working: Vec<AgentId>,
    ref_solver_ids: Vec<SolverId>,
    ref_agent_ids: Vec<AgentId>,
    prefill_id: SolverId,
    runs: Vec<SlotRun>,
}

type ImportedLogs = Vec<(String, Vec<u8>)>;

/// Guidance tree and log files of an agent to import. Accepts an agent
/// directory from another run or a bare guidance tree.
fn import_agent(src: &Path) -> Result<(PathBuf, ImportedLogs)> {
    let guidance = src.join("guidance");
    if !(guidance.is_dir() && src.join(store::META_FILE).is_file()) {
        return Ok((src.to_path_buf(), Vec::new()));
    }
    let mut logs = Vec::new();
    let logs_dir = src.join("logs");
    if logs_dir.is_dir() {
        let mut names: Vec<_> = fs::read_dir(&logs_dir)
            .at(&logs_dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| !n.starts_with('.'))
            .collect();
        names.sort();
        for name in names {
            let p = logs_dir.join(&name);
            logs.push((format!("0000-import-{name}"), fs::read(&p).at(&p)?));
        }
    }
    Ok((guidance, logs))
}

/// Locks, loads (repairing leftovers of an interrupted iteration) and runs.
pub fn resume(run_dir: &Path, until: Option<u32>, execution: Execution) -> Result<RunState> {
    let _lock = RunLock::acquire(run_dir)?;
    let mut state = store::load_run(run_dir, LoadMode::Repair)?;
    let engine = Engine::from_manifest(&state.manifest).with_execution(execution);
    engine.run(&mut state, until)?;
    Ok(state)
}
