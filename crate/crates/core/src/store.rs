//! Run directory persistence.
//!
//! ```text
//! <run>/config.json
//! <run>/base/                                  base repository snapshot
//! <run>/populations/solvers/<id>/{files/, eval.log, meta.json}
//! <run>/populations/agents/<id>/{guidance/, logs/, meta.json}
//! <run>/iterations/<nn>/result.json
//! <run>/run.lock                               present while an orchestrator runs
//! ```
//!
//! An iteration commits when its `result.json` lands (atomic rename). Records
//! and logs from an uncommitted iteration are orphans and are removed on load.

use std::collections::BTreeMap;
use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use crate::error::{EveError, IntegrityReport, IoContext, Result};
use crate::fsutil::{copy_tree, read_json, tree_digest, write_atomic, write_json};
use crate::ids::{iteration_dir, AgentId, SolverId};
use crate::model::{AgentRecord, IterationResult, RunManifest, RunState, SolverRecord};

pub const CONFIG_FILE: &str = "config.json";
pub const BASE_DIR: &str = "base";
pub const SOLVERS_DIR: &str = "populations/solvers";
pub const AGENTS_DIR: &str = "populations/agents";
pub const ITERATIONS_DIR: &str = "iterations";
pub const RESULT_FILE: &str = "result.json";
pub const META_FILE: &str = "meta.json";
pub const EVAL_LOG: &str = "eval.log";
pub const LOCK_FILE: &str = "run.lock";

pub fn solver_files_ref(id: SolverId) -> String {
    format!("{}/files", id.dir())
}

pub fn guidance_ref(id: AgentId) -> String {
    format!("{}/guidance", id.dir())
}

/// Log of the session an agent ran in `slot` of iteration `n`.
pub fn session_log_ref(agent: AgentId, n: u32, slot: usize) -> String {
    format!("{}/logs/{n:04}-{slot:02}.log", agent.dir())
}

fn log_iteration(name: &str) -> Option<u32> {
    name.get(..4)?.parse().ok()
}

/// Exclusive ownership of a run directory; removed on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

fn pid_alive(pid: u32) -> bool {
    Path::new(&format!("/proc/{pid}")).exists()
}

impl RunLock {
    pub fn acquire(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(LOCK_FILE);
        for _ in 0..2 {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    write!(f, "{}", std::process::id()).at(&path)?;
                    return Ok(Self { path });
                }
                Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                    let holder = fs::read_to_string(&path).ok().and_then(|s| s.trim().parse::<u32>().ok());
                    match holder {
                        Some(pid) if pid_alive(pid) => return Err(EveError::Locked(run_dir.to_path_buf())),
                        _ => {
                            log::warn!("removing stale lock {}", path.display());
                            let _ = fs::remove_file(&path);
                        }
                    }
                }
                Err(e) => return Err(e).at(&path),
            }
        }
        Err(EveError::Locked(run_dir.to_path_buf()))
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Moves a fully written staging directory into its final place.
fn publish_dir(staging: &Path, dest: &Path) -> Result<()> {
    if dest.exists() {
        return Err(EveError::Workspace(format!("{} already exists", dest.display())));
    }
    fs::rename(staging, dest).at(dest)
}

fn staging_for(run_dir: &Path, rel: &str) -> PathBuf {
    let p = run_dir.join(rel);
    let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    p.with_file_name(format!(".{name}.tmp"))
}

fn clear(path: &Path) -> Result<()> {
    if path.exists() {
        fs::remove_dir_all(path).at(path)?;
    }
    Ok(())
}

/// Writes a solver record whose files are copied from `files_src`.
pub fn write_solver(run_dir: &Path, record: &SolverRecord, files_src: &Path) -> Result<()> {
    let dir_rel = record.id.dir();
    let staging = staging_for(run_dir, &dir_rel);
    clear(&staging)?;
    copy_tree(files_src, &staging.join("files"))?;
    write_atomic(&staging.join(EVAL_LOG), record.eval_log.as_bytes())?;
    write_json(&staging.join(META_FILE), record)?;
    publish_dir(&staging, &run_dir.join(dir_rel))
}

/// Writes a new agent record: guidance tree plus initial log files.
pub fn write_agent(run_dir: &Path, record: &AgentRecord, guidance_src: &Path, logs: &[(String, Vec<u8>)]) -> Result<()> {
    let dir_rel = record.id.dir();
    let staging = staging_for(run_dir, &dir_rel);
    clear(&staging)?;
    copy_tree(guidance_src, &staging.join("guidance"))?;
    let logs_dir = staging.join("logs");
    fs::create_dir_all(&logs_dir).at(&logs_dir)?;
    for (name, bytes) in logs {
        write_atomic(&logs_dir.join(name), bytes)?;
    }
    write_json(&staging.join(META_FILE), record)?;
    publish_dir(&staging, &run_dir.join(dir_rel))
}

pub fn write_agent_meta(run_dir: &Path, record: &AgentRecord) -> Result<()> {
    write_json(&run_dir.join(record.id.dir()).join(META_FILE), record)
}

/// The commit point of an iteration.
pub fn write_result(run_dir: &Path, result: &IterationResult) -> Result<()> {
    write_json(&run_dir.join(iteration_dir(result.iteration)).join(RESULT_FILE), result)
}

pub fn write_manifest(run_dir: &Path, manifest: &RunManifest) -> Result<()> {
    write_json(&run_dir.join(CONFIG_FILE), manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadMode {
    /// Removes uncommitted leftovers and rewrites stale agent metadata.
    /// Requires holding the run lock.
    Repair,
    /// Ignores uncommitted leftovers; touches nothing.
    ReadOnly,
}

fn sorted_entries(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    let rd = match fs::read_dir(dir) {
        Ok(rd) => rd,
        Err(e) if e.kind() == ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(e).at(dir),
    };
    for entry in rd {
        let entry = entry.at(dir)?;
        out.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
    }
    out.sort();
    Ok(out)
}

struct Loader {
    mode: LoadMode,
    report: IntegrityReport,
}

impl Loader {
    fn discard(&self, path: &Path, why: &str) -> Result<()> {
        if self.mode == LoadMode::Repair {
            log::info!("removing {} ({why})", path.display());
            if path.is_dir() {
                fs::remove_dir_all(path).at(path)?;
            } else {
                fs::remove_file(path).at(path)?;
            }
        }
        Ok(())
    }

    fn iterations(&mut self, run_dir: &Path) -> Result<Vec<IterationResult>> {
        let mut committed = Vec::new();
        let mut partial = Vec::new();
        for (name, path) in sorted_entries(&run_dir.join(ITERATIONS_DIR))? {
            let Ok(n) = name.parse::<u32>() else {
                if name.starts_with('.') {
                    self.discard(&path, "temporary file")?;
                } else {
                    self.report.push(format!("unexpected entry iterations/{name}"));
                }
                continue;
            };
            if path.join(RESULT_FILE).is_file() {
                match read_json::<IterationResult>(&path.join(RESULT_FILE)) {
                    Ok(r) if r.iteration == n => committed.push(r),
                    Ok(r) => self.report.push(format!("iterations/{name} holds iteration {}", r.iteration)),
                    Err(e) => self.report.push(e.to_string()),
                }
            } else {
                partial.push((n, path));
            }
        }
        committed.sort_by_key(|r| r.iteration);
        for (i, r) in committed.iter().enumerate() {
            if r.iteration != i as u32 + 1 {
                self.report.push(format!("iteration {} committed but {} is missing", r.iteration, i + 1));
                break;
            }
        }
        let last = committed.last().map_or(0, |r| r.iteration);
        for (n, path) in partial {
            if n > last {
                self.discard(&path, "uncommitted iteration")?;
            } else {
                self.report.push(format!("iteration {n} lost its result.json"));
            }
        }
        Ok(committed)
    }

    fn solvers(&mut self, run_dir: &Path, last: u32) -> Result<Vec<SolverRecord>> {
        let mut out = Vec::new();
        for (name, path) in sorted_entries(&run_dir.join(SOLVERS_DIR))? {
            if name.starts_with('.') {
                self.discard(&path, "staging directory")?;
                continue;
            }
            let mut rec: SolverRecord = match read_json(&path.join(META_FILE)) {
                Ok(r) => r,
                Err(e) => {
                    self.report.push(format!("solver {name}: {e}"));
                    continue;
                }
            };
            if rec.id.to_string() != name {
                self.report.push(format!("solver directory {name} holds id {}", rec.id));
                continue;
            }
            if rec.origin_iteration > last {
                self.discard(&path, "solver from an uncommitted iteration")?;
                continue;
            }
            match tree_digest(&path.join("files")) {
                Ok(h) if h == rec.files_hash => {}
                Ok(_) => self.report.push(format!("solver {name}: files differ from recorded hash")),
                Err(e) => self.report.push(format!("solver {name}: {e}")),
            }
            rec.eval_log = fs::read_to_string(path.join(EVAL_LOG)).unwrap_or_else(|_| {
                self.report.push(format!("solver {name}: missing {EVAL_LOG}"));
                String::new()
            });
            out.push(rec);
        }
        for (i, s) in out.iter().enumerate() {
            if s.id.0 != i as u32 {
                self.report.push(format!("solver ids are not contiguous at {}", s.id));
                break;
            }
        }
        Ok(out)
    }

    fn agents(&mut self, run_dir: &Path, last: u32) -> Result<Vec<(AgentRecord, bool)>> {
        let mut out = Vec::new();
        for (name, path) in sorted_entries(&run_dir.join(AGENTS_DIR))? {
            if name.starts_with('.') {
                self.discard(&path, "staging directory")?;
                continue;
            }
            let mut rec: AgentRecord = match read_json(&path.join(META_FILE)) {
                Ok(r) => r,
                Err(e) => {
                    self.report.push(format!("agent {name}: {e}"));
                    continue;
                }
            };
            if rec.id.to_string() != name {
                self.report.push(format!("agent directory {name} holds id {}", rec.id));
                continue;
            }
            if rec.origin_iteration > last {
                self.discard(&path, "agent from an uncommitted iteration")?;
                continue;
            }
            match tree_digest(&path.join("guidance")) {
                Ok(h) if h == rec.guidance_hash => {}
                Ok(_) => self.report.push(format!("agent {name}: guidance differs from recorded hash")),
                Err(e) => self.report.push(format!("agent {name}: {e}")),
            }
            let mut logs = Vec::new();
            for (log_name, log_path) in sorted_entries(&path.join("logs"))? {
                match log_iteration(&log_name) {
                    _ if log_name.starts_with('.') => self.discard(&log_path, "temporary file")?,
                    Some(n) if n > last => self.discard(&log_path, "log from an uncommitted iteration")?,
                    Some(_) => logs.push(format!("{}/logs/{log_name}", rec.id.dir())),
                    None => self.report.push(format!("agent {name}: unexpected log {log_name}")),
                }
            }
            let stale = logs != rec.working_logs;
            rec.working_logs = logs;
            out.push((rec, stale));
        }
        for (i, (a, _)) in out.iter().enumerate() {
            if a.id.0 != i as u32 {
                self.report.push(format!("agent ids are not contiguous at {}", a.id));
                break;
            }
        }
        Ok(out)
    }
}

fn check_references(state: &RunState, report: &mut IntegrityReport) {
    match state.solvers.first() {
        Some(s) if s.origin_iteration == 0 && s.valid => {}
        _ => report.push("seed solver 0000 missing or invalid"),
    }
    if state.agents.is_empty() {
        report.push("agent population is empty");
    }
    let last_best = state.iterations.iter().try_fold(f64::INFINITY, |prev, r| {
        (r.best_so_far <= prev).then_some(r.best_so_far)
    });
    if last_best.is_none() {
        report.push("best_so_far increases across iterations");
    }
    for r in &state.iterations {
        let n = r.iteration;
        for id in r.working_agent_ids.iter().chain(&r.reference_agent_ids) {
            if state.agent(*id).is_none() {
                report.push(format!("iteration {n} references unknown agent {id}"));
            }
        }
        for id in r.reference_solver_ids.iter().chain(std::iter::once(&r.prefill_solver_id)) {
            if state.solver(*id).is_none() {
                report.push(format!("iteration {n} references unknown solver {id}"));
            }
        }
        for o in &r.outcomes {
            if let Some(id) = o.new_solver_id {
                if state.solver(id).map(|s| s.origin_iteration) != Some(n) {
                    report.push(format!("iteration {n} lists solver {id} it did not create"));
                }
            }
            if let Some(id) = o.new_agent_id {
                if state.agent(id).map(|a| a.origin_iteration) != Some(n) {
                    report.push(format!("iteration {n} lists agent {id} it did not create"));
                }
            }
        }
    }
}

/// Loads a run directory, verifying hashes and cross references.
pub fn load_run(run_dir: &Path, mode: LoadMode) -> Result<RunState> {
    let manifest: RunManifest = read_json(&run_dir.join(CONFIG_FILE)).map_err(|e| {
        let mut r = IntegrityReport::default();
        r.push(e.to_string());
        EveError::Integrity(r)
    })?;
    let mut loader = Loader {
        mode,
        report: IntegrityReport::default(),
    };
    if !run_dir.join(BASE_DIR).is_dir() {
        loader.report.push("base repository snapshot missing");
    }
    let iterations = loader.iterations(run_dir)?;
    let last = iterations.last().map_or(0, |r| r.iteration);
    let solvers = loader.solvers(run_dir, last)?;
    let agents = loader.agents(run_dir, last)?;

    // Ratings are replayed from committed results; metadata may lag one commit.
    let mut ratings: BTreeMap<AgentId, f64> = agents.iter().map(|(a, _)| (a.id, a.initial_rating)).collect();
    for r in &iterations {
        ratings.extend(r.rating_after.iter().map(|(k, v)| (*k, *v)));
    }
    let mut state = RunState::new(run_dir.to_path_buf(), manifest);
    state.solvers = solvers;
    state.iterations = iterations;
    let mut stale_ids = Vec::new();
    for (mut agent, mut stale) in agents {
        let rating = ratings[&agent.id];
        if rating.to_bits() != agent.rating.to_bits() {
            agent.rating = rating;
            stale = true;
        }
        if stale {
            stale_ids.push(agent.id);
        }
        state.agents.push(agent);
    }
    let mut report = loader.report;
    check_references(&state, &mut report);
    if !report.is_clean() {
        return Err(EveError::Integrity(report));
    }
    if mode == LoadMode::Repair {
        for id in stale_ids {
            write_agent_meta(run_dir, state.agent(id).expect("just loaded"))?;
        }
    }
    Ok(state)
}
