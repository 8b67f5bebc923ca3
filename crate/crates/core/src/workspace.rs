//! Per-session workspaces: materialization, boundary checking, extraction.
//!
//! Layout of a built workspace:
//!
//! ```text
//! <root>/                      base repository, allowlist overlaid from the prefill solver
//! <root>/.eve/task.json        task manifest (all paths relative to <root>)
//! <root>/.eve/guidance/        working agent's guidance tree (editable)
//! <root>/.eve/references/      reference solvers and agents plus their manifests
//! <root>/.eve/session.log      written by the agent
//! <root>/.eve/tokens.json      written by the agent
//! <root>/.eve/done             written by the agent when it finishes
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{EveError, IoContext, Result};
use crate::fsutil::{self, copy_file, copy_tree, tree_digest, tree_hashes, write_file, write_json};
use crate::ids::{AgentId, SolverId};

pub const EVE_DIR: &str = ".eve";
pub const TASK_MANIFEST: &str = ".eve/task.json";
pub const GUIDANCE_DIR: &str = ".eve/guidance";
pub const REFERENCES_DIR: &str = ".eve/references";
pub const SESSION_LOG: &str = ".eve/session.log";
pub const TOKEN_USAGE: &str = ".eve/tokens.json";
pub const DONE_FLAG: &str = ".eve/done";

/// A solver shown to the agent (the prefill is one of these).
#[derive(Debug, Clone)]
pub struct ReferenceSolver {
    pub id: SolverId,
    pub files_dir: PathBuf,
    pub score: f64,
    pub eval_log: String,
}

#[derive(Debug, Clone)]
pub struct ReferenceAgent {
    pub id: AgentId,
    pub guidance_dir: PathBuf,
    pub rating: f64,
    /// Concatenated working logs; truncated to the byte cap when written.
    pub log: String,
}

#[derive(Debug, Clone)]
pub struct WorkspaceInputs<'a> {
    pub iteration: u32,
    pub base_repo: &'a Path,
    pub prefill: &'a ReferenceSolver,
    pub reference_solvers: &'a [ReferenceSolver],
    pub reference_agents: &'a [ReferenceAgent],
    pub guidance_dir: &'a Path,
    pub allowlist: &'a [String],
    pub log_tail_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverManifestEntry {
    pub id: SolverId,
    pub path: String,
    pub score: f64,
    pub error: f64,
    pub log_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentManifestEntry {
    pub id: AgentId,
    pub guidance_path: String,
    pub rating: f64,
    pub log_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    pub session_log: String,
    pub token_usage: String,
    pub done_flag: String,
}

/// Contents of `.eve/task.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskManifest {
    pub iteration: u32,
    pub allowlist: Vec<String>,
    pub prefill_solver_id: SolverId,
    pub prefill_score: f64,
    pub prefill_error: f64,
    pub references_solvers: Vec<SolverManifestEntry>,
    pub references_agents: Vec<AgentManifestEntry>,
    pub guidance_path: String,
    pub output: OutputPaths,
}

#[derive(Debug, Clone)]
pub struct WorkspaceSpec {
    pub root: PathBuf,
    pub iteration: u32,
    pub prefill_solver_id: SolverId,
    pub reference_solver_manifest: PathBuf,
    pub reference_agent_manifest: PathBuf,
    pub guidance_dir: PathBuf,
    pub allowlist: Vec<String>,
    pub task_manifest: PathBuf,
    pristine: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub changed_paths: Vec<String>,
    pub violations: Vec<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentRevision {
    pub changed: bool,
    pub guidance_hash: String,
}

fn allowed(path: &str, allowlist: &[String]) -> bool {
    allowlist
        .iter()
        .any(|a| path == a || path.strip_prefix(a.as_str()).is_some_and(|rest| rest.starts_with('/')))
}

fn is_eve(path: &str) -> bool {
    path == EVE_DIR || path.starts_with(".eve/")
}

fn remove_path(path: &Path) -> Result<()> {
    match fs::symlink_metadata(path) {
        Ok(m) if m.is_dir() => fs::remove_dir_all(path).at(path),
        Ok(_) => fs::remove_file(path).at(path),
        Err(_) => Ok(()),
    }
}

/// Copies one allowlist entry (file or directory) between roots.
fn copy_entry(src_root: &Path, dst_root: &Path, entry: &str) -> Result<bool> {
    let src = src_root.join(entry);
    let dst = dst_root.join(entry);
    let Ok(meta) = fs::metadata(&src) else {
        return Ok(false);
    };
    remove_path(&dst)?;
    if meta.is_dir() {
        copy_tree(&src, &dst)?;
    } else {
        copy_file(&src, &dst)?;
    }
    Ok(true)
}

pub fn build_workspace(root: &Path, inputs: &WorkspaceInputs<'_>) -> Result<WorkspaceSpec> {
    if root.exists() {
        return Err(EveError::Workspace(format!("{} already exists", root.display())));
    }
    copy_tree(inputs.base_repo, root)?;
    remove_path(&root.join(EVE_DIR))?;
    for entry in inputs.allowlist {
        if !copy_entry(&inputs.prefill.files_dir, root, entry)? {
            return Err(EveError::Workspace(format!(
                "prefill solver {} lacks allowlisted path {entry}",
                inputs.prefill.id
            )));
        }
    }

    let guidance_dir = root.join(GUIDANCE_DIR);
    copy_tree(inputs.guidance_dir, &guidance_dir)?;

    let refs = root.join(REFERENCES_DIR);
    fs::create_dir_all(&refs).at(&refs)?;
    let mut solver_entries = Vec::new();
    for s in inputs.reference_solvers {
        let base = format!("{REFERENCES_DIR}/solvers/{}", s.id);
        let files = format!("{base}/files");
        copy_tree(&s.files_dir, &root.join(&files))?;
        let log_path = format!("{base}/eval.log");
        write_file(&root.join(&log_path), fsutil::tail(&s.eval_log, inputs.log_tail_bytes).as_bytes())?;
        solver_entries.push(SolverManifestEntry {
            id: s.id,
            path: files,
            score: s.score,
            error: 0.0 - s.score,
            log_path,
        });
    }
    let mut agent_entries = Vec::new();
    for a in inputs.reference_agents {
        let base = format!("{REFERENCES_DIR}/agents/{}", a.id);
        let guidance = format!("{base}/guidance");
        copy_tree(&a.guidance_dir, &root.join(&guidance))?;
        let log_path = format!("{base}/log.txt");
        write_file(&root.join(&log_path), fsutil::tail(&a.log, inputs.log_tail_bytes).as_bytes())?;
        agent_entries.push(AgentManifestEntry {
            id: a.id,
            guidance_path: guidance,
            rating: a.rating,
            log_path,
        });
    }
    let reference_solver_manifest = refs.join("solvers.json");
    let reference_agent_manifest = refs.join("agents.json");
    write_json(&reference_solver_manifest, &solver_entries)?;
    write_json(&reference_agent_manifest, &agent_entries)?;

    let task = TaskManifest {
        iteration: inputs.iteration,
        allowlist: inputs.allowlist.to_vec(),
        prefill_solver_id: inputs.prefill.id,
        prefill_score: inputs.prefill.score,
        prefill_error: 0.0 - inputs.prefill.score,
        references_solvers: solver_entries,
        references_agents: agent_entries,
        guidance_path: GUIDANCE_DIR.into(),
        output: OutputPaths {
            session_log: SESSION_LOG.into(),
            token_usage: TOKEN_USAGE.into(),
            done_flag: DONE_FLAG.into(),
        },
    };
    let task_manifest = root.join(TASK_MANIFEST);
    write_json(&task_manifest, &task)?;

    let pristine = tree_hashes(root, is_eve)?;
    Ok(WorkspaceSpec {
        root: root.to_path_buf(),
        iteration: inputs.iteration,
        prefill_solver_id: inputs.prefill.id,
        reference_solver_manifest,
        reference_agent_manifest,
        guidance_dir,
        allowlist: inputs.allowlist.to_vec(),
        task_manifest,
        pristine: Some(pristine),
    })
}

impl WorkspaceSpec {
    /// Drops the pristine snapshot; later boundary checks fail.
    pub fn forget_snapshot(&mut self) {
        self.pristine = None;
    }
}

/// Diffs everything outside `.eve/` against the pristine snapshot.
pub fn boundary_check(ws: &WorkspaceSpec) -> Result<BoundaryReport> {
    let pristine = ws
        .pristine
        .as_ref()
        .ok_or_else(|| EveError::Workspace("pristine snapshot missing".into()))?;
    let now = tree_hashes(&ws.root, is_eve)?;
    let keys: BTreeSet<&String> = pristine.keys().chain(now.keys()).collect();
    let changed_paths: Vec<String> = keys
        .into_iter()
        .filter(|k| pristine.get(*k) != now.get(*k))
        .cloned()
        .collect();
    let violations: Vec<String> = changed_paths
        .iter()
        .filter(|p| !allowed(p, &ws.allowlist))
        .cloned()
        .collect();
    Ok(BoundaryReport {
        passed: violations.is_empty(),
        changed_paths,
        violations,
    })
}

/// Copies the allowlisted paths into `dest` and returns the snapshot digest.
pub fn extract_solver(ws: &WorkspaceSpec, report: &BoundaryReport, dest: &Path) -> Result<String> {
    if !report.passed {
        return Err(EveError::BoundaryViolation(report.violations.clone()));
    }
    fs::create_dir_all(dest).at(dest)?;
    for entry in &ws.allowlist {
        if !copy_entry(&ws.root, dest, entry)? {
            return Err(EveError::Workspace(format!("allowlisted path {entry} was deleted")));
        }
    }
    tree_digest(dest)
}

pub fn extract_agent_revision(ws: &WorkspaceSpec, producer_hash: &str) -> Result<AgentRevision> {
    if !ws.guidance_dir.is_dir() {
        log::warn!("guidance directory removed in {}; treating as unchanged", ws.root.display());
        return Ok(AgentRevision {
            changed: false,
            guidance_hash: producer_hash.to_string(),
        });
    }
    let guidance_hash = tree_digest(&ws.guidance_dir)?;
    Ok(AgentRevision {
        changed: guidance_hash != producer_hash,
        guidance_hash,
    })
}
