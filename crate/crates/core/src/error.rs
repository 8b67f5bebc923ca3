use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

/// Problems found while loading a run directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntegrityReport {
    pub problems: Vec<String>,
}

impl IntegrityReport {
    pub fn push(&mut self, problem: impl Into<String>) {
        self.problems.push(problem.into());
    }

    pub fn is_clean(&self) -> bool {
        self.problems.is_empty()
    }
}

impl fmt::Display for IntegrityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} problem(s)", self.problems.len())?;
        for p in &self.problems {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EveError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: malformed json: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("unknown agent {0}")]
    UnknownAgent(String),
    #[error("empty {0} population")]
    EmptyPopulation(&'static str),
    #[error("no valid solver in population")]
    NoValidSolver,
    #[error("selection: {0}")]
    Selection(String),
    #[error("workspace: {0}")]
    Workspace(String),
    #[error("boundary check failed: {0:?}")]
    BoundaryViolation(Vec<String>),
    #[error("seed evaluation failed: {0}")]
    SeedEvaluation(String),
    #[error("run directory integrity check failed: {0}")]
    Integrity(IntegrityReport),
    #[error("run directory {0} is locked by another orchestrator")]
    Locked(PathBuf),
    #[error("run directory {0} already exists (use --force to replace it)")]
    RunExists(PathBuf),
    #[error("iteration {got} requested but the next iteration is {expected}")]
    IterationOrder { expected: u32, got: u32 },
    #[error("{0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, EveError>;

pub(crate) trait IoContext<T> {
    fn at(self, path: &Path) -> Result<T>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn at(self, path: &Path) -> Result<T> {
        self.map_err(|source| EveError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}
