use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{
    aggregate_mean_error, collect_session_outputs, standard_metrics, AgentBackend, AgentSessionResult,
    EvaluationResult, Evaluator, SessionContext, SessionFailure, MANIFEST_ENV,
};
use crate::error::{EveError, Result};
use crate::workspace::{WorkspaceSpec, EVE_DIR};

pub const SCORE_FILE: &str = "score.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandSpec {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

impl CommandSpec {
    pub fn validate(&self) -> Result<()> {
        if self.program.trim().is_empty() {
            return Err(EveError::Config("command program is empty".into()));
        }
        Ok(())
    }

    /// Relative paths with a separator are anchored to the current directory,
    /// since the child runs elsewhere.
    fn resolved_program(&self) -> PathBuf {
        let p = Path::new(&self.program);
        if p.is_relative() && self.program.contains('/') {
            std::env::current_dir().map(|d| d.join(p)).unwrap_or_else(|_| p.to_path_buf())
        } else {
            p.to_path_buf()
        }
    }
}

struct Finished {
    status: Option<ExitStatus>,
    timed_out: bool,
    duration: Duration,
}

/// Runs `cmd` in its own process group; on timeout the whole group is killed.
fn run_with_timeout(mut cmd: Command, timeout: Duration) -> io::Result<Finished> {
    cmd.process_group(0);
    let start = Instant::now();
    let mut child = cmd.spawn()?;
    let pid = child.id() as libc::pid_t;
    let mut sleep = Duration::from_millis(1);
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(Finished {
                status: Some(status),
                timed_out: false,
                duration: start.elapsed(),
            });
        }
        if start.elapsed() >= timeout {
            // SAFETY: signalling a process group we created; no memory is shared.
            unsafe {
                libc::kill(-pid, libc::SIGKILL);
            }
            let _ = child.wait();
            return Ok(Finished {
                status: None,
                timed_out: true,
                duration: start.elapsed(),
            });
        }
        thread::sleep(sleep);
        sleep = (sleep * 2).min(Duration::from_millis(20));
    }
}

fn describe(status: ExitStatus) -> String {
    match status.code() {
        Some(c) => format!("exit status {c}"),
        None => "terminated by signal".into(),
    }
}

#[derive(Debug, Clone)]
pub struct CommandAgent {
    spec: CommandSpec,
}

impl CommandAgent {
    pub fn new(spec: CommandSpec) -> Self {
        Self { spec }
    }
}

impl AgentBackend for CommandAgent {
    fn run_session(&self, ws: &WorkspaceSpec, ctx: &SessionContext) -> AgentSessionResult {
        let eve = ws.root.join(EVE_DIR);
        let stdio = |name: &str| fs::File::create(eve.join(name)).map(Stdio::from);
        let manifest = fs::canonicalize(&ws.task_manifest).unwrap_or_else(|_| ws.task_manifest.clone());
        let mut cmd = Command::new(self.spec.resolved_program());
        cmd.args(&self.spec.args)
            .current_dir(&ws.root)
            .env(MANIFEST_ENV, &manifest)
            .env("EVE_ITERATION", ctx.iteration.to_string())
            .env("EVE_SLOT", ctx.slot.to_string())
            .env("EVE_SEED", ctx.seed.to_string())
            .stdin(Stdio::null());
        match (stdio("agent.stdout"), stdio("agent.stderr")) {
            (Ok(out), Ok(err)) => {
                cmd.stdout(out).stderr(err);
            }
            _ => {
                cmd.stdout(Stdio::null()).stderr(Stdio::null());
            }
        }
        let finished = run_with_timeout(cmd, ctx.timeout);
        let (session_log, token_usage, done) = collect_session_outputs(ws);
        let (duration, failure) = match finished {
            Err(e) => (Duration::ZERO, Some(SessionFailure::Spawn(e.to_string()))),
            Ok(f) if f.timed_out => (f.duration, Some(SessionFailure::TimedOut)),
            Ok(Finished {
                status: Some(s),
                duration,
                ..
            }) if !s.success() => (duration, Some(SessionFailure::NonZeroExit(describe(s)))),
            Ok(f) if !done => (f.duration, Some(SessionFailure::MissingDoneFlag)),
            Ok(f) => (f.duration, None),
        };
        AgentSessionResult {
            session_log,
            token_usage,
            duration,
            failure,
        }
    }
}

#[derive(Debug, Deserialize)]
struct ScoreFile {
    error_mean: Option<f64>,
    #[serde(default)]
    per_metric: BTreeMap<String, f64>,
    log: Option<String>,
    tag: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CommandEvaluator {
    spec: CommandSpec,
}

impl CommandEvaluator {
    pub fn new(spec: CommandSpec) -> Self {
        Self { spec }
    }

    fn parse(bytes: &[u8], fallback_log: String) -> EvaluationResult {
        let parsed: ScoreFile = match serde_json::from_slice(bytes) {
            Ok(p) => p,
            Err(e) => return EvaluationResult::failure(format!("unparsable {SCORE_FILE}: {e}\n{fallback_log}")),
        };
        let error_mean = match parsed.error_mean {
            Some(e) => Ok(e),
            None => match standard_metrics(&parsed.per_metric) {
                Some(v) => aggregate_mean_error(&v).map_err(|e| e.to_string()),
                None => Err("no error_mean and no e_1..e_10 metrics".to_string()),
            },
        };
        match error_mean {
            Ok(e) if e.is_finite() && e >= 0.0 => {
                EvaluationResult::success(e, parsed.per_metric, parsed.log.unwrap_or(fallback_log), parsed.tag)
            }
            Ok(e) => EvaluationResult::failure(format!("error_mean {e} is not a finite nonnegative number")),
            Err(msg) => EvaluationResult::failure(format!("{msg}\n{fallback_log}")),
        }
    }
}

impl Evaluator for CommandEvaluator {
    fn evaluate(&self, solver_dir: &Path, timeout: Duration) -> EvaluationResult {
        let scratch = match tempfile::tempdir() {
            Ok(d) => d,
            Err(e) => return EvaluationResult::failure(format!("cannot create evaluator scratch dir: {e}")),
        };
        let dir = scratch.path();
        let solver = fs::canonicalize(solver_dir).unwrap_or_else(|_| solver_dir.to_path_buf());
        let score_path = dir.join(SCORE_FILE);
        let mut cmd = Command::new(self.spec.resolved_program());
        cmd.args(&self.spec.args)
            .arg(&solver)
            .current_dir(dir)
            .env("EVE_SCORE_OUT", &score_path)
            .stdin(Stdio::null());
        let out_path = dir.join("evaluator.out");
        match fs::File::create(&out_path).and_then(|f| Ok((f.try_clone()?, f))) {
            Ok((a, b)) => {
                cmd.stdout(a).stderr(b);
            }
            Err(_) => {
                cmd.stdout(Stdio::null()).stderr(Stdio::null());
            }
        }
        let finished = run_with_timeout(cmd, timeout);
        let output = fs::read(&out_path)
            .map(|b| String::from_utf8_lossy(&b).into_owned())
            .unwrap_or_default();
        match finished {
            Err(e) => EvaluationResult::failure(format!("cannot start evaluator: {e}")),
            Ok(f) if f.timed_out => EvaluationResult::failure(format!("evaluator timed out\n{output}")),
            Ok(Finished { status: Some(s), .. }) if !s.success() => {
                EvaluationResult::failure(format!("evaluator {}\n{output}", describe(s)))
            }
            Ok(_) => match fs::read(&score_path) {
                Ok(bytes) => Self::parse(&bytes, output),
                Err(_) => EvaluationResult::failure(format!("evaluator wrote no {SCORE_FILE}\n{output}")),
            },
        }
    }
}
