//! In-process scripted agents over the synthetic landscape.
//!
//! A mock agent reads its directive from the last `<!-- eve-mock: ... -->`
//! marker in the guidance file `directions.md`, e.g.
//! `<!-- eve-mock: axis=1 mode=adversarial -->`. It then writes a candidate
//! parameter file and the `.eve/` outputs exactly as an external agent would.

use std::fs;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    collect_session_outputs, AgentBackend, AgentSessionResult, Landscape, LandscapeConfig, SessionContext,
    SessionFailure, SolverParams, TokenUsage,
};
use crate::error::{EveError, Result};
use crate::fsutil::{to_json_bytes, write_file};
use crate::workspace::{WorkspaceSpec, DONE_FLAG, SESSION_LOG, TOKEN_USAGE};

pub const DIRECTIONS_FILE: &str = "directions.md";
const MARKER: &str = "eve-mock:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockPolicy {
    /// Fixed step along the directed axis.
    Improver,
    /// Step size jittered by multiplicative Gaussian noise.
    Noisy,
    /// Noisy steps; rewrites its own directive when a local probe stalls.
    PhaseAdaptive,
    /// Always writes outside the allowlist.
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockConfig {
    pub policy: MockPolicy,
    pub step: f64,
    pub noise: f64,
    pub landscape: LandscapeConfig,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            policy: MockPolicy::PhaseAdaptive,
            step: 0.02,
            noise: 0.3,
            landscape: LandscapeConfig::default(),
        }
    }
}

impl MockConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.noise.is_finite() && self.noise >= 0.0) {
            return Err(EveError::Config("mock step and noise must be finite".into()));
        }
        self.landscape.validate()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Directive {
    pub axis: usize,
    pub adversarial: bool,
}

impl Directive {
    pub fn marker(&self) -> String {
        let mode = if self.adversarial { " mode=adversarial" } else { "" };
        format!("<!-- {MARKER} axis={}{mode} -->", self.axis)
    }

    /// Last marker in `text`; defaults when none is present.
    pub fn parse(text: &str) -> Self {
        let Some(line) = text.lines().rev().find(|l| l.contains(MARKER)) else {
            return Self::default();
        };
        let body = line.split(MARKER).nth(1).unwrap_or("");
        let mut d = Self::default();
        for token in body.split_whitespace() {
            match token.split_once('=') {
                Some(("axis", v)) => d.axis = v.parse::<usize>().map_or(0, |a| a.min(1)),
                Some(("mode", v)) => d.adversarial = v == "adversarial",
                _ => {}
            }
        }
        d
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MockInput<'a> {
    pub prefill: &'a SolverParams,
    pub directive: Directive,
    pub iteration: u32,
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockDecision {
    pub candidate: SolverParams,
    pub revision: Option<Directive>,
    pub misbehave: bool,
    pub tokens: TokenUsage,
    pub log: String,
}

/// The agent's whole behavior, free of I/O. Random draws happen in a fixed
/// order: optional step noise, then token counts.
pub fn decide<R: Rng + ?Sized>(config: &MockConfig, input: &MockInput<'_>, rng: &mut R) -> MockDecision {
    let jitter = matches!(config.policy, MockPolicy::Noisy | MockPolicy::PhaseAdaptive) && config.noise > 0.0;
    let factor = if jitter {
        let z: f64 = rng.sample(StandardNormal);
        (1.0 + config.noise * z).max(0.2)
    } else {
        1.0
    };
    let axis = input.directive.axis.min(1);
    let step = config.step * factor;
    let mut candidate = input.prefill.clone();
    candidate.x[axis] += step;
    candidate.tag = format!("Axis{axis}Step");

    let landscape = Landscape::new(config.landscape.clone());
    let before = landscape.error(&input.prefill.x);
    let probed = landscape.error(&candidate.x);
    let mut log = format!(
        "iteration {} slot {}: stepped axis {axis} by {step:.5}; local probe {before:.5} -> {probed:.5}\n",
        input.iteration, input.slot
    );
    let revision = (config.policy == MockPolicy::PhaseAdaptive && probed >= before).then(|| {
        let next = Directive {
            axis: 1 - axis,
            ..input.directive
        };
        log.push_str(&format!("probe stalled; revising directions toward axis {}\n", next.axis));
        next
    });
    let misbehave = config.policy == MockPolicy::Adversarial || input.directive.adversarial;
    if misbehave {
        log.push_str("also wrote a helper outside the editable surface\n");
    }

    let cached: u64 = 800_000 + rng.gen_range(0..400_000);
    let tokens = TokenUsage {
        cached_input: cached,
        fresh_input: cached * 6 / 94,
        output: 12_000 + rng.gen_range(0..12_000),
        turns: Some(rng.gen_range(20..60)),
    };
    MockDecision {
        candidate,
        revision,
        misbehave,
        tokens,
        log,
    }
}

/// Text appended to `directions.md` when a revision happens.
pub fn revision_text(from: Directive, to: Directive, iteration: u32, slot: usize) -> String {
    format!(
        "\n## Revision {iteration}.{slot}\nAxis {} steps no longer lower the probe error; move along axis {} next.\n{}\n",
        from.axis,
        to.axis,
        to.marker()
    )
}

#[derive(Debug, Clone)]
pub struct MockAgent {
    config: MockConfig,
}

impl MockAgent {
    pub fn new(config: MockConfig) -> Self {
        Self { config }
    }

    fn act(&self, ws: &WorkspaceSpec, ctx: &SessionContext) -> std::result::Result<(), String> {
        let params_path = ws.root.join(&self.config.landscape.params_path);
        let prefill = SolverParams::read(&params_path).map_err(|e| e.to_string())?;
        let directions = ws.guidance_dir.join(DIRECTIONS_FILE);
        let guidance = fs::read_to_string(&directions).unwrap_or_default();
        let directive = Directive::parse(&guidance);
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        let input = MockInput {
            prefill: &prefill,
            directive,
            iteration: ctx.iteration,
            slot: ctx.slot,
        };
        let d = decide(&self.config, &input, &mut rng);
        let io = |r: Result<()>| r.map_err(|e| e.to_string());
        io(write_file(&params_path, &to_json_bytes(&d.candidate)))?;
        if d.misbehave {
            io(write_file(&ws.root.join("src/sneaky.py"), b"print('outside the surface')\n"))?;
        }
        if let Some(next) = d.revision {
            let text = guidance + &revision_text(directive, next, ctx.iteration, ctx.slot);
            io(write_file(&directions, text.as_bytes()))?;
        }
        io(write_file(&ws.root.join(SESSION_LOG), d.log.as_bytes()))?;
        io(write_file(&ws.root.join(TOKEN_USAGE), &to_json_bytes(&d.tokens)))?;
        io(write_file(&ws.root.join(DONE_FLAG), b""))
    }
}

impl AgentBackend for MockAgent {
    fn run_session(&self, ws: &WorkspaceSpec, ctx: &SessionContext) -> AgentSessionResult {
        let start = Instant::now();
        let outcome = self.act(ws, ctx);
        let (session_log, token_usage, done) = collect_session_outputs(ws);
        let failure = match outcome {
            Err(e) => Some(SessionFailure::NonZeroExit(e)),
            Ok(()) if !done => Some(SessionFailure::MissingDoneFlag),
            Ok(()) => None,
        };
        AgentSessionResult {
            session_log,
            token_usage,
            duration: start.elapsed(),
            failure,
        }
    }
}
