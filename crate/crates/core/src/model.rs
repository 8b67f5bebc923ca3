//! Persistent records for the two populations and the per-iteration race log.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::accounting::{CostReport, TokenWeights};
use crate::adapters::{AgentSpec, EvaluatorSpec, TokenUsage};
use crate::error::{EveError, Result};
use crate::ids::{AgentId, SolverId};

pub const INITIAL_RATING: f64 = 1500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantKind {
    Eve,
    StaticInitial,
    StaticFinal,
}

impl VariantKind {
    pub const ALL: [VariantKind; 3] = [Self::Eve, Self::StaticInitial, Self::StaticFinal];

    pub fn name(self) -> &'static str {
        match self {
            Self::Eve => "eve",
            Self::StaticInitial => "static-initial",
            Self::StaticFinal => "static-final",
        }
    }

    /// Whether guidance revisions become new agents.
    pub fn expands_agents(self) -> bool {
        self == Self::Eve
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariantKind {
    type Err = EveError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| EveError::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub total_iterations: u32,
    pub working_count: usize,
    pub reference_solver_count: usize,
    pub reference_agent_count: usize,
    pub elo_k: f64,
    pub rank_beta: f64,
    pub tie_epsilon: f64,
    pub allowlist: Vec<String>,
    pub agent: AgentSpec,
    pub evaluator: EvaluatorSpec,
    pub session_timeout_secs: f64,
    pub eval_timeout_secs: f64,
    /// Byte cap on each reference log copied into a workspace.
    pub log_tail_bytes: usize,
    pub token_weights: TokenWeights,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            total_iterations: 15,
            working_count: 2,
            reference_solver_count: 8,
            reference_agent_count: 4,
            elo_k: 32.0,
            rank_beta: 0.7,
            tie_epsilon: 0.0,
            allowlist: Vec::new(),
            agent: AgentSpec::default(),
            evaluator: EvaluatorSpec::default(),
            session_timeout_secs: 600.0,
            eval_timeout_secs: 600.0,
            log_tail_bytes: 16 * 1024,
            token_weights: TokenWeights::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(EveError::Config(msg.to_string()));
        if self.working_count < 1 {
            return bad("working_count must be at least 1");
        }
        if !(self.elo_k.is_finite() && self.elo_k > 0.0) {
            return bad("elo_k must be positive");
        }
        if !(self.rank_beta.is_finite() && self.rank_beta >= 0.0) {
            return bad("rank_beta must be finite and nonnegative");
        }
        if !(self.tie_epsilon.is_finite() && self.tie_epsilon >= 0.0) {
            return bad("tie_epsilon must be finite and nonnegative");
        }
        if self.allowlist.is_empty() {
            return bad("allowlist must not be empty");
        }
        for p in &self.allowlist {
            let path = std::path::Path::new(p);
            let escapes = path
                .components()
                .any(|c| !matches!(c, std::path::Component::Normal(_)));
            if p.is_empty() || escapes || p.starts_with(crate::workspace::EVE_DIR) {
                return Err(EveError::Config(format!(
                    "allowlist entry {p:?} must be a plain relative path outside .eve/"
                )));
            }
        }
        if !(self.session_timeout_secs > 0.0 && self.eval_timeout_secs > 0.0) {
            return bad("timeouts must be positive");
        }
        self.token_weights.validate()?;
        self.agent.validate()?;
        self.evaluator.validate()
    }
}

/// Contents of `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub rng_seed: u64,
    pub variant: VariantKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen_guidance_hash: Option<String>,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRecord {
    pub id: SolverId,
    /// Snapshot directory, relative to the run root.
    pub files_ref: String,
    /// Higher is better; the negated mean error. Absent when evaluation failed.
    pub score: Option<f64>,
    pub valid: bool,
    pub origin_iteration: u32,
    pub producer_agent_id: Option<AgentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    #[serde(default)]
    pub per_metric: BTreeMap<String, f64>,
    pub files_hash: String,
    #[serde(skip)]
    pub eval_log: String,
}

impl SolverRecord {
    /// Mean error of a valid solver.
    pub fn error(&self) -> Option<f64> {
        if self.valid {
            self.score.map(|s| 0.0 - s)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: AgentId,
    pub guidance_ref: String,
    pub guidance_hash: String,
    pub rating: f64,
    pub initial_rating: f64,
    pub parent_id: Option<AgentId>,
    pub origin_iteration: u32,
    /// Log files relative to the run root, oldest first.
    pub working_logs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    WorkspaceError,
    SessionFailed,
    TimedOut,
    MissingDoneFlag,
    BoundaryViolation,
    IncompleteSolver,
    EvaluationFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub slot: usize,
    pub agent_id: AgentId,
    pub new_solver_id: Option<SolverId>,
    pub new_agent_id: Option<AgentId>,
    /// Guidance changed but the variant pins the agent population.
    #[serde(default)]
    pub revision_discarded: bool,
    pub session_log_ref: String,
    pub token_usage: TokenUsage,
    pub error: Option<f64>,
    pub failure: Option<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationResult {
    pub iteration: u32,
    pub working_agent_ids: Vec<AgentId>,
    pub reference_solver_ids: Vec<SolverId>,
    pub reference_agent_ids: Vec<AgentId>,
    pub prefill_solver_id: SolverId,
    pub outcomes: Vec<SlotOutcome>,
    /// Slot-indexed; `None` on the diagonal and for pairs with a failed slot.
    pub win_loss: Vec<Vec<Option<f64>>>,
    pub rating_before: BTreeMap<AgentId, f64>,
    pub rating_after: BTreeMap<AgentId, f64>,
    pub best_error: Option<f64>,
    pub best_tag: Option<String>,
    pub best_so_far: f64,
    pub cost: CostReport,
}

impl IterationResult {
    pub fn failed_slots(&self) -> usize {
        self.outcomes.iter().filter(|o| o.failure.is_some()).count()
    }
}

/// Guidance revision ready to join the agent population.
#[derive(Debug, Clone, PartialEq)]
pub struct ProducedAgent {
    pub producer: AgentId,
    pub changed: bool,
    pub guidance_ref: String,
    pub guidance_hash: String,
    pub iteration: u32,
    pub initial_logs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
    pub solvers: Vec<SolverRecord>,
    pub agents: Vec<AgentRecord>,
    pub iterations: Vec<IterationResult>,
}

impl RunState {
    pub fn new(run_dir: PathBuf, manifest: RunManifest) -> Self {
        Self {
            run_dir,
            manifest,
            solvers: Vec::new(),
            agents: Vec::new(),
            iterations: Vec::new(),
        }
    }

    pub fn config(&self) -> &RunConfig {
        &self.manifest.config
    }

    pub fn variant(&self) -> VariantKind {
        self.manifest.variant
    }

    pub fn rng_seed(&self) -> u64 {
        self.manifest.rng_seed
    }

    pub fn last_iteration(&self) -> u32 {
        self.iterations.last().map_or(0, |r| r.iteration)
    }

    pub fn next_solver_id(&self) -> SolverId {
        SolverId(self.solvers.len() as u32)
    }

    pub fn next_agent_id(&self) -> AgentId {
        AgentId(self.agents.len() as u32)
    }

    pub fn solver(&self, id: SolverId) -> Option<&SolverRecord> {
        self.solvers.iter().find(|s| s.id == id)
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentRecord> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn agent_mut(&mut self, id: AgentId) -> Option<&mut AgentRecord> {
        self.agents.iter_mut().find(|a| a.id == id)
    }

    pub fn add_solver(&mut self, record: SolverRecord) -> Result<()> {
        if self.solver(record.id).is_some() {
            return Err(EveError::DuplicateId {
                kind: "solver",
                id: record.id.to_string(),
            });
        }
        if record.valid && !record.score.is_some_and(f64::is_finite) {
            return Err(EveError::InvalidInput(format!(
                "valid solver {} needs a finite score",
                record.id
            )));
        }
        self.solvers.push(record);
        Ok(())
    }

    pub fn add_agent(&mut self, record: AgentRecord) -> Result<()> {
        if self.agent(record.id).is_some() {
            return Err(EveError::DuplicateId {
                kind: "agent",
                id: record.id.to_string(),
            });
        }
        self.agents.push(record);
        Ok(())
    }

    /// Adds one agent per changed revision, inheriting the producer's current
    /// rating. Returns the new ids in input order.
    pub fn expand_agents(&mut self, produced: &[ProducedAgent]) -> Result<Vec<AgentId>> {
        let mut added = Vec::new();
        for p in produced.iter().filter(|p| p.changed) {
            let rating = self
                .agent(p.producer)
                .ok_or_else(|| EveError::UnknownAgent(p.producer.to_string()))?
                .rating;
            let id = self.next_agent_id();
            self.add_agent(AgentRecord {
                id,
                guidance_ref: p.guidance_ref.clone(),
                guidance_hash: p.guidance_hash.clone(),
                rating,
                initial_rating: rating,
                parent_id: Some(p.producer),
                origin_iteration: p.iteration,
                working_logs: p.initial_logs.clone(),
            })?;
            added.push(id);
        }
        Ok(added)
    }

    pub fn valid_solvers(&self) -> impl Iterator<Item = &SolverRecord> {
        self.solvers.iter().filter(|s| s.valid)
    }

    /// Running minimum of valid solver errors created up to `through`.
    pub fn best_so_far(&self, through: u32) -> Result<f64> {
        self.solvers
            .iter()
            .filter(|s| s.origin_iteration <= through)
            .filter_map(SolverRecord::error)
            .min_by(f64::total_cmp)
            .ok_or(EveError::NoValidSolver)
    }

    /// Valid solver with the lowest error; ties go to the older record.
    pub fn best_solver(&self) -> Result<&SolverRecord> {
        self.valid_solvers()
            .min_by(|a, b| a.error().unwrap().total_cmp(&b.error().unwrap()))
            .ok_or(EveError::NoValidSolver)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn solver(id: u32, origin: u32, error: Option<f64>) -> SolverRecord {
        SolverRecord {
            id: SolverId(id),
            files_ref: format!("{}/files", SolverId(id).dir()),
            score: error.map(|e| -e),
            valid: error.is_some(),
            origin_iteration: origin,
            producer_agent_id: None,
            tag: None,
            per_metric: BTreeMap::new(),
            files_hash: String::new(),
            eval_log: String::new(),
        }
    }

    pub fn agent(id: u32, rating: f64) -> AgentRecord {
        AgentRecord {
            id: AgentId(id),
            guidance_ref: format!("{}/guidance", AgentId(id).dir()),
            guidance_hash: format!("h{id}"),
            rating,
            initial_rating: rating,
            parent_id: None,
            origin_iteration: 0,
            working_logs: Vec::new(),
        }
    }

    fn state() -> RunState {
        RunState::new(
            PathBuf::from("/nonexistent"),
            RunManifest {
                rng_seed: 0,
                variant: VariantKind::Eve,
                frozen_guidance_hash: None,
                config: RunConfig::default(),
            },
        )
    }

    #[test]
    fn add_solver_grows_and_rejects_duplicates() {
        let mut s = state();
        s.add_solver(solver(0, 0, Some(0.48))).unwrap();
        assert_eq!(s.solvers.len(), 1);
        let err = s.add_solver(solver(0, 1, Some(0.1))).unwrap_err();
        assert!(matches!(err, EveError::DuplicateId { .. }));
        assert_eq!(s.solvers.len(), 1);
        assert_eq!(s.solvers[0].error(), Some(0.48));
    }

    #[test]
    fn thirty_one_solvers_over_fifteen_races() {
        let mut s = state();
        s.add_solver(solver(0, 0, Some(0.5))).unwrap();
        for n in 1..=15 {
            for _ in 0..2 {
                let id = s.next_solver_id().0;
                s.add_solver(solver(id, n, Some(0.4))).unwrap();
            }
        }
        assert_eq!(s.solvers.len(), 31);
    }

    #[test]
    fn best_so_far_is_running_minimum() {
        let mut s = state();
        assert!(matches!(s.best_so_far(0), Err(EveError::NoValidSolver)));
        for (i, e) in [0.4848, 0.2504, 0.1169, 0.2211].into_iter().enumerate() {
            s.add_solver(solver(i as u32, i as u32, Some(e))).unwrap();
        }
        s.add_solver(solver(4, 2, None)).unwrap();
        assert_eq!(s.best_so_far(0).unwrap(), 0.4848);
        assert_eq!(s.best_so_far(1).unwrap(), 0.2504);
        assert_eq!(s.best_so_far(3).unwrap(), 0.1169);
    }

    #[test]
    fn expand_agents_only_adds_changed() {
        let mut s = state();
        s.add_agent(agent(0, 1516.0)).unwrap();
        s.add_agent(agent(1, 1484.0)).unwrap();
        let mk = |producer, changed| ProducedAgent {
            producer: AgentId(producer),
            changed,
            guidance_ref: "g".into(),
            guidance_hash: "x".into(),
            iteration: 1,
            initial_logs: vec![],
        };
        assert!(s.expand_agents(&[mk(0, false)]).unwrap().is_empty());
        assert_eq!(s.agents.len(), 2);
        let ids = s.expand_agents(&[mk(0, true), mk(1, true)]).unwrap();
        assert_eq!(ids, vec![AgentId(2), AgentId(3)]);
        assert_eq!(s.agents[2].rating, 1516.0);
        assert_eq!(s.agents[2].parent_id, Some(AgentId(0)));
        assert_eq!(s.agents[3].rating, 1484.0);
        assert!(s.expand_agents(&[mk(9, true)]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = RunConfig {
            allowlist: vec!["solver/params.json".into()],
            ..RunConfig::default()
        };
        c.validate().unwrap();
        c.allowlist = vec!["../escape".into()];
        assert!(c.validate().is_err());
        c.allowlist = vec![".eve/x".into()];
        assert!(c.validate().is_err());
        c.allowlist = vec![];
        assert!(c.validate().is_err());
        c.allowlist = vec!["a".into()];
        c.working_count = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in VariantKind::ALL {
            assert_eq!(v.name().parse::<VariantKind>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.name()));
        }
        assert!("bogus".parse::<VariantKind>().is_err());
    }
}
