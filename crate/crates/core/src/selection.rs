//! Rank-biased sampling of working agents, reference solvers and reference agents.

use rand::Rng;

use crate::error::{EveError, Result};
use crate::ids::{AgentId, SolverId};
use crate::model::{AgentRecord, SolverRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedCandidate<Id> {
    pub id: Id,
    pub key: f64,
    pub rank: usize,
}

/// `exp(-beta * rank)`, normalized.
pub fn rank_weights(n: usize, beta: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(EveError::Selection("no candidates to weight".into()));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(EveError::Selection(format!("invalid beta {beta}")));
    }
    let raw: Vec<f64> = (0..n).map(|r| (-beta * r as f64).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Sorts by key descending; equal keys keep the older (smaller) id first.
pub fn rank_candidates<Id: Ord + Copy>(items: &[(Id, f64)]) -> Vec<RankedCandidate<Id>> {
    let mut sorted = items.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sorted
        .into_iter()
        .enumerate()
        .map(|(rank, (id, key))| RankedCandidate { id, key, rank })
        .collect()
}

/// Draws `count` distinct indices with probability proportional to `weights`.
/// The result is sorted ascending, i.e. by rank when weights follow rank order.
pub fn weighted_draws<R: Rng + ?Sized>(weights: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    let mut picked = Vec::with_capacity(count.min(weights.len()));
    while picked.len() < count && !remaining.is_empty() {
        let total: f64 = remaining.iter().map(|&i| weights[i]).sum();
        let u = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut pos = remaining.len() - 1;
        for (k, &i) in remaining.iter().enumerate() {
            acc += weights[i];
            if u < acc {
                pos = k;
                break;
            }
        }
        picked.push(remaining.remove(pos));
    }
    picked.sort_unstable();
    picked
}

fn sample_ranked<Id: Ord + Copy, R: Rng + ?Sized>(
    items: &[(Id, f64)],
    count: usize,
    beta: f64,
    rng: &mut R,
) -> Result<Vec<Id>> {
    let ranked = rank_candidates(items);
    let weights = rank_weights(ranked.len(), beta)?;
    Ok(weighted_draws(&weights, count, rng)
        .into_iter()
        .map(|i| ranked[i].id)
        .collect())
}

fn agent_keys(agents: &[AgentRecord]) -> Vec<(AgentId, f64)> {
    agents.iter().map(|a| (a.id, a.rating)).collect()
}

/// Draws without replacement; once every agent is used, the pool refills and
/// drawing continues, so a small population still fills every slot.
pub fn sample_working_agents<R: Rng + ?Sized>(
    agents: &[AgentRecord],
    count: usize,
    beta: f64,
    rng: &mut R,
) -> Result<Vec<AgentId>> {
    if agents.is_empty() {
        return Err(EveError::EmptyPopulation("agent"));
    }
    let keys = agent_keys(agents);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let round = (count - out.len()).min(keys.len());
        out.extend(sample_ranked(&keys, round, beta, rng)?);
    }
    Ok(out)
}

/// Valid solvers only, keyed on score, in rank order. The first entry is the
/// prefill candidate.
pub fn sample_reference_solvers<R: Rng + ?Sized>(
    solvers: &[SolverRecord],
    count: usize,
    beta: f64,
    rng: &mut R,
) -> Result<Vec<SolverId>> {
    let keys: Vec<(SolverId, f64)> = solvers
        .iter()
        .filter(|s| s.valid)
        .filter_map(|s| s.score.map(|v| (s.id, v)))
        .collect();
    if keys.is_empty() {
        return Err(EveError::NoValidSolver);
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    sample_ranked(&keys, count, beta, rng)
}

pub fn sample_reference_agents<R: Rng + ?Sized>(
    agents: &[AgentRecord],
    count: usize,
    beta: f64,
    rng: &mut R,
) -> Result<Vec<AgentId>> {
    if agents.is_empty() {
        return Err(EveError::EmptyPopulation("agent"));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    sample_ranked(&agent_keys(agents), count, beta, rng)
}
