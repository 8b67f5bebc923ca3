//! Win-loss matrices and sequential Elo updates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{EveError, Result};
use crate::ids::AgentId;

/// Slot-indexed; `w[i][j]` is slot i's score against slot j.
pub type WinLossMatrix = Vec<Vec<Option<f64>>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub agent_i: AgentId,
    pub agent_j: AgentId,
    pub s_i: f64,
}

/// Lower error wins; differences within `tie_epsilon` draw. Pairs with a
/// missing error stay `None`.
pub fn competition(errors: &[Option<f64>], tie_epsilon: f64) -> WinLossMatrix {
    let n = errors.len();
    let mut w = vec![vec![None; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (Some(ei), Some(ej)) = (errors[i], errors[j]) else {
                continue;
            };
            let s = if (ei - ej).abs() <= tie_epsilon {
                0.5
            } else if ei < ej {
                1.0
            } else {
                0.0
            };
            w[i][j] = Some(s);
            w[j][i] = Some(1.0 - s);
        }
    }
    w
}

/// Pairs of decided slots, oriented so `agent_i <= agent_j`, sorted by agent
/// pair then slot pair. Slots held by the same agent are not a match.
pub fn match_outcomes(agents: &[AgentId], w: &WinLossMatrix) -> Vec<MatchOutcome> {
    let mut out = Vec::new();
    for i in 0..agents.len() {
        for j in (i + 1)..agents.len() {
            let Some(s) = w[i][j] else { continue };
            let (a, b) = (agents[i], agents[j]);
            if a == b {
                continue;
            }
            out.push(if a < b {
                MatchOutcome { agent_i: a, agent_j: b, s_i: s }
            } else {
                MatchOutcome { agent_i: b, agent_j: a, s_i: 1.0 - s }
            });
        }
    }
    out.sort_by_key(|o| (o.agent_i, o.agent_j));
    out
}

pub fn elo_expected(r_i: f64, r_j: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf((r_j - r_i) / 400.0))
}

/// Applies outcomes in order, each against the ratings current at that point.
pub fn elo_update(
    ratings: &BTreeMap<AgentId, f64>,
    outcomes: &[MatchOutcome],
    k: f64,
) -> Result<BTreeMap<AgentId, f64>> {
    let mut r = ratings.clone();
    for o in outcomes {
        let ri = *r.get(&o.agent_i).ok_or_else(|| EveError::UnknownAgent(o.agent_i.to_string()))?;
        let rj = *r.get(&o.agent_j).ok_or_else(|| EveError::UnknownAgent(o.agent_j.to_string()))?;
        let e_i = elo_expected(ri, rj);
        let e_j = elo_expected(rj, ri);
        r.insert(o.agent_i, ri + k * (o.s_i - e_i));
        r.insert(o.agent_j, rj + k * ((1.0 - o.s_i) - e_j));
    }
    Ok(r)
}
