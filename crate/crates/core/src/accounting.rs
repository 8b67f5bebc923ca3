//! Equivalent-token cost normalization.

use serde::{Deserialize, Serialize};

use crate::adapters::TokenUsage;
use crate::error::{EveError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenWeights {
    pub cached: f64,
    pub fresh: f64,
    pub output: f64,
}

impl Default for TokenWeights {
    fn default() -> Self {
        Self {
            cached: 1.0,
            fresh: 2.0,
            output: 12.0,
        }
    }
}

impl TokenWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.cached, self.fresh, self.output]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0)
        {
            Ok(())
        } else {
            Err(EveError::Config("token weights must be finite and nonnegative".into()))
        }
    }

    pub fn equivalent(&self, u: &TokenUsage) -> f64 {
        self.cached * u.cached_input as f64 + self.fresh * u.fresh_input as f64 + self.output * u.output as f64
    }
}

/// Cost of one session at the default 1:2:12 weights.
pub fn equivalent_tokens(u: &TokenUsage) -> f64 {
    TokenWeights::default().equivalent(u)
}

/// Token totals are raw counts; reports divide by a million.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub step_teq: f64,
    pub cumulative_teq: f64,
    pub cache_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turns: Option<u64>,
}

pub fn iteration_cost(sessions: &[TokenUsage], prior_cumulative: f64, weights: &TokenWeights) -> CostReport {
    let step_teq: f64 = sessions.iter().map(|u| weights.equivalent(u)).sum();
    let pooled = sessions.iter().fold(TokenUsage::default(), |acc, u| acc + *u);
    let input = pooled.cached_input + pooled.fresh_input;
    let cache_fraction = if input > 0 {
        pooled.cached_input as f64 / input as f64
    } else {
        0.0
    };
    let turns = sessions
        .iter()
        .map(|u| u.turns)
        .try_fold(0u64, |acc, t| t.map(|t| acc + t));
    CostReport {
        step_teq,
        cumulative_teq: prior_cumulative + step_teq,
        cache_fraction,
        turns: turns.filter(|_| !sessions.is_empty()),
    }
}

/// Millions with one decimal, as in the report tables.
pub fn millions(tokens: f64) -> String {
    format!("{:.1}", tokens / 1e6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn usage(c: u64, f: u64, o: u64) -> TokenUsage {
        TokenUsage {
            cached_input: c,
            fresh_input: f,
            output: o,
            turns: None,
        }
    }

    #[test]
    fn equivalent_token_examples() {
        assert_eq!(equivalent_tokens(&usage(0, 0, 0)), 0.0);
        assert_eq!(equivalent_tokens(&usage(1_000_000, 0, 0)), 1_000_000.0);
        assert_eq!(equivalent_tokens(&usage(100, 50, 10)), 320.0);
    }

    #[test]
    fn weights_follow_pricing_ratio() {
        let w = TokenWeights::default();
        assert_eq!(w.fresh / w.cached, 2.0);
        assert_eq!(w.output / w.cached, 12.0);
        assert_eq!(equivalent_tokens(&usage(1, 0, 0)), 1.0);
        assert_eq!(equivalent_tokens(&usage(0, 1, 0)), 2.0);
        assert_eq!(equivalent_tokens(&usage(0, 0, 1)), 12.0);
    }

    #[test]
    fn iteration_cost_examples() {
        let c = iteration_cost(&[usage(100, 50, 10); 2], 1000.0, &TokenWeights::default());
        assert_eq!(c.step_teq, 640.0);
        assert_eq!(c.cumulative_teq, 1640.0);
        let c = iteration_cost(&[usage(500, 0, 3); 2], 0.0, &TokenWeights::default());
        assert_eq!(c.cache_fraction, 1.0);
        let c = iteration_cost(&[usage(941, 59, 0)], 0.0, &TokenWeights::default());
        assert!((c.cache_fraction - 0.941).abs() < 1e-12);
        let c = iteration_cost(&[], 5.0, &TokenWeights::default());
        assert_eq!((c.step_teq, c.cumulative_teq, c.cache_fraction), (0.0, 5.0, 0.0));
    }

    #[test]
    fn turns_sum_only_when_all_reported() {
        let mut a = usage(1, 1, 1);
        a.turns = Some(3);
        let mut b = a;
        b.turns = Some(4);
        assert_eq!(iteration_cost(&[a, b], 0.0, &TokenWeights::default()).turns, Some(7));
        assert_eq!(iteration_cost(&[a, usage(1, 1, 1)], 0.0, &TokenWeights::default()).turns, None);
    }

    #[test]
    fn millions_render_one_decimal() {
        assert_eq!(millions(0.0), "0.0");
        assert_eq!(millions(2_450_000.0), "2.5");
        assert_eq!(millions(38_120_000.0), "38.1");
    }

    proptest! {
        #[test]
        fn equivalent_tokens_is_linear(a in (0u64..1u64 << 32, 0u64..1u64 << 32, 0u64..1u64 << 32), b in (0u64..1u64 << 32, 0u64..1u64 << 32, 0u64..1u64 << 32)) {
            let (ua, ub) = (usage(a.0, a.1, a.2), usage(b.0, b.1, b.2));
            prop_assert_eq!(equivalent_tokens(&(ua + ub)), equivalent_tokens(&ua) + equivalent_tokens(&ub));
        }
    }
}
