use crate::{PeError, Result};

/// Roles per example: key, value, query.
pub const NUM_ROLES: usize = 3;

/// A flat position split into demo index and within-demo role, `p = 3m + r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DemoRoleIndex {
    pub p: usize,
    pub m: usize,
    pub r: usize,
}

pub fn decompose(p: i64) -> Result<DemoRoleIndex> {
    if p < 0 {
        return Err(PeError::NegativePosition(p));
    }
    let p = p as usize;
    Ok(DemoRoleIndex {
        p,
        m: p / NUM_ROLES,
        r: p % NUM_ROLES,
    })
}

/// Shape parameters for the overflow compression maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionParams {
    /// Largest demo index seen during training.
    pub m_train: usize,
    /// Extrapolation scale for the square-root and `log1p` maps.
    pub alpha: f64,
    /// Overflow span of the `tanh` map.
    pub delta: f64,
    /// Overflow temperature of the `tanh` map.
    pub tau: f64,
    /// Slope applied past `m_train` by the linear clamp.
    pub linear_slope: f64,
    /// Pin the furthest demo of a sequence back to `m_train` in the `tanh` map.
    pub anchor_max: bool,
}

impl Default for CompressionParams {
    fn default() -> Self {
        Self {
            m_train: 5,
            alpha: 1.0,
            delta: 2.0,
            tau: 3.0,
            linear_slope: 0.5,
            anchor_max: false,
        }
    }
}

impl CompressionParams {
    pub fn validate(&self) -> Result<()> {
        if self.m_train < 1 {
            return Err(PeError::InvalidParams("m_train must be at least 1".into()));
        }
        for (name, v) in [("alpha", self.alpha), ("delta", self.delta), ("tau", self.tau)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PeError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.linear_slope.is_finite() {
            return Err(PeError::InvalidParams("linear_slope must be finite".into()));
        }
        Ok(())
    }

    fn train(&self) -> f64 {
        self.m_train as f64
    }
}

/// Scales every demo index of a sequence by `m_train / max(m_max, m_train)`.
///
/// Identity whenever the sequence fits the trained range.
pub fn rescale_global(m: f64, m_max: f64, m_train: usize) -> f64 {
    let train = m_train as f64;
    let denom = m_max.max(train);
    if denom <= 0.0 {
        return m;
    }
    m * (train / denom)
}

pub fn compress_sqrt(m: f64, params: &CompressionParams) -> f64 {
    let train = params.train();
    if m <= train {
        m
    } else {
        train + params.alpha * (m - train).sqrt()
    }
}

/// `m_train + alpha * ln(1 + (m - m_train) / alpha)`; joins the identity with slope 1.
pub fn compress_log1p(m: f64, params: &CompressionParams) -> f64 {
    let train = params.train();
    if m <= train {
        m
    } else {
        train + params.alpha * ((m - train) / params.alpha).ln_1p()
    }
}

/// Bounded overflow map starting one demo before the trained edge.
///
/// The result stays strictly below `m_train - 1 + delta`; in floating point
/// `tanh` saturates to 1, so the bound is enforced explicitly. With
/// `anchor_max`, the furthest demo of the sequence maps to `m_train`.
pub fn compress_tanh(m: f64, params: &CompressionParams, sequence_max_m: Option<f64>) -> f64 {
    let knee = params.train() - 1.0;
    if m <= knee {
        return m;
    }
    if params.anchor_max {
        if let Some(max_m) = sequence_max_m {
            if m == max_m {
                return params.train();
            }
        }
    }
    let bound = knee + params.delta;
    let value = knee + params.delta * ((m - knee) / params.tau).tanh();
    value.min(bound.next_down())
}

pub fn compress_linear_clamp(m: f64, params: &CompressionParams) -> f64 {
    let train = params.train();
    if m <= train {
        m
    } else {
        train + params.linear_slope * (m - train)
    }
}
