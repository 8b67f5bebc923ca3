use std::collections::HashMap;
use std::ops::Range;

use crate::coord::{
    compress_linear_clamp, compress_log1p, compress_sqrt, compress_tanh, decompose,
    rescale_global, CompressionParams, NUM_ROLES,
};
use crate::table::{lerp_lookup, sinusoid_encode, Matrix, DEFAULT_SINUSOID_BASE};
use crate::{PeError, Result};

/// Scalar gates used by the composed encodings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gates {
    pub g_d: f64,
    pub g_r: f64,
    pub lambda: f64,
    pub sigma: f64,
    /// Pre-logistic gate parameter of the overflow residual.
    pub gate_param: f64,
    pub overflow_scale: f64,
}

impl Default for Gates {
    fn default() -> Self {
        Self {
            g_d: 1.0,
            g_r: 1.0,
            lambda: 1.0,
            sigma: 1.0,
            gate_param: 0.0,
            overflow_scale: 1.0,
        }
    }
}

/// Demo table `(m_train + 1) x d`, role table `3 x d` and optional type table `3 x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTables {
    pub demo: Matrix,
    pub role: Matrix,
    pub type_table: Option<Matrix>,
    pub gates: Gates,
    pub sinusoid_base: f64,
}

impl EmbeddingTables {
    pub fn new(demo: Matrix, role: Matrix, type_table: Option<Matrix>, gates: Gates) -> Result<Self> {
        if demo.rows() < 1 {
            return Err(PeError::ShapeMismatch("demo table needs at least one row".into()));
        }
        if role.rows() != NUM_ROLES {
            return Err(PeError::ShapeMismatch(format!(
                "role table has {} rows, expected {NUM_ROLES}",
                role.rows()
            )));
        }
        let d = demo.cols();
        if role.cols() != d {
            return Err(PeError::ShapeMismatch("role table width differs from demo table".into()));
        }
        if let Some(t) = &type_table {
            if t.rows() != NUM_ROLES || t.cols() != d {
                return Err(PeError::ShapeMismatch("type table must be 3 x d".into()));
            }
        }
        Ok(Self {
            demo,
            role,
            type_table,
            gates,
            sinusoid_base: DEFAULT_SINUSOID_BASE,
        })
    }

    /// Deterministic smooth tables for tests and the CLI.
    pub fn fixture(m_train: usize, d: usize) -> Self {
        let demo = (0..=m_train)
            .map(|i| (0..d).map(|j| (i as f64 * 0.7 + j as f64 * 0.3).sin()).collect())
            .collect();
        let role: Vec<Vec<f64>> = (0..NUM_ROLES)
            .map(|r| (0..d).map(|j| (r + 1) as f64 * 0.1 * (j as f64).cos()).collect())
            .collect();
        let types = role
            .iter()
            .map(|row| row.iter().map(|v| -0.5 * v + 0.05).collect())
            .collect();
        Self::new(
            Matrix::from_rows(demo).expect("fixture demo table"),
            Matrix::from_rows(role).expect("fixture role table"),
            Some(Matrix::from_rows(types).expect("fixture type table")),
            Gates::default(),
        )
        .expect("fixture tables are consistent")
    }

    pub fn dim(&self) -> usize {
        self.demo.cols()
    }

    fn check_demo(&self, params: &CompressionParams) -> Result<()> {
        if self.demo.rows() != params.m_train + 1 {
            return Err(PeError::ShapeMismatch(format!(
                "demo table has {} rows but m_train is {}",
                self.demo.rows(),
                params.m_train
            )));
        }
        Ok(())
    }

    fn type_rows(&self) -> Result<&Matrix> {
        self.type_table
            .as_ref()
            .ok_or_else(|| PeError::ShapeMismatch("type table required".into()))
    }

    fn sinusoid(&self, coord: f64) -> Result<Vec<f64>> {
        sinusoid_encode(coord, self.dim(), self.sinusoid_base)
    }
}

fn add_into(acc: &mut [f64], other: &[f64], scale: f64) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a += scale * b;
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Global rescale into the trained range, then row interpolation, plus the role row.
pub fn pe_interpolated_demo(
    p: i64,
    m_max: f64,
    tables: &EmbeddingTables,
    params: &CompressionParams,
) -> Result<Vec<f64>> {
    tables.check_demo(params)?;
    let idx = decompose(p)?;
    let m_tilde = rescale_global(idx.m as f64, m_max, params.m_train);
    let mut out = lerp_lookup(&tables.demo, m_tilde)?;
    add_into(&mut out, tables.role.row(idx.r), 1.0);
    Ok(out)
}

/// Interpolated demo row, token-type row and a scaled sinusoid of the local offset.
pub fn pe_structured_function(
    p: i64,
    m_max: f64,
    tables: &EmbeddingTables,
    params: &CompressionParams,
    local_offset: usize,
) -> Result<Vec<f64>> {
    tables.check_demo(params)?;
    let idx = decompose(p)?;
    let m_tilde = rescale_global(idx.m as f64, m_max, params.m_train);
    let mut out = lerp_lookup(&tables.demo, m_tilde)?;
    add_into(&mut out, tables.type_rows()?.row(idx.r), 1.0);
    add_into(&mut out, &tables.sinusoid(local_offset as f64)?, tables.gates.lambda);
    Ok(out)
}

/// Interpolated demo PE plus a gated sinusoidal residual of the overflow count.
///
/// With zero overflow the cosine half of the residual is 1, so a constant
/// `gate * overflow_scale` offset is present in-range as well.
pub fn pe_overflow_gated(
    p: i64,
    m_max: f64,
    tables: &EmbeddingTables,
    params: &CompressionParams,
) -> Result<Vec<f64>> {
    let mut out = pe_interpolated_demo(p, m_max, tables, params)?;
    let idx = decompose(p)?;
    let overflow = (idx.m as f64 - params.m_train as f64).max(0.0);
    let gate = logistic(tables.gates.gate_param);
    let residual = tables.sinusoid(overflow)?;
    add_into(&mut out, &residual, gate * tables.gates.overflow_scale);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemoFlavor {
    Sqrt,
    Tanh,
}

/// `g_d * sinusoid(m~) + g_r * R[r]` with a square-root or `tanh` demo coordinate.
pub fn pe_structured_demo_role(
    p: i64,
    tables: &EmbeddingTables,
    params: &CompressionParams,
    flavor: DemoFlavor,
    sequence_max_m: Option<f64>,
) -> Result<Vec<f64>> {
    let idx = decompose(p)?;
    let m = idx.m as f64;
    let m_tilde = match flavor {
        DemoFlavor::Sqrt => compress_sqrt(m, params),
        DemoFlavor::Tanh => compress_tanh(m, params, sequence_max_m),
    };
    let mut out = tables.sinusoid(m_tilde)?;
    out.iter_mut().for_each(|v| *v *= tables.gates.g_d);
    add_into(&mut out, tables.role.row(idx.r), tables.gates.g_r);
    Ok(out)
}

/// Fixed sinusoid of the linearly clamped demo coordinate plus `sigma * R[r]`.
pub fn pe_structured_interpolation(
    p: i64,
    tables: &EmbeddingTables,
    params: &CompressionParams,
) -> Result<Vec<f64>> {
    let idx = decompose(p)?;
    let mut out = tables.sinusoid(compress_linear_clamp(idx.m as f64, params))?;
    add_into(&mut out, tables.role.row(idx.r), tables.gates.sigma);
    Ok(out)
}

/// `lambda * R[p mod 3]`: the role table plus one scalar, `3d + 1` parameters.
pub fn pe_role_only(p: i64, tables: &EmbeddingTables) -> Result<Vec<f64>> {
    let idx = decompose(p)?;
    Ok(tables
        .role
        .row(idx.r)
        .iter()
        .map(|v| tables.gates.lambda * v)
        .collect())
}

/// Flat learned lookup `E[p]`. Positions past the table have no row.
pub fn pe_vanilla(p: usize, table: &Matrix) -> Result<Vec<f64>> {
    if p >= table.rows() {
        return Err(PeError::OutOfTable {
            position: p,
            rows: table.rows(),
        });
    }
    Ok(table.row(p).to_vec())
}

/// Flat positions a `k`-example pass touches: `k` demos plus the query slot.
pub fn touched_positions(k: usize) -> Range<usize> {
    0..NUM_ROLES * (k + 1)
}

/// Rows of an `n_rows` flat table never indexed by a `k_train`-example pass.
pub fn untrained_rows(n_rows: usize, k_train: usize) -> Vec<usize> {
    let touched = touched_positions(k_train);
    (0..n_rows).filter(|i| !touched.contains(i)).collect()
}

/// Occurrence index of each flat position: 0 the first time it appears, 1 the second, ...
pub fn local_offsets(positions: &[usize]) -> Vec<usize> {
    let mut seen: HashMap<usize, usize> = HashMap::new();
    positions
        .iter()
        .map(|p| {
            let count = seen.entry(*p).or_insert(0);
            let offset = *count;
            *count += 1;
            offset
        })
        .collect()
}

/// The six evolved positional encodings, identified by their class names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeVariant {
    InterpolatedDemo,
    StructuredFunction,
    StructuredDemoRoleSqrt,
    RoleOnly,
    StructuredInterpolation,
    StructuredDemoRoleTanh,
}

impl PeVariant {
    pub const ALL: [PeVariant; 6] = [
        PeVariant::InterpolatedDemo,
        PeVariant::StructuredFunction,
        PeVariant::StructuredDemoRoleSqrt,
        PeVariant::RoleOnly,
        PeVariant::StructuredInterpolation,
        PeVariant::StructuredDemoRoleTanh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PeVariant::InterpolatedDemo => "interpolated-demo",
            PeVariant::StructuredFunction => "structured-function",
            PeVariant::StructuredDemoRoleSqrt => "structured-demo-role-sqrt",
            PeVariant::RoleOnly => "role-only",
            PeVariant::StructuredInterpolation => "structured-interpolation",
            PeVariant::StructuredDemoRoleTanh => "structured-demo-role-tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name)
    }

    /// Last demo index the coordinate map leaves untouched.
    pub fn identity_boundary(self, params: &CompressionParams) -> f64 {
        match self {
            PeVariant::StructuredDemoRoleTanh => params.m_train as f64 - 1.0,
            _ => params.m_train as f64,
        }
    }

    /// Demo coordinate this variant feeds to its demo component.
    ///
    /// `m_max` is the furthest demo index of the sequence; `None` means `m`
    /// itself is the furthest. `RoleOnly` has no additive demo component and
    /// reports the `log1p` coordinate its attention path uses.
    pub fn demo_coordinate(self, m: f64, m_max: Option<f64>, params: &CompressionParams) -> f64 {
        let seq_max = m_max.unwrap_or(m);
        match self {
            PeVariant::InterpolatedDemo | PeVariant::StructuredFunction => {
                rescale_global(m, seq_max, params.m_train)
            }
            PeVariant::StructuredDemoRoleSqrt => compress_sqrt(m, params),
            PeVariant::RoleOnly => compress_log1p(m, params),
            PeVariant::StructuredInterpolation => compress_linear_clamp(m, params),
            PeVariant::StructuredDemoRoleTanh => compress_tanh(m, params, Some(seq_max)),
        }
    }

    pub fn encode(
        self,
        p: i64,
        m_max: f64,
        local_offset: usize,
        tables: &EmbeddingTables,
        params: &CompressionParams,
    ) -> Result<Vec<f64>> {
        match self {
            PeVariant::InterpolatedDemo => pe_interpolated_demo(p, m_max, tables, params),
            PeVariant::StructuredFunction => {
                pe_structured_function(p, m_max, tables, params, local_offset)
            }
            PeVariant::StructuredDemoRoleSqrt => {
                pe_structured_demo_role(p, tables, params, DemoFlavor::Sqrt, Some(m_max))
            }
            PeVariant::RoleOnly => pe_role_only(p, tables),
            PeVariant::StructuredInterpolation => pe_structured_interpolation(p, tables, params),
            PeVariant::StructuredDemoRoleTanh => {
                pe_structured_demo_role(p, tables, params, DemoFlavor::Tanh, Some(m_max))
            }
        }
    }
}
