use crate::{PeError, Result};

pub const DEFAULT_SINUSOID_BASE: f64 = 10_000.0;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 {
            return Err(PeError::ShapeMismatch("matrix needs at least one column".into()));
        }
        if data.len() != rows * cols {
            return Err(PeError::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(PeError::ShapeMismatch("rows have unequal lengths".into()));
        }
        let n = rows.len();
        Self::new(n, cols, rows.into_iter().flatten().collect())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

/// Linear interpolation between the table rows bracketing a fractional coordinate.
///
/// The upper row index is clamped to the last row, so the top coordinate
/// returns that row exactly.
pub fn lerp_lookup(table: &Matrix, m_tilde: f64) -> Result<Vec<f64>> {
    let max = table.rows().saturating_sub(1);
    if table.rows() == 0 || !(0.0..=max as f64).contains(&m_tilde) {
        return Err(PeError::CoordinateOutOfRange { coord: m_tilde, max });
    }
    let lo = m_tilde.floor() as usize;
    let hi = (lo + 1).min(max);
    let f = m_tilde - lo as f64;
    let (a, b) = (table.row(lo), table.row(hi));
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let v = (1.0 - f) * x + f * y;
            v.clamp(x.min(y), x.max(y))
        })
        .collect())
}

/// Interleaved `(sin, cos)` pairs of `coord / base^(2i/d)` for `i < d/2`.
pub fn sinusoid_encode(coord: f64, d: usize, base: f64) -> Result<Vec<f64>> {
    if !d.is_multiple_of(2) {
        return Err(PeError::OddDimension(d));
    }
    let mut out = Vec::with_capacity(d);
    for i in 0..d / 2 {
        let freq = base.powf(-((2 * i) as f64) / d as f64);
        let angle = coord * freq;
        out.push(angle.sin());
        out.push(angle.cos());
    }
    Ok(out)
}
