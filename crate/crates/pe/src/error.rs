use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum PeError {
    NegativePosition(i64),
    OddDimension(usize),
    CoordinateOutOfRange { coord: f64, max: usize },
    OutOfTable { position: usize, rows: usize },
    ShapeMismatch(String),
    InvalidParams(String),
}

impl fmt::Display for PeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PeError::NegativePosition(p) => write!(f, "position {p} is negative"),
            PeError::OddDimension(d) => write!(f, "sinusoid dimension {d} must be even"),
            PeError::CoordinateOutOfRange { coord, max } => {
                write!(f, "coordinate {coord} outside table range [0, {max}]")
            }
            PeError::OutOfTable { position, rows } => {
                write!(f, "position {position} has no row in a {rows}-row table")
            }
            PeError::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            PeError::InvalidParams(msg) => write!(f, "invalid parameters: {msg}"),
        }
    }
}

impl std::error::Error for PeError {}
