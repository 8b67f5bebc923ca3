//! Positional-encoding kernels for sequences built from `k` demonstration
//! examples followed by a query.
//!
//! Every flat token position `p` splits into an example (demo) index
//! `m = p / 3` and a within-example role `r = p % 3`. The kernels here map the
//! demo index into a bounded coordinate (global rescale, square-root, `log1p`,
//! `tanh` or linear-clamp overflow compression), look the coordinate up in a
//! small table by linear interpolation or encode it with sinusoids, and add a
//! role component.
//!
//! Tables are plain caller-supplied matrices. Nothing here learns parameters.

mod compose;
mod coord;
mod error;
mod table;

pub use compose::{
    local_offsets, pe_interpolated_demo, pe_overflow_gated, pe_role_only,
    pe_structured_demo_role, pe_structured_function, pe_structured_interpolation, pe_vanilla,
    touched_positions, untrained_rows, DemoFlavor, EmbeddingTables, Gates, PeVariant,
};
pub use coord::{
    compress_linear_clamp, compress_log1p, compress_sqrt, compress_tanh, decompose,
    rescale_global, CompressionParams, DemoRoleIndex, NUM_ROLES,
};
pub use error::PeError;
pub use table::{lerp_lookup, sinusoid_encode, Matrix, DEFAULT_SINUSOID_BASE};

pub type Result<T> = std::result::Result<T, PeError>;
