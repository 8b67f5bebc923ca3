//! Evolutionary ensemble engine: two co-evolving populations (solver file
//! trees and agent guidance trees) improved through synchronous races scored
//! with Elo ratings.

pub mod accounting;
pub mod adapters;
pub mod error;
pub mod fsutil;
pub mod ids;
pub mod model;
pub mod orchestrator;
pub mod par;
pub mod presets;
pub mod rating;
pub mod report;
pub mod rng;
pub mod selection;
pub mod sim;
pub mod store;
pub mod workspace;

pub use error::{EveError, IntegrityReport, Result};
pub use ids::{AgentId, SolverId};
