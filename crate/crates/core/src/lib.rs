//! Agent-based simulator of statewide hospital-bed demand during an epidemic.
//!
//! Agents move among the community, short-term acute care hospitals, long-term
//! acute care hospitals, and nursing homes. A county-level SEIR forecaster
//! drives new infections; output is a 30-day forecast of ICU and non-ICU
//! census, demand, and turn-aways. Runs are reproducible from a single seed.

pub mod covid;
pub mod engine;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod movement;
pub mod params;
pub mod rng;
pub mod seir;
pub mod world;

pub use error::{Error, Result};
