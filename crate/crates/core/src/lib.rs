//! Decomposing the effect of a skill library on agent pass rates into a
//! context-overhead part and a skill-shadowing part.

pub mod analysis;
pub mod classify;
pub mod cli;
pub mod estimate;
pub mod fixture;
pub mod ingest;
pub mod model;
pub mod report;
pub mod sim;
pub mod stats;
