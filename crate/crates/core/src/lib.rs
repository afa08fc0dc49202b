//! Multi-region core-periphery economy: short-run wage equilibria, worker
//! migration toward higher real wages, and concentration metrics over
//! real or racetrack geographies.

pub mod error;
pub mod geodata;
pub mod longrun;
pub mod metrics;
pub mod runner;
pub mod shortrun;

pub use error::{Error, Result};
pub use geodata::{Geography, Region};
pub use shortrun::{ModelParams, ShortRunState, SolverOptions};
