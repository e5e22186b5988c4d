pub mod approx;
pub mod bp;
pub mod error;
pub mod evcec;
pub mod generate;
pub mod heuristic;
pub mod instance;
pub mod milp;
pub mod queueing;
pub mod report;
pub mod solution;

pub use error::{Error, Result};
