pub mod duality;
pub mod cli;
pub mod equilibrium;
pub mod error;
pub mod model;
pub mod numerics;
pub mod order;
pub mod outcome;
pub mod scenarios;
pub mod synthesis;

pub use error::{Error, Result};
