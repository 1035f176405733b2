pub mod error;
pub mod model;
pub mod rng;
pub mod sim;
pub mod skorohod;
pub mod fluid;
pub mod asymptotics;
pub mod fluctuations;
pub mod cli;

pub use error::{Error, Result};
