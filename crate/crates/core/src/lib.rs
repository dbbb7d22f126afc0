//! Federated learning simulator with poisoning attacks and robust aggregation.

pub mod attacks;
pub mod config;
pub mod data;
pub mod defenses;
pub mod error;
pub mod experiment;
pub mod idx;
pub mod linalg;
pub mod model;
pub mod results;
pub mod rng;
pub mod sim;

pub use config::SimConfig;
pub use error::{Error, Result};
pub use linalg::ParamVector;
