//! Model-based tuning of exploration schedules.

pub mod bayesopt;
pub mod environments;
pub mod error;
pub mod gittins;
pub mod harness;
pub mod history;
pub mod models;
pub mod policies;
pub mod rng;
pub mod schedule;
pub mod tuner;

pub use error::{Error, Result};
