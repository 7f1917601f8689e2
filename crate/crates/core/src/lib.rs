//! Core of the tutoring-agent workbench: state-machine conversational
//! agents, simulated students with explicit knowledge state, diverse
//! profile sampling, evaluation metrics and project storage.

pub mod autochat;
pub mod engine;
mod error;
pub mod eval;
pub mod gateway;
pub mod model;
pub mod prompts;
pub mod sampler;
pub mod store;
pub mod student;

pub use error::{Error, Result};
pub use model::*;
