//! Evolution strategies (OpenAI-ES, NS-ES, NSR-ES) for feed-forward and
//! Decision Transformer policies, with deterministic distributed evaluation
//! and a deceptive navigation task.

pub mod dist;
pub mod env;
pub mod error;
pub mod es;
pub mod experiment;
pub mod kv;
pub mod novelty;
pub mod parallel;
pub mod policy;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
