//! Online learning to rank for relevance and diversity under the cascade
//! click model.
//!
//! [`policy`] holds the CascadeHybrid learner and its four baselines,
//! [`environment`] a simulated cascade user, [`oracle`] the greedy benchmark
//! used to measure regret, [`pipeline`] the dataset and feature preparation,
//! and [`experiment`] the seeded regret harness behind the CLI.

pub mod environment;
pub mod error;
pub mod experiment;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod policy;

pub use error::{Error, Result};
