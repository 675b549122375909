//! Social-link inference from location check-ins.
//!
//! The attack organizes users and locations into a weighted bipartite graph,
//! turns it into a corpus of random-walk traces, learns one vector per node with
//! skip-gram and negative sampling, and ranks user pairs by vector similarity.
//! The [`defense`] module implements hiding, replacement and generalization
//! together with a Jensen-Shannon utility metric, so defenses can be scored
//! against the attack.

pub mod alias;
pub mod baselines;
mod csvio;
pub mod dataset;
pub mod defense;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod seed;
pub mod similarity;
pub mod walks;

pub use error::{Error, Result};
