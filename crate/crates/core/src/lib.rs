//! Offline goal-conditioned reinforcement learning with contrastive
//! occupancy-ratio critics.
//!
//! The crate learns goal-conditioned critics `f(s, a, g) = phi(s, a)^T psi(g)`
//! and policies from offline trajectory data. The critic is trained as a
//! binary classifier distinguishing future states drawn from the discounted
//! state occupancy measure from future states drawn at random, either
//! Monte-Carlo style or with a temporal-difference bootstrap. Exact dynamic
//! programming oracles for tabular processes make every learned quantity
//! checkable against ground truth.

pub mod algo;
pub mod analysis;
pub mod config;
pub mod dataset;
pub mod env;
pub mod error;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use rand_chacha::ChaCha8Rng;
