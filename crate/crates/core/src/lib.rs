//! Federated slate-recommendation reinforcement learning.
//!
//! The crate contains five subsystems:
//!
//! - [`nn`] — a from-scratch dense network (Mish activation, Huber loss,
//!   Adam/SGD optimizer, target-network copies) in 64-bit floats.
//! - [`slateq`] — item-level Q decomposition: choice scores, slate choice
//!   probabilities, greedy/top-k slate construction, TD targets.
//! - [`env`] — the two-platform "Choc vs. Kale" user simulator with a shared
//!   latent user state, exponential-kaleness choice model and time budget.
//! - [`fed`] — the three agents (alpha, beta, fed) exchanging Q-vectors
//!   across an explicit message boundary, with acting and learning loops.
//! - [`harness`] — experiment configuration, baselines, the ETROR
//!   convergence metric, metrics/CSV export and full-run checkpoints.
//!
//! All randomness flows through seeded ChaCha streams ([`rng`]) so that every
//! training run is reproducible bit-for-bit from its configuration.

pub mod env;
pub mod fed;
pub mod harness;
pub mod nn;
pub mod rng;
pub mod slateq;

mod error;

pub use error::{Error, Result};
