//! Inference-time action sampling for stochastic chunked control policies.
//!
//! A few chunks drawn from a base policy are expanded into many candidates
//! through a learned low-dimensional action posterior ([`vae`]), every
//! candidate is scored by a task-progress verifier trained from trajectory
//! order ([`verifier`], [`traj`]), and one chunk is chosen by threshold
//! filtering plus score-weighted averaging ([`selector`]). A deterministic
//! 2-D manipulation simulator ([`sim`]) supplies demonstrations, the base
//! policy and ground truth for the evaluation protocols in [`eval`].

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod eval;
pub mod nn;
pub mod rollout;
pub mod seed;
pub mod selector;
pub mod sim;
pub mod traj;
pub mod vae;
pub mod verifier;

pub use error::{Error, Result};
