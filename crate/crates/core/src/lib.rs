//! Q-learning with perceived states that need not be Markov.
//!
//! The learner runs the standard tabular iteration on whatever index its
//! perception map produces: the true state, a quantized continuous state, a
//! finite window of observations and actions, or a quantized filter belief.
//! The iterates converge to the optimal Q table of the induced model, the
//! finite MDP defined by long-run conditional averages along the
//! trajectory. This crate computes those induced models exactly, checks
//! learned tables against them, evaluates the associated error bounds and
//! runs the multi-agent satisficing variant.

pub mod acceptance;
pub mod beliefs;
pub mod config;
pub mod bounds;
pub mod envs;
pub mod error;
pub mod experiments;
pub mod induced;
pub mod io;
pub mod magent;
pub mod markov;
pub mod metrics;
pub mod oracle;
pub mod par;
pub mod perception;
pub mod qcore;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
