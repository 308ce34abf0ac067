//! Desk-scale relay networks: a hard continuous-control task is decomposed
//! into a directed graph of subtask policies, each trained to drive rollouts
//! into states its parent policy already handles, with the parent's learned
//! value function serving as both a terminal reward bonus and the runtime
//! switching criterion.

pub mod env;
pub mod error;
pub mod nn;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};
