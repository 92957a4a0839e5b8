//! Action coordination graphs for cooperative multi-agent reinforcement
//! learning.
//!
//! A graph generator emits a directed acyclic action-coordination graph every
//! timestep; agents then act in topological order, each conditioning on the
//! actions its parents already chose. The generator is trained with a
//! score-function gradient under acyclicity and depth penalties handled by an
//! augmented Lagrangian; actors and critics follow a standard off-policy
//! actor-critic scheme.

pub mod baseline;
pub mod config;
pub mod coordpolicy;
pub mod dagmath;
pub mod envs;
pub mod error;
pub mod graphgen;
pub mod replay;
pub mod tinynet;
pub mod trainer;

pub use error::{Error, Result};
