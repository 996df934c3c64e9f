//! Friendship-closeness measures grounded in social identity theory.
//!
//! The pipeline categorizes each target's source neighborhood into candidate
//! groups (weakly connected components of its ego network), computes
//! group-level measures alongside individual-level baselines, and scores
//! source-target pairs with a gradient-boosted tree ensemble for behavior
//! prediction and top-k target recommendation.

pub mod analyze;
pub mod categorize;
pub mod centrality;
pub mod embed;
pub mod error;
pub mod eventsim;
pub mod graph;
pub mod learn;
pub mod measures;
pub mod recommend;
pub mod seed;

pub use error::{Error, Result};
pub use graph::{Graph, NodeId};
