//! Hierarchical Bayesian models of chemical exposure and the pseudo-population
//! simulator that aggregates them.

pub mod data;
pub mod dist;
pub mod models;
pub mod pseudopop;
pub mod rng;
pub mod sampler;
pub mod special;
pub mod summaries;
pub mod synth;
pub mod transforms;
