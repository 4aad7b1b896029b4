//! Exact and differentially private estimation of network assortativity.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: immutable simple graphs, edge-list ingestion, Barabási–Albert
//!   generation and the exact (non-private) assortativity statistics.
//! * [`mechanisms`]: randomized response, Laplace noise, debiasing, Laplace raw
//!   moments and the Laplace tail bound.
//! * [`shuffle`]: privacy amplification accounting for the shuffle model.
//! * [`estimators`]: the three private protocols (one-round local, two-round
//!   shuffled, decentralized over 2-hop views) simulated with separated roles.
//! * [`harness`]: utility metrics and the Monte-Carlo experiment runner.
//!
//! Randomness is drawn from [`rng::RngStream`]s keyed by
//! `(seed, run, trial, role, user)`, so results never depend on scheduling.

// `!(x > 0.0)` style guards are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod graph;
pub mod harness;
pub mod mechanisms;
pub mod rng;
pub mod shuffle;

pub use error::{Error, Result};
pub use estimators::{
    decentral_ru, local_ru, shuffle_ru, Algorithm, BudgetSpec, DecentralArtifacts, Estimate,
    NoiseMode, RunOptions, Split,
};
pub use graph::{exact_stats, generate_ba, load_edge_list, Graph, GraphStats, LoadOptions};
pub use rng::{Role, RngStream, TrialRng};
