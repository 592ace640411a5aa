//! Token derivation graphs and credit-tier analysis for DeFi pool data.
//!
//! The crate is organised as a pipeline:
//!
//! - [`ingest`] parses pool snapshots, infers lending receipt tokens and
//!   resolves cross-chain token identity.
//! - [`graph`] builds the full token graph and the filtered derivation graph.
//! - [`hierarchy`] discovers base (tier 0) tokens, propagates tiers and runs
//!   the sensitivity, stability and ablation analyses.
//! - [`metrics`] computes the layering multiplier, its decomposition and the
//!   embedded-yield correction.
//! - [`econ`] builds the pool-month panel and runs the regression suite.
//! - [`synth`] generates ecosystems with known ground truth.

pub mod econ;
pub mod error;
pub mod graph;
pub mod hierarchy;
pub mod ingest;
pub mod metrics;
pub mod stats;
pub mod synth;
pub mod token;

pub use error::{Error, ErrorKind, Result};
pub use token::{Category, ProtocolGroup, TokenKey, TokenRef};
