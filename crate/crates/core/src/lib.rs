//! Embedding clustering through neighborhood-aware subgraph adjustment.
//!
//! The pipeline learns a linkage probability for every kNN pair from two
//! inputs: an enhanced pairwise feature (each node concatenated with the mean
//! of its confident neighbors) and a structural feature describing the
//! enclosed subgraph around the pair. The learned probabilities replace the
//! raw cosine similarities, the rebuilt subgraphs drive a two-layer GCN, and
//! clusters are read off the aggregated features with density-peak linking
//! followed by connected components.
//!
//! The crate is `no_std` and only needs `alloc`. Enable `parallel` to run the
//! data-parallel stages (kNN construction, graph adjustment, aggregation) on
//! rayon; results are bit-identical either way.

#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod cluster;
pub mod config;
mod error;
pub mod features;
pub mod gcn;
pub mod graph;
pub mod linalg;
pub mod linker;
mod math;
pub mod metrics;
pub mod nn;
mod par;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
