//! Multi-perspective sentence and document ranking.
//!
//! The crate is `no_std` (it needs `alloc`) and holds the algorithmic pieces:
//! sentence segmentation and the corpus model, a BM25 inverted index, the
//! perspective-scorer contract with deterministic reference scorers, weighted
//! score fusion, alternating optimization of the fusion weights, BioASQ-style
//! evaluation metrics and rule-based SIA dataset generation.
//!
//! File formats, caching, external scorers and the HTTP gateway live in the
//! `semir` crate.

#![cfg_attr(not(test), no_std)]
// `!(x > y)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod bioasq;
pub mod corpus;
pub mod error;
pub mod fusion;
pub mod lexindex;
pub mod metrics;
pub mod optimizer;
pub mod scorers;
pub mod segment;
pub mod siagen;

mod surrogate;

pub use error::{Error, Result, ScoreError};
