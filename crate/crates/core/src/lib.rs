//! Relation-network sentence encoders with dependency-tree constraints.
//!
//! The crate bundles:
//!
//! - a small dense-tensor engine with reverse-mode automatic differentiation
//!   ([`tensor`]);
//! - exact edge-factored inference over dependency trees: matrix-tree
//!   partition functions and marginals, Chu-Liu-Edmonds decoding, and
//!   brute-force enumeration oracles ([`inference`]);
//! - sentence encoders: BiLSTM objects, flat and tree-constrained relation
//!   networks, structured intra-sentence attention, and recurrent relation
//!   networks ([`encoders`]);
//! - classification heads and metrics ([`tasks`]);
//! - corpus, embedding, and treebank ingestion ([`data`]);
//! - optimizers, a training/evaluation harness, significance testing, and
//!   induced-tree dumping ([`train`]).

pub mod data;
pub mod encoders;
pub mod inference;
pub mod model;
pub mod tasks;
pub mod tensor;
pub mod train;

pub use tensor::{Tensor, TensorData};
