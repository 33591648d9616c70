//! Dual-primal graph attention networks on sparse graphs.
//!
//! This crate holds the algorithmic core: compressed sparse graph
//! representations, exact line-digraph (dual) construction, a tape-based
//! reverse-mode autodiff engine over dense f64 matrices, the attention
//! layers operating on primal and dual neighborhoods, and full-batch
//! training loops for vertex classification and link direction
//! prediction.
//!
//! The crate is `no_std`-compatible (`alloc` required); the `std`
//! feature (default) is needed only by downstream IO, and `parallel`
//! enables rayon-backed matrix kernels that are bit-identical to the
//! sequential path.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod data;
pub mod dual;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod math;
pub mod model;
pub mod optim;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod train;

pub use tape::{NodeId, Tape, TapeError};
pub use dual::{DualEdgeCountReport, DualGraph, DualMode};
pub use graph::DirectedGraph;
pub use rng::Rng;

pub use tensor::Tensor;
