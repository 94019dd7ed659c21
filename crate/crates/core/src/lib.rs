//! Post-hoc explanations for graph neural networks.
//!
//! The crate bundles a small reverse-mode autodiff engine ([`diff`]), graph
//! utilities ([`graph`]), GCN and attention models ([`gnn`]), synthetic
//! benchmarks with planted motifs ([`synth`]), the mask-learning explainer
//! ([`explain`]), baseline importance scores ([`baselines`]), AUC-based
//! evaluation ([`eval`]) and class prototypes ([`prototype`]).

// Index loops mirror the matrix algebra; `!(x >= 0.0)` deliberately rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::single_range_in_vec_init)]

pub mod baselines;
pub mod cli;
pub mod diff;
pub mod error;
pub mod eval;
pub mod explain;
pub mod gnn;
pub mod graph;
pub mod io;
pub mod prototype;
pub mod synth;

pub use error::{Error, Result};
