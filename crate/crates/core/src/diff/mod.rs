//! Dense matrices with tape-based reverse-mode differentiation, Adam, and
//! the seeded RNG used across the crate.

mod adam;
mod check;
mod matrix;
pub mod rng;
mod sparse;
mod tape;

pub use adam::AdamState;
pub use check::finite_diff_check;
pub use matrix::Matrix;
pub use rng::{derived, seeded, SeededRng};
pub use sparse::SparsePattern;
pub use tape::{log_sum_exp, sigmoid, softmax_rows, Gradients, Tape, Tensor, Var};
