//! Numeric kernels: dense/sparse linear algebra, the reverse-mode tape,
//! Adam updates, and the finite-difference gradient checker.

pub mod adam;
pub mod dense;
pub mod fdcheck;
pub mod sparse;
pub mod tape;

pub use adam::{adam_step, AdamState};
pub use dense::{dense_matmul, DenseMatrix};
pub use fdcheck::finite_diff_check;
pub use sparse::{spmm, SparseMatrix};
pub use tape::{stable_sigmoid, Gradients, Tape, Var, PROB_FLOOR};
