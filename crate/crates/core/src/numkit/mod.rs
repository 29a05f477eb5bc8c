//! Dense matrix arithmetic, reverse-mode differentiation and the Adagrad
//! optimizer. Everything runs in 64-bit floats; checkpoints narrow to 32-bit
//! on disk.

pub mod adagrad;
pub mod finite_diff;
pub mod linalg;
pub mod tape;

pub use adagrad::{adagrad_step, AdagradState};
pub use finite_diff::{finite_diff_gradient, max_rel_error};
pub use linalg::{invert_with_logdet, logdet, solve, Mat, SINGULARITY_TOL};
pub use tape::{Grads, Tape, Var};
