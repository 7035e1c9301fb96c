//! Dense matrices, forward kernels, and the reverse-mode tape.

mod matrix;
pub mod ops;
pub mod tape;

pub use matrix::Matrix;
pub use ops::{Binary, GridShape, Unary};
pub use tape::{vjp, Gradients, Op, Tape, Var, VjpRecord};
