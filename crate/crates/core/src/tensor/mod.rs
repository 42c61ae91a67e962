//! Dense/sparse linear algebra with tape-based reverse-mode gradients and
//! an Adam optimizer. Everything is `f64`.

mod adam;
mod matrix;
mod sparse;
mod tape;

pub use adam::{Adam, Parameter};
pub use matrix::Matrix;
pub use sparse::SparseMatrix;
pub use tape::{Gradients, Tape, Var};
pub(crate) use tape::sigmoid;
