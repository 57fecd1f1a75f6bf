//! Dense and sparse kernels, pointwise ops and the seeded RNG.

mod dense;
mod ops;
mod rng;
mod sparse;

pub use dense::DenseMatrix;
pub use ops::{dropout, leaky_relu, leaky_relu_grad, row_l2_normalize, DropoutMask};
pub use rng::{streams, Rng};
pub use sparse::SparseAdjacency;
