//! Block vectors, small dense linear algebra and deterministic random streams.

mod blocks;
mod linalg;
mod rng;

pub use blocks::{dot, norm, BlockLayout, BlockVector};
pub use linalg::{
    cossim, haar_orthogonal, matrix_sqrt, sigmoid, symmetric_eigen, Eigen, Matrix,
    SymmetricMatrix,
};
pub use rng::RngStream;
