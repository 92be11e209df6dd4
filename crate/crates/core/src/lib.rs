//! Heterogeneous classifier ensembles assembled by pooling members of
//! homogeneous SVM, MLP and random-tree ensembles, with the mixture chosen
//! by out-of-bag error over a grid on the composition simplex.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod format;
pub mod homogeneous;
pub mod learners;
pub mod rng;
pub mod simplex;

pub use error::{Error, Result};
