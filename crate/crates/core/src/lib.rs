//! Sparse bilinear similarity learning for high-dimensional sparse data.
//!
//! The learned similarity is `S(x, x') = xᵀ M x'` where `M` is kept as an
//! explicit convex combination of 4-sparse rank-one bases
//! `λ (e_i ± e_j)(e_i ± e_j)ᵀ`. Training runs Frank-Wolfe with away steps on
//! a smoothed hinge loss over triplet constraints, so the cost of an iteration
//! depends on the sparsity of the data rather than its dimension.
//!
//! Module map:
//! - [`data`]: sparse vectors, datasets, LIBSVM ingestion, normalization
//! - [`constraints`]: triplet construction and constraint/basis inner products
//! - [`model`]: the learned matrix, scoring, embedding and serialization
//! - [`optim`]: the Frank-Wolfe trainer and its building blocks
//! - [`baselines`]: identity and diagonal similarities
//! - [`eval`]: kNN classification and error curves

pub mod baselines;
pub mod constraints;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod optim;

pub use baselines::{DiagConfig, DiagModel, Regularizer};
pub use constraints::{ConstraintSet, Triplet};
pub use data::{Dataset, SparseVector, Split};
pub use error::{Error, Result};
pub use eval::{knn_classify, Scorer};
pub use model::{BasisElement, Sign, SimilarityModel};
pub use optim::{train, OptimizerConfig, Strategy, TrainerState};
