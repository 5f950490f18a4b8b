//! Deterministic numerical kernels shared by the rest of the crate.

mod eigen;
mod hungarian;
mod kmeans;
mod simplex;

pub use eigen::{hermitian_eigs, symmetric_eigs, HermitianEigen, SymmetricEigenPairs, HERMITIAN_TOL};
pub use hungarian::{assignment_cost, hungarian};
pub use kmeans::{kmeans, kmeans_best_of, KMeansResult, MAX_LLOYD_ITERS};
pub use simplex::{project_to_simplex, project_to_simplex_into};
