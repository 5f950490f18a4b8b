//! Clustering metrics, spectral stability diagnostics, the phase ablation
//! harness and the cycle demonstration.

mod ablation;
mod demo;
mod metrics;
mod stability;

pub use ablation::{matrix_hash, run_ablation, AblationReport, AblationRow, Variant};
pub use demo::{block_mass, fig1_demo, label_order, reordered_affinity, CycleSpectra};
pub use crate::dataset::matrix_csv;
pub use metrics::{ari, clustering_accuracy, clustering_metrics, contingency, nmi, ClusteringMetrics};
pub use stability::{eigengap, orthonormal_basis, subspace_distance, StabilityMetrics};
