//! Phase-consistent magnetic spectral learning for multi-view clustering.
//!
//! Per-view autoencoders feed a shared anchor hypergraph. Ricci flow
//! reweights the hypergraph, cross-view assignment flow supplies edge
//! phases, and the resulting magnetic Laplacian supplies the spectral
//! embedding and self-supervision targets for training.
//!
//! ```no_run
//! use magspec_core::{generate_synthetic, train, SyntheticSpec, TrainConfig};
//!
//! let ds = generate_synthetic(&SyntheticSpec::blobs(300, 3, vec![8, 8], 0)).unwrap();
//! let result = train(&ds, 3, &TrainConfig::default(), 0).unwrap();
//! assert_eq!(result.labels.len(), 300);
//! ```

pub mod anchor;
pub mod curvature;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod magnetic;
pub mod numerics;
pub mod pipeline;
pub mod rng;
pub mod training;

pub use anchor::{AnchorHypergraph, AnchorSet, CoefficientMatrices};
pub use curvature::{CurvatureSign, RefinedAffinity};
pub use dataset::{generate_synthetic, load_dataset, minmax_normalize, save_dataset, MultiViewDataset, SyntheticSpec};
pub use encoder::{Activation, Architecture, AutoencoderParams, EncoderKind};
pub use error::{Error, Result};
pub use evaluation::{AblationReport, ClusteringMetrics, StabilityMetrics, Variant};
pub use magnetic::{FlowPairs, MagneticGeometry, PhaseMatrix, PhaseScheme, SpectralEmbedding};
pub use pipeline::{Backbone, Geometry, GeometryConfig};
pub use training::{train, Epochs, TrainConfig, TrainResult};
