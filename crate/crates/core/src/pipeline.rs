//! Latent codes → anchors → hypergraph → Ricci-refined backbone `S'` →
//! phase → magnetic spectrum. Shared by the trainer and the ablation
//! harness, which swaps the phase while keeping the backbone fixed.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::anchor::{self, AnchorHypergraph, AnchorSet, CoefficientMatrices};
use crate::curvature::{self, CurvatureSign, RefinedAffinity, RicciOutcome};
use crate::error::{param_err, Result};
use crate::magnetic::{self, FlowPairs, MagneticGeometry, PhaseMatrix, PhaseScheme, SpectralEmbedding};
use crate::numerics::{kmeans_best_of, KMeansResult};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    /// Anchors per view; `max(K, ceil(sqrt n))` capped at 200 when unset.
    pub anchors_per_view: Option<usize>,
    pub top_r: usize,
    /// Ridge on the anchor coefficients.
    pub gamma: f64,
    pub ricci_tau: f64,
    pub ricci_iters: usize,
    pub curvature_sign: CurvatureSign,
    pub q: f64,
    pub phase: PhaseScheme,
    pub flow_pairs: FlowPairs,
    pub kmeans_restarts: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            anchors_per_view: None,
            top_r: 3,
            gamma: 0.1,
            ricci_tau: 0.1,
            ricci_iters: 20,
            curvature_sign: CurvatureSign::Standard,
            q: 0.25,
            phase: PhaseScheme::Netflow,
            flow_pairs: FlowPairs::LowerUpper,
            kmeans_restarts: 10,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_r == 0 {
            return Err(param_err("top_r must be at least 1"));
        }
        if self.anchors_per_view == Some(0) {
            return Err(param_err("anchors_per_view must be at least 1"));
        }
        if !(self.gamma >= 0.0) {
            return Err(param_err("gamma must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.ricci_tau) {
            return Err(param_err("ricci_tau must be in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(param_err("q must be in [0, 1]"));
        }
        if self.kmeans_restarts == 0 {
            return Err(param_err("kmeans_restarts must be at least 1"));
        }
        Ok(())
    }
}

const TAG_ANCHORS: u64 = 1;
const TAG_PHASE: u64 = 2;
const TAG_LABELS: u64 = 3;

/// Everything up to and including the refined magnitude backbone.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub anchors: AnchorSet,
    pub coeffs: CoefficientMatrices,
    /// Incidence with the unit initial weights.
    pub hypergraph: AnchorHypergraph,
    pub ricci: RicciOutcome,
    pub refined: RefinedAffinity,
}

impl Backbone {
    pub fn affinity(&self) -> &DMatrix<f64> {
        &self.refined.affinity
    }
}

pub fn build_backbone(latents: &[DMatrix<f64>], k: usize, cfg: &GeometryConfig, seed: u64) -> Result<Backbone> {
    cfg.validate()?;
    let n = latents.first().map_or(0, |z| z.nrows());
    let m_v = cfg.anchors_per_view.unwrap_or_else(|| anchor::default_anchor_count(n, k));
    let counts = vec![m_v; latents.len()];
    let anchors = anchor::init_anchors(latents, &counts, derive_seed(seed, TAG_ANCHORS))?;
    let coeffs = anchor::solve_all(latents, &anchors, cfg.gamma)?;
    let hypergraph = anchor::build_incidence(&coeffs, cfg.top_r)?;
    let ricci = curvature::ricci_flow(
        &hypergraph,
        &hypergraph.weights,
        cfg.ricci_tau,
        cfg.ricci_iters,
        cfg.curvature_sign,
    )?;
    let refined = curvature::anchor_affinity(&hypergraph, &ricci.weights)?;
    Ok(Backbone { anchors, coeffs, hypergraph, ricci, refined })
}

/// Phase of the requested scheme on a fixed backbone.
pub fn phase_for(backbone: &Backbone, scheme: PhaseScheme, cfg: &GeometryConfig, seed: u64) -> Result<PhaseMatrix> {
    let s = backbone.affinity();
    let phase_seed = derive_seed(seed, TAG_PHASE);
    match scheme {
        PhaseScheme::Zero => Ok(PhaseMatrix::zero(s.nrows())),
        PhaseScheme::Netflow => {
            let (_, net) = magnetic::flow_matrix(&backbone.coeffs, cfg.flow_pairs);
            magnetic::phase_from_flow(&net, s, cfg.q)
        }
        PhaseScheme::Shuffled => magnetic::shuffled_phase(&backbone.coeffs, s, cfg.q, cfg.flow_pairs, phase_seed),
        PhaseScheme::Random => magnetic::random_phase(s, cfg.q, phase_seed),
    }
}

/// Phase, magnetic operator and sample embedding over one backbone.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub phase: PhaseMatrix,
    pub magnetic: MagneticGeometry,
    pub embedding: SpectralEmbedding,
}

pub fn spectrum_for(backbone: &Backbone, phase: PhaseMatrix, k: usize) -> Result<Spectrum> {
    let magnetic = magnetic::magnetic_laplacian(backbone.affinity(), &phase.theta)?;
    let embedding = magnetic::spectral_embedding(&magnetic, &backbone.hypergraph, k)?;
    Ok(Spectrum { phase, magnetic, embedding })
}

#[derive(Debug, Clone)]
pub struct Geometry {
    pub backbone: Backbone,
    pub spectrum: Spectrum,
}

impl Geometry {
    /// Sample embedding `U` (n × 2K).
    pub fn embedding(&self) -> &DMatrix<f64> {
        &self.spectrum.embedding.embedding
    }
}

pub fn build_geometry(latents: &[DMatrix<f64>], k: usize, cfg: &GeometryConfig, seed: u64) -> Result<Geometry> {
    let backbone = build_backbone(latents, k, cfg, seed)?;
    let phase = phase_for(&backbone, cfg.phase, cfg, seed)?;
    let spectrum = spectrum_for(&backbone, phase, k)?;
    Ok(Geometry { backbone, spectrum })
}

/// Best-of-restarts k-means on embedding rows, seeded from `seed`.
pub fn cluster_embedding(u: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    kmeans_best_of(u, k, derive_seed(seed, TAG_LABELS), restarts)
}
