use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};

use nalgebra::DMatrix;
use serde::Serialize;

use super::metrics::{clustering_metrics, ClusteringMetrics};
use super::stability::{eigengap, orthonormal_basis, subspace_distance, StabilityMetrics};
use crate::dataset::{fmt_f64, MultiViewDataset};
use crate::error::{param_err, Error, Result};
use crate::magnetic::PhaseScheme;
use crate::pipeline::{cluster_embedding, phase_for, spectrum_for, Backbone};
use crate::training::{train, TrainConfig};

/// Phase operators compared under a shared backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Variant {
    RealSpec,
    MagSpec,
    Shuffled,
    Random,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::RealSpec, Variant::MagSpec, Variant::Shuffled, Variant::Random];

    pub fn scheme(self) -> PhaseScheme {
        match self {
            Variant::RealSpec => PhaseScheme::Zero,
            Variant::MagSpec => PhaseScheme::Netflow,
            Variant::Shuffled => PhaseScheme::Shuffled,
            Variant::Random => PhaseScheme::Random,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::RealSpec => "real-spec",
            Variant::MagSpec => "mag-spec",
            Variant::Shuffled => "shuffled",
            Variant::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub clustering: ClusteringMetrics,
    pub stability: StabilityMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    /// Hash of the backbone bytes consumed by every variant, per seed.
    pub backbone_hashes: Vec<(u64, u64)>,
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,seed,acc,nmi,ari,eigengap,subspace,inertia\n");
        for r in &self.rows {
            let sub = r.stability.subspace.map(fmt_f64).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.variant,
                r.seed,
                fmt_f64(r.clustering.acc),
                fmt_f64(r.clustering.nmi),
                fmt_f64(r.clustering.ari),
                fmt_f64(r.stability.eigengap),
                sub,
                fmt_f64(r.stability.inertia)
            );
        }
        out
    }

    pub fn rows_for(&self, variant: Variant) -> impl Iterator<Item = &AblationRow> {
        self.rows.iter().filter(move |r| r.variant == variant)
    }

    /// Seed-averaged (acc, eigengap, subspace) of one variant.
    pub fn mean(&self, variant: Variant) -> (f64, f64, Option<f64>) {
        let rows: Vec<_> = self.rows_for(variant).collect();
        let n = rows.len().max(1) as f64;
        let acc = rows.iter().map(|r| r.clustering.acc).sum::<f64>() / n;
        let gap = rows.iter().map(|r| r.stability.eigengap).sum::<f64>() / n;
        let sub: Option<Vec<f64>> = rows.iter().map(|r| r.stability.subspace).collect();
        (acc, gap, sub.map(|s| s.iter().sum::<f64>() / n))
    }
}

pub fn matrix_hash(m: &DMatrix<f64>) -> u64 {
    let mut h = DefaultHasher::new();
    m.shape().hash(&mut h);
    for x in m.iter() {
        x.to_bits().hash(&mut h);
    }
    h.finish()
}

struct VariantRun {
    clustering: ClusteringMetrics,
    eigengap: f64,
    inertia: f64,
    basis: DMatrix<f64>,
}

/// Evaluates one variant on a fixed backbone.
fn run_variant(
    backbone: &Backbone,
    variant: Variant,
    truth: &[usize],
    k: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<VariantRun> {
    let phase = phase_for(backbone, variant.scheme(), &cfg.geometry, seed)?;
    let spectrum = spectrum_for(backbone, phase, k)?;
    let u = &spectrum.embedding.embedding;
    let km = cluster_embedding(u, k, cfg.geometry.kmeans_restarts, seed)?;
    let m = spectrum.embedding.spectrum.len();
    let gap = if m > k { eigengap(&spectrum.embedding.spectrum, k)? } else { 0.0 };
    Ok(VariantRun {
        clustering: clustering_metrics(&km.assignments, truth)?,
        eigengap: gap,
        inertia: km.inertia,
        basis: orthonormal_basis(u, k)?,
    })
}

/// Trains once per seed, freezes the resulting backbone `S'`, and evaluates
/// every phase variant on it. Subspace distance for a (variant, seed) is
/// the mean principal angle to the same variant's other seeds.
pub fn run_ablation(ds: &MultiViewDataset, k: usize, cfg: &TrainConfig, seeds: &[u64]) -> Result<AblationReport> {
    let truth = ds.labels.as_ref().ok_or_else(|| param_err("ablation needs ground-truth labels"))?;
    if seeds.is_empty() {
        return Err(param_err("ablation needs at least one seed"));
    }
    if seeds.len() < 2 {
        log::warn!("subspace distance needs at least two seeds; column left empty");
    }
    let mut runs: Vec<Vec<VariantRun>> = Vec::with_capacity(seeds.len());
    let mut backbone_hashes = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let trained = train(ds, k, cfg, seed)?;
        let backbone = &trained.geometry.backbone;
        let hash = matrix_hash(backbone.affinity());
        let mut per_variant = Vec::with_capacity(Variant::ALL.len());
        for variant in Variant::ALL {
            per_variant.push(run_variant(backbone, variant, truth, k, cfg, seed)?);
            if matrix_hash(backbone.affinity()) != hash {
                return Err(Error::Contract(format!("backbone changed during {variant} (seed {seed})")));
            }
        }
        backbone_hashes.push((seed, hash));
        runs.push(per_variant);
    }
    let mut rows = Vec::with_capacity(seeds.len() * Variant::ALL.len());
    for (si, &seed) in seeds.iter().enumerate() {
        for (vi, variant) in Variant::ALL.into_iter().enumerate() {
            let run = &runs[si][vi];
            let subspace = if seeds.len() < 2 {
                None
            } else {
                let mut total = 0.0;
                for (sj, other) in runs.iter().enumerate() {
                    if sj != si {
                        total += subspace_distance(&run.basis, &other[vi].basis)?;
                    }
                }
                Some(total / (seeds.len() - 1) as f64)
            };
            rows.push(AblationRow {
                variant,
                seed,
                clustering: run.clustering,
                stability: StabilityMetrics { eigengap: run.eigengap, subspace, inertia: run.inertia },
            });
        }
    }
    Ok(AblationReport { rows, backbone_hashes })
}
