//! Cross-view phase estimation, the magnetic adjacency/Laplacian on
//! anchors, and the lifted sample embedding.
//!
//! The phase matrix is built from the per-sample top-1 anchor of each view:
//! every sample adds one unit of flow from its anchor in view `v1` to its
//! anchor in view `v2`, the antisymmetric part is scaled into
//! `[-pi q, pi q]` and restricted to the support of the magnitude backbone.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::anchor::{AnchorHypergraph, CoefficientMatrices};
use crate::error::{param_err, shape_err, Error, Result};
use crate::numerics::{hermitian_eigs, symmetric_eigs};
use crate::rng;

pub const PHASE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PhaseScheme {
    #[default]
    Netflow,
    Zero,
    Shuffled,
    Random,
}

/// Which ordered view pairs contribute flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FlowPairs {
    /// Only `v1 < v2`, so view order sets the direction.
    #[default]
    LowerUpper,
    /// Every `v1 != v2`. Flow is then symmetric and the phase vanishes.
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMatrix {
    /// m × m antisymmetric.
    pub theta: DMatrix<f64>,
    pub scheme: PhaseScheme,
    pub q: f64,
}

impl PhaseMatrix {
    pub fn zero(m: usize) -> Self {
        PhaseMatrix { theta: DMatrix::zeros(m, m), scheme: PhaseScheme::Zero, q: 0.0 }
    }

    pub fn beta(&self) -> f64 {
        std::f64::consts::PI * self.q
    }
}

fn check_q(q: f64) -> Result<()> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(param_err(format!("q must be in [0, 1], got {q}")))
    }
}

/// Global index of the largest coefficient per sample, one sequence per view.
/// Ties go to the lower local index.
pub fn top_anchor_indices(coeffs: &CoefficientMatrices) -> Vec<Vec<usize>> {
    coeffs
        .per_view
        .iter()
        .enumerate()
        .map(|(v, c)| {
            c.column_iter()
                .map(|col| {
                    let mut best = 0;
                    for (a, &x) in col.iter().enumerate() {
                        if x > col[best] {
                            best = a;
                        }
                    }
                    coeffs.offsets[v] + best
                })
                .collect()
        })
        .collect()
}

/// Flow counts `F` and their antisymmetric part `F - F^T` from top-1
/// anchor sequences.
pub fn flow_from_indices(tops: &[Vec<usize>], m: usize, pairs: FlowPairs) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut f = DMatrix::zeros(m, m);
    for (v1, a) in tops.iter().enumerate() {
        for (v2, b) in tops.iter().enumerate() {
            let take = match pairs {
                FlowPairs::LowerUpper => v1 < v2,
                FlowPairs::All => v1 != v2,
            };
            if take {
                for (&i, &j) in a.iter().zip(b) {
                    f[(i, j)] += 1.0;
                }
            }
        }
    }
    let net = &f - f.transpose();
    (f, net)
}

pub fn flow_matrix(coeffs: &CoefficientMatrices, pairs: FlowPairs) -> (DMatrix<f64>, DMatrix<f64>) {
    flow_from_indices(&top_anchor_indices(coeffs), coeffs.stacked.nrows(), pairs)
}

/// Scales net flow into a phase, masks it to the support of `affinity` and
/// re-antisymmetrizes.
pub fn phase_from_flow(net: &DMatrix<f64>, affinity: &DMatrix<f64>, q: f64) -> Result<PhaseMatrix> {
    check_q(q)?;
    if net.shape() != affinity.shape() {
        return Err(shape_err(format!("flow {:?} vs affinity {:?}", net.shape(), affinity.shape())));
    }
    let m = net.nrows();
    let peak = net.amax();
    let mut phase = PhaseMatrix { theta: DMatrix::zeros(m, m), scheme: PhaseScheme::Netflow, q };
    if peak == 0.0 {
        return Ok(phase);
    }
    let scale = phase.beta() / (peak + PHASE_EPS);
    let masked = DMatrix::from_fn(m, m, |i, j| if affinity[(i, j)] > 0.0 { scale * net[(i, j)] } else { 0.0 });
    phase.theta = (&masked - masked.transpose()) * 0.5;
    Ok(phase)
}

/// Netflow phase after permuting each view's top-1 sequence by `perms[v]`.
pub fn shuffled_phase_with(
    coeffs: &CoefficientMatrices,
    affinity: &DMatrix<f64>,
    q: f64,
    pairs: FlowPairs,
    perms: &[Vec<usize>],
) -> Result<PhaseMatrix> {
    let tops = top_anchor_indices(coeffs);
    if perms.len() != tops.len() {
        return Err(shape_err("one permutation per view required"));
    }
    let n = coeffs.n_samples();
    let shuffled: Vec<Vec<usize>> = tops
        .iter()
        .zip(perms)
        .map(|(t, p)| {
            if p.len() != n {
                return Err(shape_err("permutation length must equal sample count"));
            }
            Ok(p.iter().map(|&s| t[s]).collect())
        })
        .collect::<Result<_>>()?;
    let (_, net) = flow_from_indices(&shuffled, coeffs.stacked.nrows(), pairs);
    let mut phase = phase_from_flow(&net, affinity, q)?;
    phase.scheme = PhaseScheme::Shuffled;
    Ok(phase)
}

/// Counterfactual phase: cross-view correspondence destroyed by an
/// independent seeded permutation of samples per view.
pub fn shuffled_phase(
    coeffs: &CoefficientMatrices,
    affinity: &DMatrix<f64>,
    q: f64,
    pairs: FlowPairs,
    seed: u64,
) -> Result<PhaseMatrix> {
    let mut r = rng::seeded(seed);
    let n = coeffs.n_samples();
    let perms: Vec<Vec<usize>> = (0..coeffs.per_view.len())
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut r);
            p
        })
        .collect();
    shuffled_phase_with(coeffs, affinity, q, pairs, &perms)
}

/// Uniform `(-beta, beta)` phases on the upper triangle of the support of
/// `affinity`, mirrored with negation.
pub fn random_phase(affinity: &DMatrix<f64>, q: f64, seed: u64) -> Result<PhaseMatrix> {
    check_q(q)?;
    let m = affinity.nrows();
    let mut phase = PhaseMatrix { theta: DMatrix::zeros(m, m), scheme: PhaseScheme::Random, q };
    let beta = phase.beta();
    if beta == 0.0 {
        return Ok(phase);
    }
    let mut r = rng::seeded(seed);
    for i in 0..m {
        for j in i + 1..m {
            if affinity[(i, j)] > 0.0 {
                let t = r.random_range(-beta..beta);
                phase.theta[(i, j)] = t;
                phase.theta[(j, i)] = -t;
            }
        }
    }
    Ok(phase)
}

/// Magnetic adjacency, its magnitude degrees and the Hermitian Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct MagneticGeometry {
    /// `S' * exp(i Theta)`.
    pub adjacency: DMatrix<Complex64>,
    /// Row sums of `|adjacency|`; zero for isolated anchors.
    pub degrees: Vec<f64>,
    /// `I - D^{-1/2} A D^{-1/2}`, identity rows for isolated anchors.
    pub laplacian: DMatrix<Complex64>,
}

fn check_affinity(s: &DMatrix<f64>) -> Result<()> {
    if !s.is_square() {
        return Err(shape_err(format!("affinity must be square, got {:?}", s.shape())));
    }
    if (s - s.transpose()).amax() > 1e-10 {
        return Err(Error::Contract("affinity is not symmetric".into()));
    }
    if s.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::Contract("affinity has negative or non-finite entries".into()));
    }
    Ok(())
}

fn inv_sqrt_degrees(degrees: &[f64]) -> Vec<f64> {
    degrees.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect()
}

pub fn magnetic_laplacian(affinity: &DMatrix<f64>, theta: &DMatrix<f64>) -> Result<MagneticGeometry> {
    check_affinity(affinity)?;
    if theta.shape() != affinity.shape() {
        return Err(shape_err("phase and affinity shapes differ"));
    }
    if (theta + theta.transpose()).amax() > 1e-12 {
        return Err(Error::Contract("phase matrix is not antisymmetric".into()));
    }
    let m = affinity.nrows();
    let adjacency = DMatrix::from_fn(m, m, |i, j| Complex64::from_polar(affinity[(i, j)], theta[(i, j)]));
    let degrees: Vec<f64> = affinity.row_iter().map(|r| r.sum()).collect();
    let inv = inv_sqrt_degrees(&degrees);
    let laplacian = DMatrix::from_fn(m, m, |i, j| {
        let id = if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
        id - adjacency[(i, j)] * (inv[i] * inv[j])
    });
    let skew = (&laplacian - laplacian.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if skew > 1e-12 {
        return Err(Error::Contract(format!("magnetic Laplacian not Hermitian ({skew:e})")));
    }
    Ok(MagneticGeometry { adjacency, degrees, laplacian })
}

/// Real normalized Laplacian `I - D^{-1/2} S D^{-1/2}` with isolated
/// vertices absorbed as identity rows.
pub fn normalized_laplacian(affinity: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_affinity(affinity)?;
    let m = affinity.nrows();
    let degrees: Vec<f64> = affinity.row_iter().map(|r| r.sum()).collect();
    let inv = inv_sqrt_degrees(&degrees);
    Ok(DMatrix::from_fn(m, m, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - affinity[(i, j)] * (inv[i] * inv[j])
    }))
}

/// Row-stochastic lift `diag(delta)^{-1} H^T` (n × m).
pub fn sample_lift(h: &AnchorHypergraph) -> DMatrix<f64> {
    let mut lift = h.incidence.transpose();
    for (e, mut row) in lift.row_iter_mut().enumerate() {
        row /= h.degrees[e];
    }
    lift
}

/// Normalizes rows to unit length; all-zero rows stay zero and are reported.
pub fn row_normalize(x: &mut DMatrix<f64>) -> Vec<usize> {
    let mut zero = Vec::new();
    for (i, mut row) in x.row_iter_mut().enumerate() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        } else {
            zero.push(i);
        }
    }
    zero
}

#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    /// Full ascending spectrum of the Laplacian.
    pub spectrum: Vec<f64>,
    /// m × K, eigenvectors of the K smallest eigenvalues.
    pub anchor_embedding: DMatrix<Complex64>,
    /// n × m.
    pub lift: DMatrix<f64>,
    /// n × K.
    pub sample_complex: DMatrix<Complex64>,
    /// n × 2K, `[Re, Im]` with unit rows.
    pub embedding: DMatrix<f64>,
    /// Samples whose lifted row was exactly zero.
    pub zero_rows: Vec<usize>,
}

pub fn spectral_embedding(geom: &MagneticGeometry, h: &AnchorHypergraph, k: usize) -> Result<SpectralEmbedding> {
    let m = geom.laplacian.nrows();
    if k == 0 || k > m {
        return Err(param_err(format!("need 1 <= K <= m, got K={k}, m={m}")));
    }
    if h.n_anchors() != m {
        return Err(shape_err(format!("hypergraph has {} anchors, geometry {m}", h.n_anchors())));
    }
    let eig = hermitian_eigs(&geom.laplacian, m)?;
    let anchor_embedding = eig.eigenvectors.columns(0, k).into_owned();
    let lift = sample_lift(h);
    let sample_complex = lift.map(|x| Complex64::new(x, 0.0)) * &anchor_embedding;
    let n = lift.nrows();
    let mut embedding = DMatrix::from_fn(n, 2 * k, |i, j| {
        if j < k {
            sample_complex[(i, j)].re
        } else {
            sample_complex[(i, j - k)].im
        }
    });
    let zero_rows = row_normalize(&mut embedding);
    Ok(SpectralEmbedding { spectrum: eig.eigenvalues, anchor_embedding, lift, sample_complex, embedding, zero_rows })
}

/// Classical real spectral embedding of `affinity`, kept as an independent
/// route: real normalized Laplacian, real symmetric eigensolver, n × K rows.
#[derive(Debug, Clone)]
pub struct RealEmbedding {
    pub spectrum: Vec<f64>,
    pub embedding: DMatrix<f64>,
}

pub fn real_spectral_embedding(affinity: &DMatrix<f64>, h: &AnchorHypergraph, k: usize) -> Result<RealEmbedding> {
    let m = affinity.nrows();
    if k == 0 || k > m {
        return Err(param_err(format!("need 1 <= K <= m, got K={k}, m={m}")));
    }
    let eig = symmetric_eigs(&normalized_laplacian(affinity)?, m)?;
    let phi = eig.eigenvectors.columns(0, k).into_owned();
    let mut embedding = sample_lift(h) * phi;
    row_normalize(&mut embedding);
    Ok(RealEmbedding { spectrum: eig.eigenvalues, embedding })
}
