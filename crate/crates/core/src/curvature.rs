//! Curvature-driven reweighting of hyperedges and projection of the
//! refined hypergraph onto an anchor affinity.
//!
//! Curvature of hyperedge `e` with support `V_e`:
//! `raw_e = 2 - mean_{a in V_e} deg_w(a)` where `deg_w(a)` sums the weights
//! of hyperedges touching anchor `a`; `kappa = raw / max|raw|`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::anchor::AnchorHypergraph;
use crate::error::{param_err, shape_err, Error, Result};

pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Orientation of the flow update. `Standard` shrinks positively curved
/// hyperedges as `w (1 - tau kappa)`; `Flipped` uses `-kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CurvatureSign {
    #[default]
    Standard,
    Flipped,
}

impl CurvatureSign {
    fn factor(self) -> f64 {
        match self {
            CurvatureSign::Standard => 1.0,
            CurvatureSign::Flipped => -1.0,
        }
    }
}

/// Weighted anchor degrees `deg_w(a)`.
fn anchor_degrees(h: &AnchorHypergraph, weights: &[f64]) -> Vec<f64> {
    let mut deg = vec![0.0; h.n_anchors()];
    for (e, col) in h.incidence.column_iter().enumerate() {
        for (a, &x) in col.iter().enumerate() {
            if x > 0.0 {
                deg[a] += weights[e];
            }
        }
    }
    deg
}

/// Normalized Forman-style curvature, one value in [-1, 1] per hyperedge.
pub fn hyperedge_curvature(h: &AnchorHypergraph, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != h.n_edges() {
        return Err(shape_err(format!("{} weights for {} hyperedges", weights.len(), h.n_edges())));
    }
    let deg = anchor_degrees(h, weights);
    let mut raw = Vec::with_capacity(h.n_edges());
    for (e, col) in h.incidence.column_iter().enumerate() {
        let (count, sum) = col
            .iter()
            .zip(&deg)
            .filter(|(&x, _)| x > 0.0)
            .fold((0usize, 0.0), |(c, s), (_, d)| (c + 1, s + d));
        if count == 0 {
            return Err(Error::DegenerateSample(e));
        }
        raw.push(2.0 - sum / count as f64);
    }
    let scale = raw.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if scale == 0.0 {
        return Ok(vec![0.0; raw.len()]);
    }
    Ok(raw.into_iter().map(|r| r / scale).collect())
}

/// One row of the flow diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RicciStep {
    pub iteration: usize,
    pub total_weight: f64,
    pub min_curvature: f64,
    pub max_curvature: f64,
}

/// Result of [`ricci_flow`].
#[derive(Debug, Clone, PartialEq)]
pub struct RicciOutcome {
    pub weights: Vec<f64>,
    pub trace: Vec<RicciStep>,
}

impl RicciOutcome {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("t,total_weight,min_kappa,max_kappa\n");
        for s in &self.trace {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.iteration,
                crate::dataset::fmt_f64(s.total_weight),
                crate::dataset::fmt_f64(s.min_curvature),
                crate::dataset::fmt_f64(s.max_curvature)
            ));
        }
        out
    }
}

/// `iters` steps of `w <- w (1 - tau kappa)` followed by a global rescale
/// that restores the previous total weight.
pub fn ricci_flow(
    h: &AnchorHypergraph,
    initial: &[f64],
    tau: f64,
    iters: usize,
    sign: CurvatureSign,
) -> Result<RicciOutcome> {
    if !(0.0..1.0).contains(&tau) {
        return Err(param_err(format!("ricci step tau must be in [0, 1), got {tau}")));
    }
    if initial.iter().any(|&w| !(w > 0.0)) {
        return Err(param_err("initial hyperedge weights must be positive"));
    }
    let mut w = initial.to_vec();
    let mut trace = Vec::with_capacity(iters);
    for iteration in 0..iters {
        let kappa = hyperedge_curvature(h, &w)?;
        let before: f64 = w.iter().sum();
        for (e, (we, k)) in w.iter_mut().zip(&kappa).enumerate() {
            let shrink = tau * k * sign.factor();
            if shrink >= 1.0 {
                return Err(Error::Contract(format!("ricci update would zero hyperedge {e}")));
            }
            *we *= 1.0 - shrink;
        }
        let after: f64 = w.iter().sum();
        let rescale = before / after;
        for we in &mut w {
            *we = (*we * rescale).max(WEIGHT_FLOOR);
        }
        trace.push(RicciStep {
            iteration,
            total_weight: w.iter().sum(),
            min_curvature: kappa.iter().copied().fold(f64::INFINITY, f64::min),
            max_curvature: kappa.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    Ok(RicciOutcome { weights: w, trace })
}

/// `S' = H D_e H^T` with `D_e = diag(w / delta)` and its Gram factor.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedAffinity {
    /// m × m, symmetric, nonnegative.
    pub affinity: DMatrix<f64>,
    /// n × m, `D_e^{1/2} H^T`, so that `affinity = factor^T factor`.
    pub factor: DMatrix<f64>,
    /// Diagonal of `D_e`.
    pub edge_scale: Vec<f64>,
}

pub fn anchor_affinity(h: &AnchorHypergraph, weights: &[f64]) -> Result<RefinedAffinity> {
    if weights.len() != h.n_edges() {
        return Err(shape_err(format!("{} weights for {} hyperedges", weights.len(), h.n_edges())));
    }
    let edge_scale: Vec<f64> = h
        .degrees
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(e, (&d, &w))| if d > 0.0 { Ok(w / d) } else { Err(Error::DegenerateSample(e)) })
        .collect::<Result<_>>()?;
    let mut factor = h.incidence.transpose();
    for (e, mut row) in factor.row_iter_mut().enumerate() {
        row *= edge_scale[e].sqrt();
    }
    let mut scaled = h.incidence.clone();
    for (e, mut col) in scaled.column_iter_mut().enumerate() {
        col *= edge_scale[e];
    }
    let s = scaled * h.incidence.transpose();
    let affinity = (&s + s.transpose()) * 0.5;
    Ok(RefinedAffinity { affinity, factor, edge_scale })
}
