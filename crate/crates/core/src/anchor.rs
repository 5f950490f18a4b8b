//! Anchor hypergraph: per-view latent anchors, simplex-constrained
//! sample-to-anchor coefficients, and top-r sparsified incidence.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::dataset::fmt_f64;
use crate::error::{param_err, shape_err, Error, Result};
use crate::numerics::{kmeans, project_to_simplex_into};
use crate::rng;

pub const QP_MAX_ITERS: usize = 500;
pub const QP_TOL: f64 = 1e-8;

/// Per-view anchors laid out contiguously in a global index space.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    /// One d × m_v matrix per view; columns are anchors.
    pub anchors: Vec<DMatrix<f64>>,
    /// `offsets[v]..offsets[v + 1]` are the global indices of view `v`.
    pub offsets: Vec<usize>,
}

impl AnchorSet {
    pub fn from_anchors(anchors: Vec<DMatrix<f64>>) -> Self {
        let mut offsets = vec![0];
        for a in &anchors {
            offsets.push(offsets.last().unwrap() + a.ncols());
        }
        AnchorSet { anchors, offsets }
    }

    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn global_index(&self, view: usize, local: usize) -> usize {
        self.offsets[view] + local
    }

    pub fn view_of(&self, global: usize) -> usize {
        self.offsets.windows(2).position(|w| global < w[1]).expect("global anchor index in range")
    }
}

/// `max(k, ceil(sqrt(n)))`, capped at 200 and at `n`.
pub fn default_anchor_count(n: usize, k: usize) -> usize {
    let root = (n as f64).sqrt().ceil() as usize;
    k.max(root).min(200).min(n)
}

/// Anchors are the k-means centers of each view's latent codes (`n × d`).
pub fn init_anchors(latents: &[DMatrix<f64>], counts: &[usize], seed: u64) -> Result<AnchorSet> {
    if latents.len() != counts.len() {
        return Err(shape_err(format!("{} views but {} anchor counts", latents.len(), counts.len())));
    }
    let mut anchors = Vec::with_capacity(latents.len());
    for (v, (z, &m)) in latents.iter().zip(counts).enumerate() {
        if m == 0 || m > z.nrows() {
            return Err(param_err(format!("view {v}: {m} anchors for {} samples", z.nrows())));
        }
        let res = kmeans(z, m, rng::derive_seed(seed, v as u64))?;
        anchors.push(res.centers.transpose());
    }
    Ok(AnchorSet::from_anchors(anchors))
}

/// Coefficients of every view plus their vertical concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrices {
    /// One m_v × n matrix per view; every column lies on the simplex.
    pub per_view: Vec<DMatrix<f64>>,
    /// m × n.
    pub stacked: DMatrix<f64>,
    pub offsets: Vec<usize>,
}

impl CoefficientMatrices {
    pub fn new(per_view: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = per_view.first().map_or(0, |c| c.ncols());
        if per_view.iter().any(|c| c.ncols() != n) {
            return Err(shape_err("coefficient matrices disagree on sample count"));
        }
        let mut offsets = vec![0];
        for c in &per_view {
            offsets.push(offsets.last().unwrap() + c.nrows());
        }
        let m = *offsets.last().unwrap();
        let mut stacked = DMatrix::zeros(m, n);
        for (v, c) in per_view.iter().enumerate() {
            stacked.rows_mut(offsets[v], c.nrows()).copy_from(c);
        }
        Ok(CoefficientMatrices { per_view, stacked, offsets })
    }

    pub fn n_samples(&self) -> usize {
        self.stacked.ncols()
    }
}

/// `||z - A c||^2 + gamma ||c||^2`.
pub fn qp_objective(z: &[f64], anchors: &DMatrix<f64>, gamma: f64, c: &[f64]) -> f64 {
    let d = anchors.nrows();
    let mut fit = 0.0;
    for t in 0..d {
        let recon: f64 = c.iter().enumerate().map(|(j, cj)| anchors[(t, j)] * cj).sum();
        fit += (z[t] - recon).powi(2);
    }
    fit + gamma * c.iter().map(|x| x * x).sum::<f64>()
}

fn ensure_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{what} contains non-finite values")))
    }
}

/// Solves the simplex-constrained ridge QP for every row of `latent`
/// (`n × d`) against `anchors` (`d × m`), returning `m × n`.
///
/// Accelerated projected gradient with step `1/L` and gradient restarts.
/// Stops when the iterate moves less than [`QP_TOL`] or after
/// [`QP_MAX_ITERS`] steps.
///
/// Since `1^T c = 1`, `A c = a_bar + (A - a_bar 1^T) c` with `a_bar` the mean
/// anchor, so the objective is solved in centred form. On the simplex it is
/// the same function, but `L` = top eigenvalue of `2(Ac^T Ac + gamma I)` is
/// far smaller than for `A` itself when the anchors share an offset.
pub fn solve_coefficients(latent: &DMatrix<f64>, anchors: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    let (n, d) = latent.shape();
    let m = anchors.ncols();
    if m == 0 {
        return Err(param_err("no anchors"));
    }
    if anchors.nrows() != d {
        return Err(shape_err(format!("latent dim {d} but anchors have dim {}", anchors.nrows())));
    }
    if !(gamma >= 0.0) {
        return Err(param_err(format!("gamma must be >= 0, got {gamma}")));
    }
    ensure_finite(latent, "latent codes")?;
    ensure_finite(anchors, "anchors")?;

    let mean = anchors.column_mean();
    let mut centred = anchors.clone();
    for mut col in centred.column_iter_mut() {
        col -= &mean;
    }
    let mut hess = centred.transpose() * &centred;
    for i in 0..m {
        hess[(i, i)] += gamma;
    }
    hess *= 2.0;
    let lipschitz = SymmetricEigen::new(hess.clone()).eigenvalues.max();
    let mut out = DMatrix::zeros(m, n);
    if m == 1 || lipschitz <= 0.0 {
        out.fill(1.0 / m as f64);
        return Ok(out);
    }
    let step = 1.0 / lipschitz;
    // dense row-major copies keep the inner loop allocation-free
    let h: Vec<f64> = (0..m * m).map(|idx| hess[(idx / m, idx % m)]).collect();
    let solver = ColumnSolver { h, anchors: &centred, step, m };
    let mut work = QpWork::new(m);
    for s in 0..n {
        let z: Vec<f64> = latent.row(s).iter().zip(mean.iter()).map(|(z, a)| z - a).collect();
        solver.solve(&z, &mut work);
        out.column_mut(s).copy_from_slice(&work.x);
    }
    Ok(out)
}

struct ColumnSolver<'a> {
    /// `2(A^T A + gamma I)`, symmetric.
    h: Vec<f64>,
    anchors: &'a DMatrix<f64>,
    step: f64,
    m: usize,
}

struct QpWork {
    x: Vec<f64>,
    y: Vec<f64>,
    x_new: Vec<f64>,
    cand: Vec<f64>,
    linear: Vec<f64>,
    sorted: Vec<f64>,
}

impl QpWork {
    fn new(m: usize) -> Self {
        let v = || vec![0.0; m];
        QpWork { x: v(), y: v(), x_new: v(), cand: v(), linear: v(), sorted: v() }
    }
}

impl ColumnSolver<'_> {
    fn solve(&self, z: &[f64], w: &mut QpWork) {
        let m = self.m;
        for (j, lj) in w.linear.iter_mut().enumerate() {
            *lj = 2.0 * self.anchors.column(j).iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        }
        w.x.fill(1.0 / m as f64);
        w.y.copy_from_slice(&w.x);
        let mut t = 1.0f64;
        for _ in 0..QP_MAX_ITERS {
            // gradient as a sum of Hessian columns
            for (c, l) in w.cand.iter_mut().zip(&w.linear) {
                *c = -l;
            }
            for (j, &yj) in w.y.iter().enumerate() {
                // iterates sit on a low-dimensional face; most entries are exactly zero
                if yj == 0.0 {
                    continue;
                }
                for (c, &hij) in w.cand.iter_mut().zip(&self.h[j * m..(j + 1) * m]) {
                    *c += hij * yj;
                }
            }
            for (c, &yi) in w.cand.iter_mut().zip(&w.y) {
                *c = yi - self.step * *c;
            }
            project_to_simplex_into(&w.cand, &mut w.sorted, &mut w.x_new);
            let mut change = 0.0;
            let mut progress = 0.0;
            for i in 0..m {
                let dx = w.x_new[i] - w.x[i];
                change += dx * dx;
                progress += (w.y[i] - w.x_new[i]) * dx;
            }
            if progress > 0.0 {
                // momentum points uphill: restart it
                t = 1.0;
                w.y.copy_from_slice(&w.x_new);
            } else {
                let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let beta = (t - 1.0) / t_new;
                for i in 0..m {
                    w.y[i] = w.x_new[i] + (w.x_new[i] - w.x[i]) * beta;
                }
                t = t_new;
            }
            std::mem::swap(&mut w.x, &mut w.x_new);
            if change.sqrt() < QP_TOL {
                break;
            }
        }
    }
}

/// [`solve_coefficients`] for every view.
pub fn solve_all(latents: &[DMatrix<f64>], anchors: &AnchorSet, gamma: f64) -> Result<CoefficientMatrices> {
    if latents.len() != anchors.anchors.len() {
        return Err(shape_err("one anchor matrix per view required"));
    }
    let per_view = latents
        .iter()
        .zip(&anchors.anchors)
        .map(|(z, a)| solve_coefficients(z, a, gamma))
        .collect::<Result<Vec<_>>>()?;
    CoefficientMatrices::new(per_view)
}

/// Samples are hyperedges over anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorHypergraph {
    /// m × n, at most `r` nonzeros per column.
    pub incidence: DMatrix<f64>,
    /// Hyperedge weights, length n.
    pub weights: Vec<f64>,
    /// Column sums of the incidence, length n.
    pub degrees: Vec<f64>,
}

impl AnchorHypergraph {
    pub fn new(incidence: DMatrix<f64>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != incidence.ncols() {
            return Err(shape_err("one weight per hyperedge required"));
        }
        let degrees: Vec<f64> = incidence.column_iter().map(|c| c.sum()).collect();
        if let Some(e) = degrees.iter().position(|&d| !(d > 0.0)) {
            return Err(Error::DegenerateSample(e));
        }
        Ok(AnchorHypergraph { incidence, weights, degrees })
    }

    pub fn n_anchors(&self) -> usize {
        self.incidence.nrows()
    }

    pub fn n_edges(&self) -> usize {
        self.incidence.ncols()
    }

    /// Anchor indices with a positive incidence entry in hyperedge `e`.
    pub fn support(&self, e: usize) -> Vec<usize> {
        self.incidence.column(e).iter().enumerate().filter(|(_, &h)| h > 0.0).map(|(a, _)| a).collect()
    }
}

/// Keeps the `r` largest entries of each column of the stacked coefficients
/// (ties to the lower global index); weights start at one.
pub fn build_incidence(coeffs: &CoefficientMatrices, r: usize) -> Result<AnchorHypergraph> {
    if r == 0 {
        return Err(param_err("r must be >= 1"));
    }
    let c = &coeffs.stacked;
    let (m, n) = c.shape();
    let mut h = DMatrix::zeros(m, n);
    for s in 0..n {
        let col = c.column(s);
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&a, &b| col[b].total_cmp(&col[a]).then(a.cmp(&b)));
        for &a in idx.iter().take(r) {
            h[(a, s)] = col[a];
        }
        if h.column(s).iter().all(|&x| x <= 0.0) {
            return Err(Error::DegenerateSample(s));
        }
    }
    AnchorHypergraph::new(h, vec![1.0; n])
}

/// `row,col,value` lines for the nonzero entries of `m`.
pub fn triples_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::from("row,col,value\n");
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let x = m[(i, j)];
            if x != 0.0 {
                out.push_str(&format!("{i},{j},{}\n", fmt_f64(x)));
            }
        }
    }
    out
}
