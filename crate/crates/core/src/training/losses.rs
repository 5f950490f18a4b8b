use nalgebra::DMatrix;

use crate::error::{shape_err, Result};

/// Floor applied to assignment probabilities inside logarithms.
pub const LOG_FLOOR: f64 = 1e-12;
/// Guard on cluster-column norms in the cosine similarity.
pub const NORM_EPS: f64 = 1e-12;

/// `sum_v KL(P || Q^(v))` with `P` held constant. Returns the value and
/// `dL/dQ^(v)` per view.
pub fn spec_loss(p: &DMatrix<f64>, qs: &[DMatrix<f64>]) -> Result<(f64, Vec<DMatrix<f64>>)> {
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(qs.len());
    for q in qs {
        if q.shape() != p.shape() {
            return Err(shape_err(format!("targets {:?} vs assignments {:?}", p.shape(), q.shape())));
        }
        let mut g = DMatrix::zeros(q.nrows(), q.ncols());
        for (idx, (&pi, &qi)) in p.iter().zip(q.iter()).enumerate() {
            if pi > 0.0 {
                let qc = qi.max(LOG_FLOOR);
                total += pi * (pi / qc).ln();
                if qi >= LOG_FLOOR {
                    g[idx] = -pi / qi;
                }
            }
        }
        grads.push(g);
    }
    Ok((total, grads))
}

/// `tr(Q^T L Q) / (n K)` and its gradient `2 L Q / (n K)` for symmetric `L`.
pub fn smoothness(l: &DMatrix<f64>, q: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let (n, k) = q.shape();
    let scale = 1.0 / (n * k) as f64;
    let lq = l * q;
    (q.component_mul(&lq).sum() * scale, lq * (2.0 * scale))
}

/// Inputs of one view's geometry term.
pub struct GeomView<'a> {
    /// n × d latent codes.
    pub latent: &'a DMatrix<f64>,
    /// d × m_v.
    pub anchors: &'a DMatrix<f64>,
    /// m_v × n.
    pub coeffs: &'a DMatrix<f64>,
    /// n × K.
    pub assign: &'a DMatrix<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeomParts {
    pub anchor_fit: f64,
    pub ridge: f64,
    pub smooth: f64,
}

impl GeomParts {
    pub fn total(&self, lambda_c: f64) -> f64 {
        self.anchor_fit + self.ridge + lambda_c * self.smooth
    }
}

/// `sum_v ||Z - (A C)^T||^2 + gamma ||C||^2 + lambda_c tr(Q^T L Q)/(nK)`.
/// Anchors and coefficients are constants; returns `(value, parts,
/// dL/dZ^(v), dL/dQ^(v))`.
pub fn geom_loss(
    views: &[GeomView<'_>],
    l_cos: &DMatrix<f64>,
    gamma: f64,
    lambda_c: f64,
) -> Result<(f64, GeomParts, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    let mut parts = GeomParts::default();
    let mut dz = Vec::with_capacity(views.len());
    let mut dq = Vec::with_capacity(views.len());
    for (v, gv) in views.iter().enumerate() {
        let (n, d) = gv.latent.shape();
        if gv.anchors.nrows() != d || gv.coeffs.nrows() != gv.anchors.ncols() || gv.coeffs.ncols() != n {
            return Err(shape_err(format!(
                "view {v}: latent {:?}, anchors {:?}, coeffs {:?}",
                gv.latent.shape(),
                gv.anchors.shape(),
                gv.coeffs.shape()
            )));
        }
        if gv.assign.nrows() != n || l_cos.shape() != (n, n) {
            return Err(shape_err(format!("view {v}: assignments or Laplacian do not match {n} samples")));
        }
        let resid = gv.latent - (gv.anchors * gv.coeffs).transpose();
        parts.anchor_fit += resid.norm_squared();
        parts.ridge += gamma * gv.coeffs.norm_squared();
        dz.push(resid * 2.0);
        if lambda_c != 0.0 {
            let (s, g) = smoothness(l_cos, gv.assign);
            parts.smooth += s;
            dq.push(g * lambda_c);
        } else {
            dq.push(DMatrix::zeros(n, gv.assign.ncols()));
        }
    }
    Ok((parts.total(lambda_c), parts, dz, dq))
}

fn column_stats(q: &DMatrix<f64>) -> Vec<f64> {
    q.column_iter().map(|c| c.norm().max(NORM_EPS)).collect()
}

/// Cluster-profile contrastive loss averaged over ordered view pairs, and
/// `dL/dQ^(v)` per view. Fewer than two views yields zero.
pub fn contrastive_loss(qs: &[DMatrix<f64>], tau: f64) -> Result<(f64, Vec<DMatrix<f64>>)> {
    let v_count = qs.len();
    let mut grads: Vec<DMatrix<f64>> = qs.iter().map(|q| DMatrix::zeros(q.nrows(), q.ncols())).collect();
    if v_count < 2 {
        log::warn!("contrastive loss needs at least two views; returning 0");
        return Ok((0.0, grads));
    }
    if !(tau > 0.0) {
        return Err(crate::error::param_err(format!("contrastive temperature must be positive, got {tau}")));
    }
    let shape = qs[0].shape();
    if qs.iter().any(|q| q.shape() != shape) {
        return Err(shape_err("all views need assignments of the same shape"));
    }
    let k = shape.1;
    let norms: Vec<Vec<f64>> = qs.iter().map(column_stats).collect();
    let pair_scale = 1.0 / (v_count * (v_count - 1)) as f64;
    let mut total = 0.0;
    for a in 0..v_count {
        for b in 0..v_count {
            if a == b {
                continue;
            }
            let (qa, qb) = (&qs[a], &qs[b]);
            let dots = qa.transpose() * qb;
            let sim = DMatrix::from_fn(k, k, |j, l| dots[(j, l)] / (norms[a][j] * norms[b][l]));
            // dL/dsim for this pair
            let mut dsim = DMatrix::zeros(k, k);
            let mut pair_loss = 0.0;
            for j in 0..k {
                let logits: Vec<f64> = (0..k).map(|l| sim[(j, l)] / tau).collect();
                let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = top + logits.iter().map(|x| (x - top).exp()).sum::<f64>().ln();
                pair_loss += lse - logits[j];
                for l in 0..k {
                    let soft = (logits[l] - lse).exp();
                    let target = if l == j { 1.0 } else { 0.0 };
                    dsim[(j, l)] = (soft - target) / tau / k as f64 * pair_scale;
                }
            }
            total += pair_loss / k as f64 * pair_scale;
            // cosine backward
            for j in 0..k {
                for l in 0..k {
                    let g = dsim[(j, l)];
                    if g == 0.0 {
                        continue;
                    }
                    let (na, nb) = (norms[a][j], norms[b][l]);
                    let s = sim[(j, l)];
                    let inv = 1.0 / (na * nb);
                    let col_a = qa.column(j).into_owned();
                    let col_b = qb.column(l).into_owned();
                    let mut da = grads[a].column_mut(j);
                    da.axpy(g * inv, &col_b, 1.0);
                    da.axpy(-g * s / (na * na), &col_a, 1.0);
                    let mut db = grads[b].column_mut(l);
                    db.axpy(g * inv, &col_a, 1.0);
                    db.axpy(-g * s / (nb * nb), &col_b, 1.0);
                }
            }
        }
    }
    Ok((total, grads))
}
