use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{param_err, shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityMetrics {
    pub eigengap: f64,
    /// Mean principal angle in radians; `None` without a second run.
    pub subspace: Option<f64>,
    pub inertia: f64,
}

/// `lambda_{K+1} - lambda_K` for an ascending spectrum, 1-indexed.
pub fn eigengap(eigenvalues: &[f64], k: usize) -> Result<f64> {
    if k == 0 || eigenvalues.len() < k + 1 {
        return Err(param_err(format!("eigengap needs K >= 1 and {} values, got {}", k + 1, eigenvalues.len())));
    }
    Ok(eigenvalues[k] - eigenvalues[k - 1])
}

/// The `k` dominant left singular vectors of `u`: an orthonormal basis for
/// its principal `k`-dimensional column subspace.
pub fn orthonormal_basis(u: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    if k == 0 || k > u.ncols().min(u.nrows()) {
        return Err(param_err(format!("cannot take {k} directions from a {:?} matrix", u.shape())));
    }
    let svd = u.clone().svd(true, false);
    let left = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    Ok(DMatrix::from_fn(u.nrows(), k, |i, j| left[(i, order[j])]))
}

fn is_orthonormal(x: &DMatrix<f64>) -> bool {
    let gram = x.transpose() * x;
    (gram - DMatrix::identity(x.ncols(), x.ncols())).amax() <= 1e-6
}

/// Mean principal angle between the column spaces of `a` and `b`
/// (both n × K). Non-orthonormal inputs are orthonormalized first.
pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(shape_err(format!("bases {:?} vs {:?}", a.shape(), b.shape())));
    }
    let k = a.ncols();
    let fix = |x: &DMatrix<f64>| if is_orthonormal(x) { Ok(x.clone()) } else { orthonormal_basis(x, k) };
    let (qa, qb) = (fix(a)?, fix(b)?);
    let sv = (qa.transpose() * qb).singular_values();
    Ok(sv.iter().map(|s| s.clamp(0.0, 1.0).acos()).sum::<f64>() / k as f64)
}
