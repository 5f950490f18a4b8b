use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{param_err, Error, Result};

/// Largest tolerated `|L - L*|` entry before a matrix is rejected as
/// non-Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// The `p` smallest eigenpairs of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// dim × p, orthonormal columns, each gauge-fixed.
    pub eigenvectors: DMatrix<Complex64>,
}

/// The `p` smallest eigenpairs of a real symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigenPairs {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

/// Lowest index whose magnitude is within a relative 1e-9 of the maximum.
fn gauge_index(mags: impl Iterator<Item = f64> + Clone) -> usize {
    let max = mags.clone().fold(0.0f64, f64::max);
    mags.into_iter().position(|m| m >= max * (1.0 - 1e-9)).unwrap_or(0)
}

fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx
}

/// Smallest `p` eigenpairs of a Hermitian matrix.
///
/// The input is symmetrized as `(L + L*) / 2` when it is Hermitian within
/// [`HERMITIAN_TOL`]. Each returned eigenvector is rotated by a unit scalar so
/// that its largest-magnitude entry is real and positive.
pub fn hermitian_eigs(l: &DMatrix<Complex64>, p: usize) -> Result<HermitianEigen> {
    let dim = l.nrows();
    if l.ncols() != dim {
        return Err(Error::Shape(format!("hermitian_eigs needs a square matrix, got {:?}", l.shape())));
    }
    if p > dim {
        return Err(param_err(format!("requested {p} eigenpairs of a {dim}x{dim} matrix")));
    }
    let adjoint = l.adjoint();
    let skew = (l - &adjoint).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if skew > HERMITIAN_TOL {
        return Err(Error::Contract(format!("matrix is not Hermitian: max |L - L*| = {skew:e}")));
    }
    let sym = (l + adjoint) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let order = ascending_order(eig.eigenvalues.as_slice());
    let mut vectors = DMatrix::zeros(dim, p);
    let mut values = Vec::with_capacity(p);
    for (out, &src) in order.iter().take(p).enumerate() {
        values.push(eig.eigenvalues[src]);
        let col = eig.eigenvectors.column(src);
        let g = gauge_index(col.iter().map(|z| z.norm()));
        let pivot = col[g];
        let rot = if pivot.norm() > 0.0 { pivot.conj() / pivot.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..dim {
            vectors[(i, out)] = col[i] * rot;
        }
        vectors[(g, out)].im = 0.0;
    }
    Ok(HermitianEigen { eigenvalues: values, eigenvectors: vectors })
}

/// Real symmetric counterpart of [`hermitian_eigs`] with the same ordering
/// and sign convention (largest-magnitude entry positive).
pub fn symmetric_eigs(l: &DMatrix<f64>, p: usize) -> Result<SymmetricEigenPairs> {
    let dim = l.nrows();
    if l.ncols() != dim {
        return Err(Error::Shape(format!("symmetric_eigs needs a square matrix, got {:?}", l.shape())));
    }
    if p > dim {
        return Err(param_err(format!("requested {p} eigenpairs of a {dim}x{dim} matrix")));
    }
    let t = l.transpose();
    let skew = (l - &t).amax();
    if skew > HERMITIAN_TOL {
        return Err(Error::Contract(format!("matrix is not symmetric: max |L - L^T| = {skew:e}")));
    }
    let eig = SymmetricEigen::new((l + t) * 0.5);
    let order = ascending_order(eig.eigenvalues.as_slice());
    let mut vectors = DMatrix::zeros(dim, p);
    let mut values = Vec::with_capacity(p);
    for (out, &src) in order.iter().take(p).enumerate() {
        values.push(eig.eigenvalues[src]);
        let col = eig.eigenvectors.column(src);
        let g = gauge_index(col.iter().map(|x| x.abs()));
        let sign = if col[g] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..dim {
            vectors[(i, out)] = col[i] * sign;
        }
    }
    Ok(SymmetricEigenPairs { eigenvalues: values, eigenvectors: vectors })
}
