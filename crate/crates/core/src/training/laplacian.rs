use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{shape_err, Result};
use crate::magnetic::MagneticGeometry;

/// Sample-level lift of the magnetic adjacency and its cosine Laplacian.
#[derive(Debug, Clone)]
pub struct SampleLaplacian {
    /// `M A M^T`, n × n.
    pub lifted: DMatrix<Complex64>,
    /// `[Re(M A M^T)]_+`, symmetrized.
    pub affinity: DMatrix<f64>,
    pub degrees: Vec<f64>,
    pub laplacian: DMatrix<f64>,
}

/// `|z| cos(arg z) = Re z`, so the cosine affinity is the clipped real part
/// of the lifted adjacency. Zero-degree samples get identity rows.
pub fn sample_laplacian(geom: &MagneticGeometry, lift: &DMatrix<f64>) -> Result<SampleLaplacian> {
    let m = geom.adjacency.nrows();
    if lift.ncols() != m {
        return Err(shape_err(format!("lift has {} columns for {m} anchors", lift.ncols())));
    }
    let re = geom.adjacency.map(|z| z.re);
    let im = geom.adjacency.map(|z| z.im);
    let lt = lift.transpose();
    let lifted_re = lift * re * &lt;
    let lifted_im = lift * im * &lt;
    let n = lift.nrows();
    let lifted = DMatrix::from_fn(n, n, |i, j| Complex64::new(lifted_re[(i, j)], lifted_im[(i, j)]));
    let clipped = lifted_re.map(|x| x.max(0.0));
    let affinity = (&clipped + clipped.transpose()) * 0.5;
    let degrees: Vec<f64> = affinity.row_iter().map(|r| r.sum()).collect();
    let inv: Vec<f64> = degrees.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    let laplacian = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - affinity[(i, j)] * (inv[i] * inv[j])
    });
    Ok(SampleLaplacian { lifted, affinity, degrees, laplacian })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::magnetic::{magnetic_laplacian, random_phase};
    use crate::numerics::symmetric_eigs;
    use crate::rng;
    use rand::Rng as _;
    use std::f64::consts::PI;

    fn random_lift(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng::seeded(seed);
        let mut l = DMatrix::from_fn(n, m, |_, _| if r.random_bool(0.5) { r.random::<f64>() } else { 0.0 });
        for (i, mut row) in l.row_iter_mut().enumerate() {
            if row.sum() == 0.0 {
                row[i % m] = 1.0;
            }
            let s = row.sum();
            row /= s;
        }
        l
    }

    fn random_affinity(m: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng::seeded(seed);
        let s = DMatrix::from_fn(m, m, |_, _| r.random::<f64>());
        (&s + s.transpose()) * 0.5
    }

    #[test]
    fn zero_phase_lifts_the_magnitude() {
        let s = random_affinity(4, 1);
        let lift = random_lift(7, 4, 2);
        let g = magnetic_laplacian(&s, &DMatrix::zeros(4, 4)).unwrap();
        let sl = sample_laplacian(&g, &lift).unwrap();
        let expect = &lift * &s * lift.transpose();
        assert!((&sl.affinity - &expect).amax() < 1e-14);
        assert!(sl.lifted.iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn opposing_phase_is_clipped() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let theta = DMatrix::from_row_slice(2, 2, &[0.0, PI, -PI, 0.0]);
        let g = magnetic_laplacian(&s, &theta).unwrap();
        let sl = sample_laplacian(&g, &DMatrix::identity(2, 2)).unwrap();
        assert!(sl.lifted[(0, 1)].re < 0.0);
        assert_eq!(sl.affinity, DMatrix::zeros(2, 2));
        // both samples isolated: identity Laplacian
        assert_eq!(sl.laplacian, DMatrix::identity(2, 2));
    }

    #[test]
    fn random_instances_have_bounded_spectrum() {
        for seed in 0..10 {
            let s = random_affinity(5, seed);
            let theta = random_phase(&s, 0.9, seed).unwrap().theta;
            let g = magnetic_laplacian(&s, &theta).unwrap();
            let sl = sample_laplacian(&g, &random_lift(9, 5, seed)).unwrap();
            assert_eq!(sl.laplacian, sl.laplacian.transpose());
            let eig = symmetric_eigs(&sl.laplacian, 9).unwrap();
            assert!(eig.eigenvalues.iter().all(|&l| (-1e-8..=2.0 + 1e-8).contains(&l)));
        }
    }
}
