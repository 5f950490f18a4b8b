use nalgebra::DMatrix;

use crate::error::{param_err, shape_err, Result};

pub const TARGET_EPS: f64 = 1e-12;

fn sq_dists(points: &DMatrix<f64>, centers: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(points.nrows(), centers.nrows(), |i, j| (points.row(i) - centers.row(j)).norm_squared())
}

/// Student-t soft assignment of `points` (n × p) to `centers` (K × p).
pub fn student_t_assign(points: &DMatrix<f64>, centers: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    if !(alpha > 0.0) {
        return Err(param_err(format!("alpha must be positive, got {alpha}")));
    }
    if points.ncols() != centers.ncols() || centers.nrows() == 0 {
        return Err(shape_err(format!("points {:?} vs centers {:?}", points.shape(), centers.shape())));
    }
    let d = sq_dists(points, centers);
    let expo = -(alpha + 1.0) / 2.0;
    let mut q = d.map(|x| expo * (x / alpha).ln_1p());
    for mut row in q.row_iter_mut() {
        let top = row.max();
        row.apply(|x| *x = (*x - top).exp());
        let s = row.sum();
        row /= s;
    }
    Ok(q)
}

/// Pulls `dq = dL/dQ` back through [`student_t_assign`], returning
/// `(dL/dpoints, dL/dcenters)`.
pub fn student_t_backward(
    points: &DMatrix<f64>,
    centers: &DMatrix<f64>,
    alpha: f64,
    q: &DMatrix<f64>,
    dq: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = sq_dists(points, centers);
    let (n, k) = q.shape();
    let mut d_points = DMatrix::zeros(n, points.ncols());
    let mut d_centers = DMatrix::zeros(k, centers.ncols());
    for i in 0..n {
        let inner: f64 = (0..k).map(|j| q[(i, j)] * dq[(i, j)]).sum();
        for j in 0..k {
            let d_logit = q[(i, j)] * (dq[(i, j)] - inner);
            let g = d_logit * -(alpha + 1.0) / (2.0 * (alpha + d[(i, j)]));
            for c in 0..points.ncols() {
                let diff = points[(i, c)] - centers[(j, c)];
                d_points[(i, c)] += 2.0 * g * diff;
                d_centers[(j, c)] -= 2.0 * g * diff;
            }
        }
    }
    (d_points, d_centers)
}

/// Sharpened targets: `q^2 / f_j` renormalized per row, with cluster
/// frequencies `f_j` guarded away from zero.
pub fn target_distribution(q: &DMatrix<f64>) -> DMatrix<f64> {
    let freq: Vec<f64> = q.column_iter().map(|c| c.sum().max(TARGET_EPS)).collect();
    let mut p = DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] * q[(i, j)] / freq[j]);
    for mut row in p.row_iter_mut() {
        let s = row.sum().max(TARGET_EPS);
        row /= s;
    }
    p
}

/// Largest deviation of a row sum from one.
pub fn row_sum_error(x: &DMatrix<f64>) -> f64 {
    x.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn equidistant_point_is_uniform() {
        let centers = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let q = student_t_assign(&DMatrix::zeros(1, 2), &centers, 1.0).unwrap();
        assert!(q.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn two_center_hand_value() {
        let centers = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let q = student_t_assign(&DMatrix::zeros(1, 1), &centers, 1.0).unwrap();
        assert!((q[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((q[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn nearest_center_dominates() {
        let centers = DMatrix::from_row_slice(3, 1, &[0.0, 50.0, -80.0]);
        let q = student_t_assign(&DMatrix::from_element(1, 1, 0.1), &centers, 1.0).unwrap();
        assert!(q[(0, 0)] > 0.99);
        assert!(student_t_assign(&DMatrix::zeros(1, 1), &centers, 0.0).is_err());
    }

    #[test]
    fn coincident_centers_are_allowed() {
        let centers = DMatrix::from_element(2, 3, 0.5);
        let q = student_t_assign(&DMatrix::zeros(5, 3), &centers, 2.0).unwrap();
        assert!(q.iter().all(|&x| (x - 0.5).abs() < 1e-15));
    }

    #[test]
    fn one_hot_and_uniform_targets_are_fixed_points() {
        let one_hot = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        assert_eq!(target_distribution(&one_hot), one_hot);
        let uniform = DMatrix::from_element(4, 3, 1.0 / 3.0);
        assert!((target_distribution(&uniform) - &uniform).amax() < 1e-15);
    }

    #[test]
    fn target_matches_cell_by_cell_formula() {
        let q = DMatrix::from_row_slice(
            4,
            3,
            &[0.2, 0.5, 0.3, 0.6, 0.1, 0.3, 0.25, 0.25, 0.5, 0.1, 0.8, 0.1],
        );
        let f = [1.15, 1.65, 1.2];
        let p = target_distribution(&q);
        for i in 0..4 {
            let num: Vec<f64> = (0..3).map(|j| q[(i, j)].powi(2) / f[j]).collect();
            let den: f64 = num.iter().sum();
            for j in 0..3 {
                assert!((p[(i, j)] - num[j] / den).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_cluster_gets_zero_target() {
        let q = DMatrix::from_row_slice(2, 3, &[0.5, 0.5, 0.0, 0.2, 0.8, 0.0]);
        let p = target_distribution(&q);
        assert_eq!(p.column(2).sum(), 0.0);
        assert!(row_sum_error(&p) < 1e-15);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut r = rng::seeded(3);
        let pts = DMatrix::from_fn(5, 2, |_, _| rng::normal(&mut r));
        let ctr = DMatrix::from_fn(3, 2, |_, _| rng::normal(&mut r));
        let w = DMatrix::from_fn(5, 3, |_, _| r.random_range(-1.0..1.0));
        let alpha = 1.5;
        let f = |p: &DMatrix<f64>, c: &DMatrix<f64>| student_t_assign(p, c, alpha).unwrap().component_mul(&w).sum();
        let q = student_t_assign(&pts, &ctr, alpha).unwrap();
        let (dp, dc) = student_t_backward(&pts, &ctr, alpha, &q, &w);
        let h = 1e-6;
        for idx in 0..pts.len() {
            let (mut a, mut b) = (pts.clone(), pts.clone());
            a[idx] += h;
            b[idx] -= h;
            let fd = (f(&a, &ctr) - f(&b, &ctr)) / (2.0 * h);
            assert!((fd - dp[idx]).abs() < 1e-7, "point {idx}: {fd} vs {}", dp[idx]);
        }
        for idx in 0..ctr.len() {
            let (mut a, mut b) = (ctr.clone(), ctr.clone());
            a[idx] += h;
            b[idx] -= h;
            let fd = (f(&pts, &a) - f(&pts, &b)) / (2.0 * h);
            assert!((fd - dc[idx]).abs() < 1e-7, "center {idx}: {fd} vs {}", dc[idx]);
        }
    }

    proptest! {
        #[test]
        fn assignments_and_targets_are_row_stochastic(
            pts in proptest::collection::vec(-5.0f64..5.0, 12),
            ctr in proptest::collection::vec(-5.0f64..5.0, 6),
            alpha in 0.1f64..5.0,
        ) {
            let p = DMatrix::from_vec(4, 3, pts);
            let c = DMatrix::from_vec(2, 3, ctr);
            let q = student_t_assign(&p, &c, alpha).unwrap();
            prop_assert!(q.iter().all(|&x| x >= 0.0));
            prop_assert!(row_sum_error(&q) < 1e-12);
            prop_assert!(row_sum_error(&target_distribution(&q)) < 1e-12);
        }
    }
}
