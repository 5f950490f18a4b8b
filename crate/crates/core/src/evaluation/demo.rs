use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dataset::fmt_f64;
use crate::error::{param_err, shape_err, Result};
use crate::magnetic::magnetic_laplacian;
use crate::numerics::hermitian_eigs;

/// Spectra of a unit cycle under consistent and alternating edge phases.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSpectra {
    pub theta: f64,
    pub consistent: Vec<f64>,
    pub alternating: Vec<f64>,
}

impl CycleSpectra {
    pub fn max_abs_difference(&self) -> f64 {
        self.consistent.iter().zip(&self.alternating).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,consistent,alternating\n");
        for (i, (a, b)) in self.consistent.iter().zip(&self.alternating).enumerate() {
            let _ = writeln!(out, "{i},{},{}", fmt_f64(*a), fmt_f64(*b));
        }
        out
    }
}

/// Cycle `0 -> 1 -> ... -> N-1 -> 0` where edge `e` carries phase
/// `phases[e]` along its traversal direction. Parallel edges (N = 2) are
/// merged by summing their unit phasors.
fn cycle_spectrum(phases: &[f64]) -> Result<Vec<f64>> {
    let n = phases.len();
    let mut z = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (e, &phi) in phases.iter().enumerate() {
        let (a, b) = (e, (e + 1) % n);
        z[(a, b)] += Complex64::from_polar(1.0, phi);
        z[(b, a)] += Complex64::from_polar(1.0, -phi);
    }
    let s = z.map(|w| w.norm());
    let s = (&s + s.transpose()) * 0.5;
    let mut theta = DMatrix::from_fn(n, n, |i, j| if s[(i, j)] > 0.0 { z[(i, j)].arg() } else { 0.0 });
    theta = (&theta - theta.transpose()) * 0.5;
    let geom = magnetic_laplacian(&s, &theta)?;
    Ok(hermitian_eigs(&geom.laplacian, n)?.eigenvalues)
}

/// Unit-magnitude cycle with `+theta` on every edge versus alternating
/// `+theta, -theta`.
pub fn fig1_demo(cycle_size: usize, theta: f64) -> Result<CycleSpectra> {
    if cycle_size < 2 {
        return Err(param_err(format!("cycle needs at least 2 nodes, got {cycle_size}")));
    }
    let consistent = vec![theta; cycle_size];
    let alternating: Vec<f64> = (0..cycle_size).map(|e| if e % 2 == 0 { theta } else { -theta }).collect();
    Ok(CycleSpectra { theta, consistent: cycle_spectrum(&consistent)?, alternating: cycle_spectrum(&alternating)? })
}

/// Sample order sorted by label, then index.
pub fn label_order(truth: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..truth.len()).collect();
    order.sort_by_key(|&i| (truth[i], i));
    order
}

/// `s` with rows and columns permuted into [`label_order`].
pub fn reordered_affinity(s: &DMatrix<f64>, truth: &[usize]) -> Result<DMatrix<f64>> {
    if truth.is_empty() {
        return Err(param_err("reordering needs ground-truth labels"));
    }
    if s.nrows() != truth.len() || !s.is_square() {
        return Err(shape_err(format!("affinity {:?} for {} labels", s.shape(), truth.len())));
    }
    let order = label_order(truth);
    Ok(DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| s[(order[i], order[j])]))
}

/// Total affinity mass inside label blocks and between them.
pub fn block_mass(s: &DMatrix<f64>, truth: &[usize]) -> (f64, f64) {
    let mut within = 0.0;
    let mut between = 0.0;
    for i in 0..s.nrows() {
        for j in 0..s.ncols() {
            if truth[i] == truth[j] {
                within += s[(i, j)];
            } else {
                between += s[(i, j)];
            }
        }
    }
    (within, between)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    #[test]
    fn zero_phase_spectra_coincide() {
        for n in 2..10 {
            let t = fig1_demo(n, 0.0).unwrap();
            assert!(t.max_abs_difference() < 1e-12);
        }
    }

    #[test]
    fn unit_cycle_zero_phase_hand_spectrum() {
        // eigenvalues 1 - cos(2 pi j / N)
        let t = fig1_demo(8, 0.0).unwrap();
        let mut expect: Vec<f64> = (0..8).map(|j| 1.0 - (2.0 * PI * j as f64 / 8.0).cos()).collect();
        expect.sort_by(f64::total_cmp);
        for (a, b) in t.consistent.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn flux_determines_the_cycle_spectrum() {
        // a consistent phase on a 5-cycle has flux 5 theta; the spectrum is
        // 1 - cos((2 pi j + flux) / N)
        let theta = 0.3;
        let t = fig1_demo(5, theta).unwrap();
        let mut expect: Vec<f64> = (0..5).map(|j| 1.0 - ((2.0 * PI * j as f64 + 5.0 * theta) / 5.0).cos()).collect();
        expect.sort_by(f64::total_cmp);
        for (a, b) in t.consistent.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(t.max_abs_difference() > 0.01);
    }

    #[test]
    fn two_node_cycle_merges_parallel_edges() {
        let t = fig1_demo(2, FRAC_PI_4).unwrap();
        assert_eq!(t.consistent.len(), 2);
        // alternating: both phasors agree, flux-free 2-node graph
        assert!(t.alternating[0].abs() < 1e-12 && (t.alternating[1] - 2.0).abs() < 1e-12);
        assert!(fig1_demo(1, 0.1).is_err());
    }

    #[test]
    fn sorted_labels_give_identity_reordering() {
        let s = DMatrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64);
        assert_eq!(reordered_affinity(&s, &[0, 0, 1, 2]).unwrap(), s);
        let r = reordered_affinity(&s, &[1, 0, 1, 0]).unwrap();
        assert_eq!(r[(0, 0)], s[(1, 1)]);
        assert_eq!(r[(0, 1)], s[(1, 3)]);
        assert!(reordered_affinity(&s, &[]).is_err());
    }
}
