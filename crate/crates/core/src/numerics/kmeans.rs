use nalgebra::DMatrix;
use rand::Rng as _;

use crate::error::{param_err, Result};
use crate::rng;

pub const MAX_LLOYD_ITERS: usize = 300;

/// Output of a k-means run.
#[derive(Debug, Clone)]
pub struct KMeansResult {
    /// k × d
    pub centers: DMatrix<f64>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances from each point to its assigned center.
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after the seeding assignment and after every Lloyd half-step.
    pub inertia_trace: Vec<f64>,
}

struct Rows {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl Rows {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (n, d) = m.shape();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            data.extend(m.row(i).iter());
        }
        Rows { data, n, d }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest center; ties go to the lowest index.
fn nearest(point: &[f64], centers: &[f64], d: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.chunks_exact(d).enumerate() {
        let dist = sq_dist(point, c);
        if dist < best.1 {
            best = (j, dist);
        }
    }
    best
}

fn plus_plus_seed(rows: &Rows, k: usize, rng: &mut rng::Rng) -> Vec<f64> {
    let (n, d) = (rows.n, rows.d);
    let mut centers = Vec::with_capacity(k * d);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centers.extend_from_slice(rows.row(first));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(rows.row(i), rows.row(first))).collect();
    for _ in 1..k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in dist.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `acc` just under `target`
            pick.unwrap_or_else(|| dist.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // every point coincides with a center already
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[next] = true;
        centers.extend_from_slice(rows.row(next));
        for (i, di) in dist.iter_mut().enumerate() {
            *di = di.min(sq_dist(rows.row(i), rows.row(next)));
        }
    }
    centers
}

fn assign(rows: &Rows, centers: &[f64], assignments: &mut [usize]) -> (bool, f64) {
    let mut changed = false;
    let mut inertia = 0.0;
    for (i, a) in assignments.iter_mut().enumerate() {
        let (j, dist) = nearest(rows.row(i), centers, rows.d);
        if *a != j {
            *a = j;
            changed = true;
        }
        inertia += dist;
    }
    (changed, inertia)
}

fn inertia_of(rows: &Rows, centers: &[f64], assignments: &[usize]) -> f64 {
    let d = rows.d;
    assignments
        .iter()
        .enumerate()
        .map(|(i, &j)| sq_dist(rows.row(i), &centers[j * d..(j + 1) * d]))
        .sum()
}

/// Recomputes centers as member means; an empty cluster takes the point of
/// the largest cluster that lies farthest from its center.
fn update_centers(rows: &Rows, k: usize, centers: &mut [f64], assignments: &mut [usize]) {
    let d = rows.d;
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0; k * d];
    for (i, &j) in assignments.iter().enumerate() {
        counts[j] += 1;
        for (s, x) in sums[j * d..(j + 1) * d].iter_mut().zip(rows.row(i)) {
            *s += x;
        }
    }
    for j in 0..k {
        if counts[j] > 0 {
            let c = counts[j] as f64;
            for t in 0..d {
                centers[j * d + t] = sums[j * d + t] / c;
            }
        }
    }
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let largest = (0..k).fold(0, |best, j| if counts[j] > counts[best] { j } else { best });
        let mut far = (usize::MAX, -1.0);
        for (i, &j) in assignments.iter().enumerate() {
            if j == largest {
                let dist = sq_dist(rows.row(i), &centers[j * d..(j + 1) * d]);
                if dist > far.1 {
                    far = (i, dist);
                }
            }
        }
        let (i, _) = far;
        assignments[i] = empty;
        counts[largest] -= 1;
        counts[empty] = 1;
        centers[empty * d..(empty + 1) * d].copy_from_slice(rows.row(i));
    }
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or [`MAX_LLOYD_ITERS`] is reached. `points` is n × d.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<KMeansResult> {
    let (n, d) = points.shape();
    if k == 0 || n < k {
        return Err(param_err(format!("kmeans needs n >= k >= 1, got n={n}, k={k}")));
    }
    let rows = Rows::from_matrix(points);
    let mut rng = rng::seeded(seed);
    let mut centers = plus_plus_seed(&rows, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let (_, mut inertia) = assign(&rows, &centers, &mut assignments);
    let mut trace = vec![inertia];
    let mut iterations = 0;
    while iterations < MAX_LLOYD_ITERS {
        iterations += 1;
        update_centers(&rows, k, &mut centers, &mut assignments);
        trace.push(inertia_of(&rows, &centers, &assignments));
        let (changed, new_inertia) = assign(&rows, &centers, &mut assignments);
        inertia = new_inertia;
        trace.push(inertia);
        if !changed {
            break;
        }
    }
    inertia = inertia_of(&rows, &centers, &assignments);
    let centers = DMatrix::from_row_slice(k, d, &centers);
    Ok(KMeansResult { centers, assignments, inertia, iterations, inertia_trace: trace })
}

/// Runs [`kmeans`] `restarts` times with derived seeds and keeps the lowest
/// inertia (earliest run on ties).
pub fn kmeans_best_of(points: &DMatrix<f64>, k: usize, seed: u64, restarts: usize) -> Result<KMeansResult> {
    let mut best = kmeans(points, k, seed)?;
    for r in 1..restarts.max(1) {
        let run = kmeans(points, k, rng::derive_seed(seed, r as u64))?;
        if run.inertia < best.inertia {
            best = run;
        }
    }
    Ok(best)
}
