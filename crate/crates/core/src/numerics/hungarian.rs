use nalgebra::DMatrix;

/// Optimal assignment by the shortest-augmenting-path Hungarian method with
/// row/column potentials. Returns `(cost, perm)` with `perm[row] = col`.
pub fn assignment_cost(costs: &DMatrix<f64>) -> (f64, Vec<usize>) {
    let n = costs.nrows();
    assert_eq!(n, costs.ncols(), "assignment needs a square cost matrix");
    if n == 0 {
        return (0.0, Vec::new());
    }
    // 1-based arrays; index 0 is the virtual source column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = costs[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    let cost = perm.iter().enumerate().map(|(i, &j)| costs[(i, j)]).sum();
    (cost, perm)
}

fn sub_cost(costs: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> f64 {
    let sub = DMatrix::from_fn(rows.len(), cols.len(), |a, b| costs[(rows[a], cols[b])]);
    assignment_cost(&sub).0
}

/// Minimum-cost perfect matching on a square cost matrix. Among optimal
/// matchings (within a relative 1e-9) the lexicographically smallest
/// permutation is returned; `perm[row] = col`.
pub fn hungarian(costs: &DMatrix<f64>) -> Vec<usize> {
    let n = costs.nrows();
    let (best, _) = assignment_cost(costs);
    let tol = 1e-9 * (1.0 + best.abs());
    let mut perm = Vec::with_capacity(n);
    let mut free: Vec<usize> = (0..n).collect();
    let mut prefix = 0.0;
    for row in 0..n {
        let rest_rows: Vec<usize> = (row + 1..n).collect();
        let mut pick = None;
        for (slot, &col) in free.iter().enumerate() {
            let rest_cols: Vec<usize> = free.iter().copied().filter(|&c| c != col).collect();
            let total = prefix + costs[(row, col)] + sub_cost(costs, &rest_rows, &rest_cols);
            if total <= best + tol {
                pick = Some(slot);
                break;
            }
        }
        // tolerance guarantees some column qualifies; fall back to the cheapest
        let slot = pick.unwrap_or_else(|| {
            (0..free.len()).min_by(|&a, &b| costs[(row, free[a])].total_cmp(&costs[(row, free[b])])).unwrap()
        });
        let col = free.remove(slot);
        prefix += costs[(row, col)];
        perm.push(col);
    }
    perm
}
