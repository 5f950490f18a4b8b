/// Euclidean projection of `v` onto the probability simplex.
///
/// The result is `max(v - theta, 0)`, where the threshold `theta` makes it sum
/// to one. `theta` is found by Michelot's fixed point: average the active set,
/// drop the entries at or below the average, and repeat. Each pass only
/// shrinks the active set, so no sort is needed.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    project_to_simplex_into(v, &mut Vec::with_capacity(v.len()), &mut out);
    out
}

/// [`project_to_simplex`] writing into `out`, with `scratch` reused for
/// the active set.
pub fn project_to_simplex_into(v: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) {
    scratch.clear();
    scratch.extend_from_slice(v);
    let mut theta = (scratch.iter().sum::<f64>() - 1.0) / scratch.len() as f64;
    loop {
        let before = scratch.len();
        scratch.retain(|&x| x > theta);
        if scratch.len() == before || scratch.is_empty() {
            break;
        }
        theta = (scratch.iter().sum::<f64>() - 1.0) / scratch.len() as f64;
    }
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - theta).max(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn point_on_simplex_is_fixed() {
        let v = [0.2, 0.5, 0.3];
        let x = project_to_simplex(&v);
        for (a, b) in x.iter().zip(v) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn dominant_coordinate() {
        assert_eq!(project_to_simplex(&[10.0, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn uniform_shift() {
        let x = project_to_simplex(&[0.0, 0.0, 0.0, 0.0]);
        assert!(x.iter().all(|&xi| (xi - 0.25).abs() < 1e-15));
    }

    fn sort_threshold(v: &[f64]) -> Vec<f64> {
        let mut u = v.to_vec();
        u.sort_by(|a, b| b.total_cmp(a));
        let (mut cum, mut theta) = (0.0, 0.0);
        for (j, uj) in u.iter().enumerate() {
            cum += uj;
            let t = (cum - 1.0) / (j + 1) as f64;
            if uj - t > 0.0 {
                theta = t;
            }
        }
        v.iter().map(|x| (x - theta).max(0.0)).collect()
    }

    proptest! {
        #[test]
        fn matches_sort_threshold(v in prop::collection::vec(-5.0f64..5.0, 1..40)) {
            for (a, b) in project_to_simplex(&v).iter().zip(sort_threshold(&v)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn satisfies_kkt(v in prop::collection::vec(-5.0f64..5.0, 1..12)) {
            let x = project_to_simplex(&v);
            let sum: f64 = x.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(x.iter().all(|&xi| xi >= 0.0));
            // a single threshold explains every coordinate
            let (i, _) = x.iter().enumerate().find(|(_, &xi)| xi > 0.0).unwrap();
            let theta = v[i] - x[i];
            for (xi, vi) in x.iter().zip(&v) {
                prop_assert!((xi - (vi - theta).max(0.0)).abs() < 1e-10);
            }
        }
    }
}
