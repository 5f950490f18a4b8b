use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{shape_err, Result};
use crate::numerics::hungarian;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusteringMetrics {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

/// Contingency table with predicted ids as rows and true ids as columns.
pub fn contingency(pred: &[usize], truth: &[usize]) -> Result<DMatrix<f64>> {
    if pred.len() != truth.len() {
        return Err(shape_err(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    let rows = pred.iter().max().map_or(0, |m| m + 1);
    let cols = truth.iter().max().map_or(0, |m| m + 1);
    let mut table = DMatrix::zeros(rows, cols);
    for (&p, &t) in pred.iter().zip(truth) {
        table[(p, t)] += 1.0;
    }
    Ok(table)
}

/// Best one-to-one relabeling accuracy (Hungarian on negated counts).
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    if pred.is_empty() {
        return Ok(1.0);
    }
    let size = table.nrows().max(table.ncols());
    let square = DMatrix::from_fn(size, size, |i, j| {
        if i < table.nrows() && j < table.ncols() {
            -table[(i, j)]
        } else {
            0.0
        }
    });
    let perm = hungarian(&square);
    let matched: f64 = perm.iter().enumerate().map(|(i, &j)| -square[(i, j)]).sum();
    Ok(matched / pred.len() as f64)
}

fn entropy(counts: impl Iterator<Item = f64>, n: f64) -> f64 {
    counts.filter(|&c| c > 0.0).map(|c| -(c / n) * (c / n).ln()).sum()
}

/// Normalized mutual information with arithmetic-mean normalization.
/// Two constant labelings are taken as identical (1).
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let n = pred.len() as f64;
    if pred.is_empty() {
        return Ok(1.0);
    }
    let row_sums: Vec<f64> = table.row_iter().map(|r| r.sum()).collect();
    let col_sums: Vec<f64> = table.column_iter().map(|c| c.sum()).collect();
    let h_pred = entropy(row_sums.iter().copied(), n);
    let h_truth = entropy(col_sums.iter().copied(), n);
    let mut mi = 0.0;
    for i in 0..table.nrows() {
        for j in 0..table.ncols() {
            let c = table[(i, j)];
            if c > 0.0 {
                mi += c / n * (c * n / (row_sums[i] * col_sums[j])).ln();
            }
        }
    }
    let denom = 0.5 * (h_pred + h_truth);
    if denom <= 0.0 {
        // both labelings constant
        return Ok(1.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

fn comb2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index. Degenerate tables (a single cluster on both sides,
/// or all singletons on both) score 1.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let n = pred.len() as f64;
    let index: f64 = table.iter().map(|&c| comb2(c)).sum();
    let a: f64 = table.row_iter().map(|r| comb2(r.sum())).sum();
    let b: f64 = table.column_iter().map(|c| comb2(c.sum())).sum();
    let total = comb2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = a * b / total;
    let max_index = 0.5 * (a + b);
    if max_index == expected {
        return Ok(if index == expected { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max_index - expected))
}

pub fn clustering_metrics(pred: &[usize], truth: &[usize]) -> Result<ClusteringMetrics> {
    Ok(ClusteringMetrics { acc: clustering_accuracy(pred, truth)?, nmi: nmi(pred, truth)?, ari: ari(pred, truth)? })
}
