//! Multi-view datasets: CSV directory IO, min-max scaling, and a seeded
//! Gaussian-blob generator with controllable cross-view conflict.
//!
//! Directory layout: `view_0.csv`, `view_1.csv`, ... (rows are samples,
//! comma-separated decimals, no header) plus an optional `labels.csv` with
//! one integer per line.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    /// One n × d_v matrix per view.
    pub views: Vec<DMatrix<f64>>,
    pub labels: Option<Vec<usize>>,
}

impl MultiViewDataset {
    pub fn new(views: Vec<DMatrix<f64>>, labels: Option<Vec<usize>>) -> Result<Self> {
        let first = views.first().ok_or_else(|| shape_err("dataset needs at least one view"))?;
        let n = first.nrows();
        if n < 2 {
            return Err(shape_err(format!("dataset needs at least 2 samples, got {n}")));
        }
        for (v, x) in views.iter().enumerate() {
            if x.nrows() != n {
                return Err(shape_err(format!("view {v} has {} rows, view 0 has {n}", x.nrows())));
            }
            if x.ncols() == 0 {
                return Err(shape_err(format!("view {v} has no columns")));
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(shape_err(format!("{} labels for {n} samples", l.len())));
            }
        }
        Ok(MultiViewDataset { views, labels })
    }

    pub fn n_samples(&self) -> usize {
        self.views[0].nrows()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|x| x.ncols()).collect()
    }

    /// Number of label classes, `max(label) + 1`, when labels are present.
    pub fn n_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().max().map_or(0, |m| m + 1))
    }
}

fn view_path(dir: &Path, v: usize) -> PathBuf {
    dir.join(format!("view_{v}.csv"))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Load { path: path.to_path_buf(), source })
}

fn parse_matrix(path: &Path, text: &str) -> Result<DMatrix<f64>> {
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = data.len();
        for cell in line.split(',') {
            let value: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                file: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("non-numeric cell `{}`", cell.trim()),
            })?;
            data.push(value);
        }
        let w = data.len() - before;
        match width {
            None => width = Some(w),
            Some(expected) if expected != w => {
                return Err(Error::Parse {
                    file: path.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("row has {w} cells, expected {expected}"),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| Error::Parse { file: path.to_path_buf(), line: 0, msg: "empty file".into() })?;
    Ok(DMatrix::from_row_slice(rows, width, &data))
}

fn parse_labels(path: &Path, text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(lineno, l)| {
            l.trim().parse().map_err(|_| Error::Parse {
                file: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("invalid label `{}`", l.trim()),
            })
        })
        .collect()
}

/// Reads `view_0.csv ... view_{V-1}.csv` (stopping at the first missing
/// index) and `labels.csv` when present.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<MultiViewDataset> {
    let dir = dir.as_ref();
    let mut views = Vec::new();
    loop {
        let path = view_path(dir, views.len());
        if views.is_empty() || path.exists() {
            let text = read_text(&path)?;
            views.push(parse_matrix(&path, &text)?);
        } else {
            break;
        }
    }
    let label_path = dir.join("labels.csv");
    let labels = if label_path.exists() {
        Some(parse_labels(&label_path, &read_text(&label_path)?)?)
    } else {
        None
    };
    MultiViewDataset::new(views, labels)
}

/// Formats a value with 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Inverse of [`load_dataset`].
pub fn save_dataset(dir: impl AsRef<Path>, ds: &MultiViewDataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (v, x) in ds.views.iter().enumerate() {
        fs::write(view_path(dir, v), matrix_csv(x))?;
    }
    if let Some(labels) = &ds.labels {
        let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
        fs::write(dir.join("labels.csv"), text)?;
    }
    Ok(())
}

/// Per-column min-max scaling of every view to [0, 1]. Constant columns map
/// to 0.
pub fn minmax_normalize(ds: &MultiViewDataset) -> MultiViewDataset {
    let views = ds
        .views
        .iter()
        .map(|x| {
            let mut out = x.clone();
            for mut col in out.column_iter_mut() {
                let lo = col.min();
                let hi = col.max();
                let span = hi - lo;
                for v in col.iter_mut() {
                    *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
                }
            }
            out
        })
        .collect();
    MultiViewDataset { views, labels: ds.labels.clone() }
}

/// Parameters for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub k: usize,
    /// One entry per view.
    pub view_dims: Vec<usize>,
    /// Standard deviation of samples around their cluster center.
    pub cluster_spread: f64,
    /// Fraction of samples drawn from a wrong cluster in `conflict_view`.
    #[serde(default)]
    pub conflict_rate: f64,
    /// Defaults to the last view.
    #[serde(default)]
    pub conflict_view: Option<usize>,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Scale of the cluster centers, drawn as `center_scale * N(0, I)`.
    #[serde(default = "default_center_scale")]
    pub center_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_center_scale() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn blobs(n: usize, k: usize, view_dims: Vec<usize>, seed: u64) -> Self {
        SyntheticSpec {
            n,
            k,
            view_dims,
            cluster_spread: 0.1,
            conflict_rate: 0.0,
            conflict_view: None,
            noise_sigma: 0.0,
            center_scale: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.view_dims.is_empty() || self.view_dims.contains(&0) {
            return Err(param_err("view_dims must be non-empty with every dim >= 1"));
        }
        if self.k == 0 {
            return Err(param_err("k must be >= 1"));
        }
        if self.n < self.k || self.n < 2 {
            return Err(param_err(format!("n={} must be >= max(k={}, 2)", self.n, self.k)));
        }
        if !(0.0..=1.0).contains(&self.conflict_rate) {
            return Err(param_err(format!("conflict_rate {} outside [0, 1]", self.conflict_rate)));
        }
        if self.conflict_rate > 0.0 && self.k < 2 {
            return Err(param_err("conflict injection needs k >= 2"));
        }
        if self.cluster_spread < 0.0 || self.noise_sigma < 0.0 || self.center_scale <= 0.0 {
            return Err(param_err("spread and noise must be >= 0, center_scale > 0"));
        }
        if let Some(cv) = self.conflict_view {
            if cv >= self.view_dims.len() {
                return Err(param_err(format!("conflict_view {cv} out of range")));
            }
        }
        Ok(())
    }

    pub fn conflict_count(&self) -> usize {
        (self.conflict_rate * self.n as f64).floor() as usize
    }
}

/// Generated dataset plus the ground truth used to build it.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: MultiViewDataset,
    /// Per view, k × d_v.
    pub centers: Vec<DMatrix<f64>>,
    /// Samples drawn from a wrong cluster in the conflict view, ascending.
    pub conflicted: Vec<usize>,
    pub conflict_view: usize,
}

/// Gaussian blobs with sample `i` in cluster `i mod k`.
pub fn generate_synthetic_with_truth(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut r = rng::seeded(spec.seed);
    let n = spec.n;
    let k = spec.k;
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let conflict_view = spec.conflict_view.unwrap_or(spec.view_dims.len() - 1);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut r);
    let mut conflicted = order[..spec.conflict_count()].to_vec();
    conflicted.sort_unstable();
    let mut source = labels.clone();
    for &i in &conflicted {
        source[i] = (labels[i] + 1 + r.random_range(0..k - 1)) % k;
    }

    let mut centers = Vec::with_capacity(spec.view_dims.len());
    let mut views = Vec::with_capacity(spec.view_dims.len());
    for (v, &d) in spec.view_dims.iter().enumerate() {
        let c = DMatrix::from_fn(k, d, |_, _| spec.center_scale * rng::normal(&mut r));
        let cluster_of = if v == conflict_view { &source } else { &labels };
        let mut x = DMatrix::zeros(n, d);
        for i in 0..n {
            for t in 0..d {
                let spread = rng::normal(&mut r);
                let noise = rng::normal(&mut r);
                x[(i, t)] = c[(cluster_of[i], t)] + spec.cluster_spread * spread + spec.noise_sigma * noise;
            }
        }
        centers.push(c);
        views.push(x);
    }
    let dataset = MultiViewDataset::new(views, Some(labels))?;
    Ok(SyntheticData { dataset, centers, conflicted, conflict_view })
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<MultiViewDataset> {
    Ok(generate_synthetic_with_truth(spec)?.dataset)
}
