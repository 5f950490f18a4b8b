//! Config-driven commands behind the `magspec` binary.
//!
//! Every command is a pure function of the config file and seed offset:
//! outputs are written atomically and re-runs are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use magspec_core::dataset::{generate_synthetic, load_dataset, minmax_normalize, MultiViewDataset, SyntheticSpec};
use magspec_core::evaluation::{clustering_metrics, eigengap, run_ablation, ClusteringMetrics};
use magspec_core::training::{loss_trace_csv, train, TrainConfig};
use serde::{Deserialize, Serialize};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(#[from] magspec_core::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) | CliError::Output { .. } => EXIT_RUNTIME,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn config_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("`{field}`: {msg}"))
}

/// Top-level config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Number of clusters.
    pub k: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub data: DataConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// Exactly one of `path` and `synthetic`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Directory with `view_<v>.csv` and optional `labels.csv`; relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    /// Per-feature min-max scaling.
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub lambda_geom: LogGrid,
    pub lambda_spec: LogGrid,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let grid = LogGrid { min: 1e-2, max: 1e2, steps: 5 };
        SweepConfig { lambda_geom: grid, lambda_spec: grid }
    }
}

/// `steps` values spaced evenly in log scale from `min` to `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogGrid {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl LogGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let ratio = (self.max / self.min).ln();
        (0..self.steps)
            .map(|i| {
                if i + 1 == self.steps {
                    self.max
                } else {
                    self.min * (ratio * i as f64 / (self.steps - 1) as f64).exp()
                }
            })
            .collect()
    }

    fn validate(&self, field: &str) -> CliResult<()> {
        if self.steps == 0 {
            return Err(config_err(&format!("{field}.steps"), "must be at least 1"));
        }
        if !(self.min > 0.0 && self.max >= self.min && self.max.is_finite()) {
            return Err(config_err(field, "needs 0 < min <= max"));
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Parses, resolves a relative data path against the file's directory and validates.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_err("--config", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(p) = &cfg.data.path {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.data.path = Some(base.join(p));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.k == 0 {
            return Err(config_err("k", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(config_err("seeds", "must list at least one seed"));
        }
        match (&self.data.path, &self.data.synthetic) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(config_err("data", "set exactly one of `path` and `synthetic`"));
            }
            (None, Some(spec)) => spec.validate().map_err(|e| config_err("data.synthetic", e))?,
            (Some(_), None) => {}
        }
        self.training.validate().map_err(|e| config_err("training", e))?;
        self.sweep.lambda_geom.validate("sweep.lambda_geom")?;
        self.sweep.lambda_spec.validate("sweep.lambda_spec")?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn effective_seeds(&self, offset: u64) -> Vec<u64> {
        self.seeds.iter().map(|s| s.wrapping_add(offset)).collect()
    }

    pub fn dataset(&self) -> CliResult<MultiViewDataset> {
        let ds = match (&self.data.path, &self.data.synthetic) {
            (Some(p), _) => load_dataset(p).map_err(|e| config_err("data.path", e))?,
            (None, Some(spec)) => generate_synthetic(spec).map_err(|e| config_err("data.synthetic", e))?,
            (None, None) => return Err(config_err("data", "no source")),
        };
        if self.k > ds.n_samples() {
            return Err(config_err("k", format!("{} clusters but only {} samples", self.k, ds.n_samples())));
        }
        Ok(if self.data.normalize { minmax_normalize(&ds) } else { ds })
    }
}

/// Writes through a sibling temp file so readers never see partial output.
pub fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let out_err = |source| CliError::Output { path: path.to_path_buf(), source };
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(out_err)?;
    fs::rename(&tmp, path).map_err(out_err)
}

fn prepare_out(out: &Path, cfg: &RunConfig) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|source| CliError::Output { path: out.to_path_buf(), source })?;
    write_atomic(&out.join("config.toml"), &cfg.to_toml())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedMetrics {
    pub seed: u64,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub clustering: Option<ClusteringMetrics>,
    pub eigengap: f64,
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanMetrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ari: Option<f64>,
    pub eigengap: f64,
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub seeds: Vec<SeedMetrics>,
    pub mean: MeanMetrics,
}

impl MetricsReport {
    fn new(seeds: Vec<SeedMetrics>) -> Self {
        let n = seeds.len().max(1) as f64;
        let avg = |f: &dyn Fn(&SeedMetrics) -> f64| seeds.iter().map(f).sum::<f64>() / n;
        let labelled = seeds.iter().all(|s| s.clustering.is_some());
        let clust = |f: fn(&ClusteringMetrics) -> f64| labelled.then(|| avg(&|s| f(s.clustering.as_ref().unwrap())));
        let mean = MeanMetrics {
            acc: clust(|c| c.acc),
            nmi: clust(|c| c.nmi),
            ari: clust(|c| c.ari),
            eigengap: avg(&|s| s.eigengap),
            inertia: avg(&|s| s.inertia),
        };
        MetricsReport { seeds, mean }
    }
}

/// Trains every seed on one dataset; shared by `run` and `sweep`.
fn train_seeds(
    ds: &MultiViewDataset,
    k: usize,
    cfg: &TrainConfig,
    seeds: &[u64],
    mut each: impl FnMut(u64, &magspec_core::training::TrainResult) -> CliResult<()>,
) -> CliResult<MetricsReport> {
    let mut rows = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        log::info!("training seed {seed}");
        let result = train(ds, k, cfg, seed)?;
        let clustering = match &ds.labels {
            Some(truth) => Some(clustering_metrics(&result.labels, truth)?),
            None => None,
        };
        let spectrum = &result.geometry.spectrum.embedding.spectrum;
        let gap = if spectrum.len() > k { eigengap(spectrum, k)? } else { 0.0 };
        rows.push(SeedMetrics { seed, clustering, eigengap: gap, inertia: result.inertia });
        each(seed, &result)?;
    }
    Ok(MetricsReport::new(rows))
}

/// Trains each seed; writes `labels.csv`, `metrics.json`, per-seed loss
/// traces and encoder checkpoints, and the effective config.
pub fn cmd_run(cfg: &RunConfig, out: &Path, seed_offset: u64) -> CliResult<MetricsReport> {
    let ds = cfg.dataset()?;
    prepare_out(out, cfg)?;
    let seeds = cfg.effective_seeds(seed_offset);
    let mut labels = String::from("seed,sample,label\n");
    let report = train_seeds(&ds, cfg.k, &cfg.training, &seeds, |seed, result| {
        for (i, l) in result.labels.iter().enumerate() {
            labels.push_str(&format!("{seed},{i},{l}\n"));
        }
        write_atomic(&out.join(format!("loss_trace_seed{seed}.csv")), &loss_trace_csv(&result.trace))?;
        write_atomic(&out.join(format!("checkpoint_seed{seed}.txt")), &result.params.to_text())
    })?;
    write_atomic(&out.join("labels.csv"), &labels)?;
    let json = serde_json::to_string_pretty(&report).expect("metrics serialize");
    write_atomic(&out.join("metrics.json"), &(json + "\n"))?;
    Ok(report)
}

/// Fixed-backbone phase ablation; writes `ablation.csv`.
pub fn cmd_ablate(cfg: &RunConfig, out: &Path, seed_offset: u64) -> CliResult<magspec_core::evaluation::AblationReport> {
    let ds = cfg.dataset()?;
    if ds.labels.is_none() {
        return Err(config_err("data", "ablation needs ground-truth labels"));
    }
    prepare_out(out, cfg)?;
    let report = run_ablation(&ds, cfg.k, &cfg.training, &cfg.effective_seeds(seed_offset))?;
    write_atomic(&out.join("ablation.csv"), &report.to_csv())?;
    Ok(report)
}

/// One cell of the sensitivity grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub lambda_geom: f64,
    pub lambda_spec: f64,
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

/// Mean metrics over seeds for every `(lambda_geom, lambda_spec)` pair; writes `sweep.csv`.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path, seed_offset: u64) -> CliResult<Vec<SweepRow>> {
    let ds = cfg.dataset()?;
    if ds.labels.is_none() {
        return Err(config_err("data", "sweep needs ground-truth labels"));
    }
    prepare_out(out, cfg)?;
    let seeds = cfg.effective_seeds(seed_offset);
    let mut rows = Vec::new();
    let mut csv = String::from("lambda_geom,lambda_spec,acc,nmi,ari\n");
    for lambda_geom in cfg.sweep.lambda_geom.values() {
        for lambda_spec in cfg.sweep.lambda_spec.values() {
            let tc = TrainConfig { lambda_geom, lambda_spec, ..cfg.training.clone() };
            let report = train_seeds(&ds, cfg.k, &tc, &seeds, |_, _| Ok(()))?;
            let m = &report.mean;
            let row = SweepRow {
                lambda_geom,
                lambda_spec,
                acc: m.acc.unwrap_or_default(),
                nmi: m.nmi.unwrap_or_default(),
                ari: m.ari.unwrap_or_default(),
            };
            csv.push_str(&format!("{lambda_geom:e},{lambda_spec:e},{},{},{}\n", row.acc, row.nmi, row.ari));
            rows.push(row);
        }
    }
    write_atomic(&out.join("sweep.csv"), &csv)?;
    Ok(rows)
}
