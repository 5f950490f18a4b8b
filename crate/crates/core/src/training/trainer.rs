use std::fmt;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::assign::{row_sum_error, student_t_assign, student_t_backward, target_distribution};
use super::laplacian::sample_laplacian;
use super::losses::{contrastive_loss, geom_loss, spec_loss, GeomView};
use crate::dataset::{fmt_f64, MultiViewDataset};
use crate::encoder::{adam_step, Architecture, AutoencoderParams, OptimState};
use crate::error::{param_err, shape_err, Error, Result};
use crate::numerics::{hungarian, kmeans_best_of};
use crate::pipeline::{build_geometry, cluster_embedding, Geometry, GeometryConfig};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Epochs {
    pub pretrain: usize,
    pub stage_one: usize,
    pub stage_two: usize,
}

impl Default for Epochs {
    fn default() -> Self {
        Epochs { pretrain: 1000, stage_one: 1000, stage_two: 100 }
    }
}

impl Epochs {
    /// Shortened schedule for laptop-scale runs.
    pub fn desk() -> Self {
        Epochs { pretrain: 200, stage_one: 200, stage_two: 50 }
    }

    pub fn none() -> Self {
        Epochs { pretrain: 0, stage_one: 0, stage_two: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub geometry: GeometryConfig,
    /// Student-t degrees of freedom.
    pub alpha: f64,
    pub tau_con: f64,
    pub lambda_geom: f64,
    pub lambda_spec: f64,
    pub lambda_smooth: f64,
    pub epochs: Epochs,
    /// Rebuild geometry and targets every this many stage-one epochs; 0 disables.
    pub refresh_period: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            architecture: Architecture::default(),
            geometry: GeometryConfig::default(),
            alpha: 1.0,
            tau_con: 0.5,
            lambda_geom: 1.0,
            lambda_spec: 1.0,
            lambda_smooth: 1.0,
            epochs: Epochs::default(),
            refresh_period: 50,
            learning_rate: 5e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(self.alpha > 0.0) {
            return Err(param_err("alpha must be positive"));
        }
        if !(self.tau_con > 0.0) {
            return Err(param_err("tau_con must be positive"));
        }
        for (name, v) in [
            ("lambda_geom", self.lambda_geom),
            ("lambda_spec", self.lambda_spec),
            ("lambda_smooth", self.lambda_smooth),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(param_err(format!("{name} must be a finite nonnegative number")));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(param_err("learning_rate must be positive"));
        }
        if self.architecture.latent_dim == 0 {
            return Err(param_err("latent_dim must be at least 1"));
        }
        Ok(())
    }

    fn hyper(&self) -> Hyper {
        Hyper {
            alpha: self.alpha,
            gamma: self.geometry.gamma,
            lambda_smooth: self.lambda_smooth,
            tau_con: self.tau_con,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Pretrain,
    StageOne,
    StageTwo,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Pretrain => "pretrain",
            Stage::StageOne => "stage1",
            Stage::StageTwo => "stage2",
        })
    }
}

/// Multipliers of each loss term in the optimized total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermWeights {
    pub rec: f64,
    pub geom: f64,
    pub spec: f64,
    pub con: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    pub alpha: f64,
    pub gamma: f64,
    pub lambda_smooth: f64,
    pub tau_con: f64,
}

/// Constants of the objective between geometry refreshes.
pub struct ObjectiveContext<'a> {
    pub targets: &'a DMatrix<f64>,
    /// Per view, d × m_v.
    pub anchors: &'a [DMatrix<f64>],
    /// Per view, m_v × n.
    pub coeffs: &'a [DMatrix<f64>],
    pub l_cos: &'a DMatrix<f64>,
}

/// Unweighted term values and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossValues {
    pub rec: f64,
    pub geom: f64,
    pub spec: f64,
    pub con: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct ObjectiveGrads {
    /// Per view, in codec tensor order.
    pub codecs: Vec<Vec<DMatrix<f64>>>,
    /// Per view head centers (K × d).
    pub heads: Vec<DMatrix<f64>>,
}

/// Evaluates every loss term at the current parameters and returns
/// gradients of the weighted total, plus the per-view assignments.
pub fn objective(
    params: &AutoencoderParams,
    heads: &[DMatrix<f64>],
    ds: &MultiViewDataset,
    ctx: &ObjectiveContext<'_>,
    weights: TermWeights,
    hyper: Hyper,
) -> Result<(LossValues, ObjectiveGrads, Vec<DMatrix<f64>>)> {
    let views = ds.n_views();
    if params.views.len() != views || heads.len() != views || ctx.anchors.len() != views || ctx.coeffs.len() != views
    {
        return Err(shape_err("objective inputs disagree on the number of views"));
    }
    let mut values = LossValues::default();
    let mut passes = Vec::with_capacity(views);
    let mut d_recon = Vec::with_capacity(views);
    let mut qs = Vec::with_capacity(views);
    for (v, x) in ds.views.iter().enumerate() {
        let pass = params.views[v].forward(x);
        let diff = &pass.reconstruction - x;
        values.rec += diff.norm_squared();
        d_recon.push(diff * (2.0 * weights.rec));
        qs.push(student_t_assign(&pass.latent, &heads[v], hyper.alpha)?);
        passes.push(pass);
    }

    let geom_views: Vec<GeomView<'_>> = (0..views)
        .map(|v| GeomView {
            latent: &passes[v].latent,
            anchors: &ctx.anchors[v],
            coeffs: &ctx.coeffs[v],
            assign: &qs[v],
        })
        .collect();
    let (geom, _, dz_geom, dq_geom) = geom_loss(&geom_views, ctx.l_cos, hyper.gamma, hyper.lambda_smooth)?;
    values.geom = geom;
    let (spec, dq_spec) = spec_loss(ctx.targets, &qs)?;
    values.spec = spec;
    let (con, dq_con) = if views >= 2 {
        contrastive_loss(&qs, hyper.tau_con)?
    } else {
        (0.0, qs.iter().map(|q| DMatrix::zeros(q.nrows(), q.ncols())).collect())
    };
    values.con = con;
    values.total = weights.rec * values.rec + weights.geom * geom + weights.spec * spec + weights.con * con;

    let mut codecs = Vec::with_capacity(views);
    let mut head_grads = Vec::with_capacity(views);
    for v in 0..views {
        let dq = &dq_geom[v] * weights.geom + &dq_spec[v] * weights.spec + &dq_con[v] * weights.con;
        let (dz_q, d_head) = student_t_backward(&passes[v].latent, &heads[v], hyper.alpha, &qs[v], &dq);
        let dz = &dz_geom[v] * weights.geom + dz_q;
        codecs.push(params.views[v].backward(&passes[v], Some(&d_recon[v]), Some(&dz)));
        head_grads.push(d_head);
    }
    Ok((values, ObjectiveGrads { codecs, heads: head_grads }, qs))
}

/// Permutation `perm` such that column `perm[j]` of `candidate` best
/// overlaps column `j` of `reference`.
pub fn align_columns(reference: &DMatrix<f64>, candidate: &DMatrix<f64>) -> Vec<usize> {
    let overlap = reference.transpose() * candidate;
    hungarian(&(-overlap))
}

fn permute_columns(x: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, perm[j])])
}

fn permute_rows(x: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(perm[i], j)])
}

fn one_hot(labels: &[usize], k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(labels.len(), k, |i, j| if labels[i] == j { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub stage: Stage,
    pub epoch: usize,
    pub values: LossValues,
}

/// Row-stochasticity and normalization residuals at one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantRecord {
    pub stage: Stage,
    pub epoch: usize,
    pub shared_q: f64,
    pub targets: f64,
    /// Worst view.
    pub view_q: f64,
    /// Worst deviation of a nonzero embedding row from unit norm.
    pub embedding_norm: f64,
}

impl InvariantRecord {
    pub fn worst(&self) -> f64 {
        self.shared_q.max(self.targets).max(self.view_q).max(self.embedding_norm)
    }
}

pub fn loss_trace_csv(trace: &[LossRecord]) -> String {
    let mut out = String::from("epoch,stage,rec,geom,spec,con,total\n");
    for r in trace {
        let v = r.values;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.epoch,
            r.stage,
            fmt_f64(v.rec),
            fmt_f64(v.geom),
            fmt_f64(v.spec),
            fmt_f64(v.con),
            fmt_f64(v.total)
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub labels: Vec<usize>,
    /// k-means inertia of the final labels on `U`.
    pub inertia: f64,
    /// Geometry recomputed from the final latent codes.
    pub geometry: Geometry,
    pub params: AutoencoderParams,
    pub heads: Vec<DMatrix<f64>>,
    pub trace: Vec<LossRecord>,
    pub invariants: Vec<InvariantRecord>,
}

impl TrainResult {
    /// Final embedding `U`.
    pub fn embedding(&self) -> &DMatrix<f64> {
        self.geometry.embedding()
    }
}

const TAG_INIT: u64 = 10;
const TAG_GEOMETRY: u64 = 11;
const TAG_TARGETS: u64 = 12;
const TAG_HEADS: u64 = 13;
const TAG_FINAL: u64 = 14;

/// Shared assignment state over `U`.
struct Targets {
    q: DMatrix<f64>,
    p: DMatrix<f64>,
}

/// Geometry plus everything derived from it that stays fixed between refreshes.
struct Frame {
    geometry: Geometry,
    l_cos: DMatrix<f64>,
    anchors: Vec<DMatrix<f64>>,
    coeffs: Vec<DMatrix<f64>>,
    targets: Targets,
}

fn build_frame(
    latents: &[DMatrix<f64>],
    k: usize,
    cfg: &TrainConfig,
    seed: u64,
    previous: Option<&DMatrix<f64>>,
) -> Result<Frame> {
    let geometry = build_geometry(latents, k, &cfg.geometry, derive_seed(seed, TAG_GEOMETRY))?;
    let u = geometry.embedding();
    let km = kmeans_best_of(u, k, derive_seed(seed, TAG_TARGETS), cfg.geometry.kmeans_restarts)?;
    let mut q = student_t_assign(u, &km.centers, cfg.alpha)?;
    if let Some(prev) = previous {
        // keep cluster ids stable across refreshes
        q = permute_columns(&q, &align_columns(prev, &q));
    }
    let p = target_distribution(&q);
    let l_cos = sample_laplacian(&geometry.spectrum.magnetic, &geometry.spectrum.embedding.lift)?.laplacian;
    let anchors = geometry.backbone.anchors.anchors.clone();
    let coeffs = geometry.backbone.coeffs.per_view.clone();
    Ok(Frame { geometry, l_cos, anchors, coeffs, targets: Targets { q, p } })
}

fn init_heads(latents: &[DMatrix<f64>], p: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Result<Vec<DMatrix<f64>>> {
    latents
        .iter()
        .enumerate()
        .map(|(v, z)| {
            let km = kmeans_best_of(z, k, derive_seed(derive_seed(seed, TAG_HEADS), v as u64), restarts)?;
            let perm = align_columns(p, &one_hot(&km.assignments, k));
            Ok(permute_rows(&km.centers, &perm))
        })
        .collect()
}

fn embedding_norm_error(u: &DMatrix<f64>) -> f64 {
    u.row_iter()
        .map(|r| r.norm())
        .filter(|&nr| nr > 0.0)
        .map(|nr| (nr - 1.0).abs())
        .fold(0.0, f64::max)
}

fn ensure_finite(value: f64, stage: Stage, epoch: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { stage: stage.to_string(), epoch })
    }
}

fn all_tensors_mut<'a>(params: &'a mut AutoencoderParams, heads: &'a mut [DMatrix<f64>]) -> Vec<&'a mut DMatrix<f64>> {
    let mut out: Vec<&mut DMatrix<f64>> = params.views.iter_mut().flat_map(|c| c.tensors_mut()).collect();
    out.extend(heads.iter_mut());
    out
}

/// Pretraining, stage one (geometry + spectral targets), stage two
/// (contrastive consistency), then k-means on the recomputed embedding.
pub fn train(ds: &MultiViewDataset, k: usize, cfg: &TrainConfig, seed: u64) -> Result<TrainResult> {
    cfg.validate()?;
    let n = ds.n_samples();
    if k == 0 || k > n {
        return Err(param_err(format!("need 1 <= K <= n, got K={k}, n={n}")));
    }
    if ds.n_views() < 2 && cfg.epochs.stage_two > 0 {
        log::warn!("single-view data: contrastive term is identically zero");
    }
    let mut params = AutoencoderParams::init(&ds.view_dims(), &cfg.architecture, derive_seed(seed, TAG_INIT));
    let mut trace = Vec::new();
    let mut invariants = Vec::new();

    let mut optim = {
        let tensors: Vec<&DMatrix<f64>> = params.views.iter().flat_map(|c| c.tensors()).collect();
        OptimState::for_tensors(&tensors, cfg.learning_rate)
    };
    for epoch in 0..cfg.epochs.pretrain {
        let (rec, grads) = params.reconstruction_loss(ds)?;
        ensure_finite(rec, Stage::Pretrain, epoch)?;
        trace.push(LossRecord {
            stage: Stage::Pretrain,
            epoch,
            values: LossValues { rec, total: rec, ..Default::default() },
        });
        let flat: Vec<DMatrix<f64>> = grads.into_iter().flatten().collect();
        let mut tensors: Vec<&mut DMatrix<f64>> = params.views.iter_mut().flat_map(|c| c.tensors_mut()).collect();
        adam_step(&mut tensors, &flat, &mut optim)?;
    }

    let latents = params.encode_all(ds)?;
    let mut frame = build_frame(&latents, k, cfg, seed, None)?;
    let mut heads = init_heads(&latents, &frame.targets.p, k, cfg.geometry.kmeans_restarts, seed)?;
    let mut optim = {
        let mut tensors: Vec<&DMatrix<f64>> = params.views.iter().flat_map(|c| c.tensors()).collect();
        tensors.extend(heads.iter());
        OptimState::for_tensors(&tensors, cfg.learning_rate)
    };
    let hyper = cfg.hyper();

    let stages = [
        (Stage::StageOne, cfg.epochs.stage_one, TermWeights { rec: 1.0, geom: cfg.lambda_geom, spec: cfg.lambda_spec, con: 0.0 }),
        (Stage::StageTwo, cfg.epochs.stage_two, TermWeights { rec: 1.0, geom: cfg.lambda_geom, spec: 0.0, con: 1.0 }),
    ];
    for (stage, epochs, weights) in stages {
        for epoch in 0..epochs {
            let refresh = stage == Stage::StageOne && cfg.refresh_period > 0 && epoch > 0 && epoch % cfg.refresh_period == 0;
            if refresh {
                let latents = params.encode_all(ds)?;
                frame = build_frame(&latents, k, cfg, seed, Some(&frame.targets.p))?;
            }
            let ctx = ObjectiveContext {
                targets: &frame.targets.p,
                anchors: &frame.anchors,
                coeffs: &frame.coeffs,
                l_cos: &frame.l_cos,
            };
            let (values, grads, qs) = objective(&params, &heads, ds, &ctx, weights, hyper)?;
            ensure_finite(values.total, stage, epoch)?;
            trace.push(LossRecord { stage, epoch, values });
            invariants.push(InvariantRecord {
                stage,
                epoch,
                shared_q: row_sum_error(&frame.targets.q),
                targets: row_sum_error(&frame.targets.p),
                view_q: qs.iter().map(row_sum_error).fold(0.0, f64::max),
                embedding_norm: embedding_norm_error(frame.geometry.embedding()),
            });
            let flat: Vec<DMatrix<f64>> = grads.codecs.into_iter().flatten().chain(grads.heads).collect();
            let mut tensors = all_tensors_mut(&mut params, &mut heads);
            adam_step(&mut tensors, &flat, &mut optim)?;
        }
    }

    let latents = params.encode_all(ds)?;
    let geometry = build_geometry(&latents, k, &cfg.geometry, derive_seed(seed, TAG_GEOMETRY))?;
    let km = cluster_embedding(geometry.embedding(), k, cfg.geometry.kmeans_restarts, derive_seed(seed, TAG_FINAL))?;
    Ok(TrainResult { labels: km.assignments, inertia: km.inertia, geometry, params, heads, trace, invariants })
}
