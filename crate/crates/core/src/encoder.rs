//! Per-view fully connected autoencoders with hand-written backpropagation,
//! the Adam optimizer, and a plain-text checkpoint format.
//!
//! Checkpoint layout (whitespace separated, one record per line):
//!
//! ```text
//! magspec-checkpoint 1
//! latent_dim <d>
//! views <V>
//! view <v> identity <dim>            | view <v> autoencoder
//! encoder <layers>                   (autoencoder views only)
//! dense <in> <out> <linear|softplus|squareplus>
//! <in lines of out weights>
//! <one line of out biases>
//! decoder <layers>
//! ...
//! ```
//!
//! Values use 17 significant digits so a save/load round trip is exact.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{fmt_f64, MultiViewDataset};
use crate::error::{param_err, shape_err, Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Softplus,
    /// `(x + sqrt(x^2 + 4)) / 2`: a smooth rectifier without transcendentals.
    Squareplus,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        self.apply_with_slope(x).0
    }

    /// Value and derivative from a single exponential.
    fn apply_with_slope(self, x: f64) -> (f64, f64) {
        match self {
            Activation::Linear => (x, 1.0),
            Activation::Softplus => {
                let e = (-x.abs()).exp();
                // ln(1 + e) is exact enough except for tiny e
                let tail = if e < 1e-8 { e } else { (1.0 + e).ln() };
                let slope = if x >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
                (x.max(0.0) + tail, slope)
            }
            Activation::Squareplus => {
                let s = (x * x + 4.0).sqrt();
                // rationalized on the left branch to avoid cancellation
                if x >= 0.0 {
                    (0.5 * (x + s), 0.5 * (1.0 + x / s))
                } else {
                    let y = 2.0 / (s - x);
                    (y, y / s)
                }
            }
        }
    }

    /// In-place activation of `values`, writing derivatives into `slopes`.
    fn apply_slice(self, values: &mut [f64], slopes: &mut [f64]) {
        match self {
            Activation::Linear => slopes.fill(1.0),
            Activation::Softplus => {
                for (v, sl) in values.iter_mut().zip(slopes.iter_mut()) {
                    (*v, *sl) = self.apply_with_slope(*v);
                }
            }
            // branch-free so the loop vectorizes; the slope is y / s on both sides
            Activation::Squareplus => {
                for (v, sl) in values.iter_mut().zip(slopes.iter_mut()) {
                    let x = *v;
                    let s = (x * x + 4.0).sqrt();
                    let y = if x >= 0.0 { 0.5 * (x + s) } else { 2.0 / (s - x) };
                    *v = y;
                    *sl = y / s;
                }
            }
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Softplus => "softplus",
            Activation::Squareplus => "squareplus",
        }
    }
}

/// `y = act(x W + b)` over row-major batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// in × out
    pub weight: DMatrix<f64>,
    /// 1 × out
    pub bias: DMatrix<f64>,
    pub activation: Activation,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot(inputs: usize, outputs: usize, activation: Activation, r: &mut rng::Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        Dense {
            weight: DMatrix::from_fn(inputs, outputs, |_, _| r.random_range(-limit..limit)),
            bias: DMatrix::zeros(1, outputs),
            activation,
        }
    }

    fn pre_activation(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x * &self.weight;
        // column-major: one contiguous column per output unit
        let rows = z.nrows();
        for (col, &b) in z.as_mut_slice().chunks_exact_mut(rows).zip(self.bias.iter()) {
            col.iter_mut().for_each(|v| *v += b);
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Layer inputs and activation slopes saved by [`Mlp::forward_cached`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<DMatrix<f64>>,
    /// `None` for linear layers.
    slopes: Vec<Option<DMatrix<f64>>>,
}

impl Mlp {
    /// `dims = [in, h1, ..., out]`; hidden layers use `hidden`, the last
    /// layer is linear.
    pub fn new(dims: &[usize], hidden: Activation, r: &mut rng::Rng) -> Self {
        let last = dims.len().saturating_sub(2);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::glorot(w[0], w[1], if i == last { Activation::Linear } else { hidden }, r))
            .collect();
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weight.nrows())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.ncols())
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.layers.iter().fold(x.clone(), |h, layer| {
            let act = layer.activation;
            layer.pre_activation(&h).map(|v| act.apply(v))
        })
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, MlpCache) {
        let mut cache = MlpCache { inputs: Vec::new(), slopes: Vec::new() };
        let mut h = x.clone();
        for layer in &self.layers {
            let mut out = layer.pre_activation(&h);
            let act = layer.activation;
            let slope = if act == Activation::Linear {
                None
            } else {
                let mut slope = out.clone();
                act.apply_slice(out.as_mut_slice(), slope.as_mut_slice());
                Some(slope)
            };
            cache.inputs.push(h);
            cache.slopes.push(slope);
            h = out;
        }
        (h, cache)
    }

    /// Gradients `[dW0, db0, dW1, db1, ...]` and the gradient w.r.t. the input.
    pub fn backward(&self, cache: &MlpCache, d_out: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, DMatrix<f64>) {
        let mut grads = vec![DMatrix::zeros(0, 0); 2 * self.layers.len()];
        let mut delta = d_out.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if let Some(slope) = &cache.slopes[i] {
                for (d, s) in delta.as_mut_slice().iter_mut().zip(slope.as_slice()) {
                    *d *= s;
                }
            }
            // explicit transpose routes through the blocked gemm kernel
            grads[2 * i] = cache.inputs[i].transpose() * &delta;
            let rows = delta.nrows();
            grads[2 * i + 1] = DMatrix::from_iterator(1, delta.ncols(), delta.as_slice().chunks_exact(rows).map(|c| c.iter().sum()));
            delta = &delta * layer.weight.transpose();
        }
        (grads, delta)
    }

    pub fn tensors(&self) -> Vec<&DMatrix<f64>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }
}

/// One view's codec: a pass-through or an encoder/decoder pair.
#[derive(Debug, Clone, PartialEq)]
pub enum ViewCodec {
    Identity { dim: usize },
    Autoencoder { encoder: Mlp, decoder: Mlp },
}

/// Forward results of a [`ViewCodec`], kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ViewPass {
    pub latent: DMatrix<f64>,
    pub reconstruction: DMatrix<f64>,
    caches: Option<(MlpCache, MlpCache)>,
}

impl ViewCodec {
    pub fn input_dim(&self) -> usize {
        match self {
            ViewCodec::Identity { dim } => *dim,
            ViewCodec::Autoencoder { encoder, .. } => encoder.input_dim(),
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            ViewCodec::Identity { dim } => *dim,
            ViewCodec::Autoencoder { encoder, .. } => encoder.output_dim(),
        }
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> ViewPass {
        match self {
            ViewCodec::Identity { .. } => ViewPass { latent: x.clone(), reconstruction: x.clone(), caches: None },
            ViewCodec::Autoencoder { encoder, decoder } => {
                let (latent, enc) = encoder.forward_cached(x);
                let (reconstruction, dec) = decoder.forward_cached(&latent);
                ViewPass { latent, reconstruction, caches: Some((enc, dec)) }
            }
        }
    }

    /// Parameter gradients (encoder then decoder tensors) given upstream
    /// gradients on the reconstruction and on the latent code.
    pub fn backward(
        &self,
        pass: &ViewPass,
        d_reconstruction: Option<&DMatrix<f64>>,
        d_latent: Option<&DMatrix<f64>>,
    ) -> Vec<DMatrix<f64>> {
        let (ViewCodec::Autoencoder { encoder, decoder }, Some((enc, dec))) = (self, &pass.caches) else {
            return Vec::new();
        };
        let mut dz = d_latent.cloned().unwrap_or_else(|| DMatrix::zeros(pass.latent.nrows(), pass.latent.ncols()));
        let dec_grads = match d_reconstruction {
            Some(dr) => {
                let (g, dz_rec) = decoder.backward(dec, dr);
                dz += dz_rec;
                g
            }
            None => decoder.tensors().iter().map(|t| DMatrix::zeros(t.nrows(), t.ncols())).collect(),
        };
        let (mut grads, _) = encoder.backward(enc, &dz);
        grads.extend(dec_grads);
        grads
    }

    pub fn tensors(&self) -> Vec<&DMatrix<f64>> {
        match self {
            ViewCodec::Identity { .. } => Vec::new(),
            ViewCodec::Autoencoder { encoder, decoder } => {
                encoder.tensors().into_iter().chain(decoder.tensors()).collect()
            }
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        match self {
            ViewCodec::Identity { .. } => Vec::new(),
            ViewCodec::Autoencoder { encoder, decoder } => {
                encoder.tensors_mut().into_iter().chain(decoder.tensors_mut()).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Mlp,
    Identity,
}

/// Encoder shape: `d_v -> hidden... -> latent_dim`, mirrored by the decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    pub kind: EncoderKind,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture { kind: EncoderKind::Mlp, hidden: vec![200], latent_dim: 10, activation: Activation::Squareplus }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams {
    pub views: Vec<ViewCodec>,
    pub latent_dim: usize,
}

impl AutoencoderParams {
    pub fn init(view_dims: &[usize], arch: &Architecture, seed: u64) -> Self {
        let mut r = rng::seeded(seed);
        let views = view_dims
            .iter()
            .map(|&dv| match arch.kind {
                EncoderKind::Identity => ViewCodec::Identity { dim: dv },
                EncoderKind::Mlp => {
                    let mut enc_dims = vec![dv];
                    enc_dims.extend(&arch.hidden);
                    enc_dims.push(arch.latent_dim);
                    let dec_dims: Vec<usize> = enc_dims.iter().rev().copied().collect();
                    ViewCodec::Autoencoder {
                        encoder: Mlp::new(&enc_dims, arch.activation, &mut r),
                        decoder: Mlp::new(&dec_dims, arch.activation, &mut r),
                    }
                }
            })
            .collect();
        let latent_dim = if arch.kind == EncoderKind::Identity { 0 } else { arch.latent_dim };
        AutoencoderParams { views, latent_dim }
    }

    pub fn identity(view_dims: &[usize]) -> Self {
        AutoencoderParams { views: view_dims.iter().map(|&dim| ViewCodec::Identity { dim }).collect(), latent_dim: 0 }
    }

    fn check_view(&self, view: usize, x: &DMatrix<f64>) -> Result<&ViewCodec> {
        let codec = self.views.get(view).ok_or_else(|| param_err(format!("no codec for view {view}")))?;
        if x.ncols() != codec.input_dim() {
            return Err(shape_err(format!(
                "view {view} expects {} columns, got {}",
                codec.input_dim(),
                x.ncols()
            )));
        }
        Ok(codec)
    }

    pub fn encode(&self, view: usize, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let codec = self.check_view(view, x)?;
        Ok(match codec {
            ViewCodec::Identity { .. } => x.clone(),
            ViewCodec::Autoencoder { encoder, .. } => encoder.forward(x),
        })
    }

    pub fn encode_all(&self, ds: &MultiViewDataset) -> Result<Vec<DMatrix<f64>>> {
        ds.views.iter().enumerate().map(|(v, x)| self.encode(v, x)).collect()
    }

    /// `sum_v ||X - X_hat||_F^2` and per-view parameter gradients.
    pub fn reconstruction_loss(&self, ds: &MultiViewDataset) -> Result<(f64, Vec<Vec<DMatrix<f64>>>)> {
        if ds.n_views() != self.views.len() {
            return Err(shape_err(format!("{} views in data, {} codecs", ds.n_views(), self.views.len())));
        }
        let mut loss = 0.0;
        let mut grads = Vec::with_capacity(self.views.len());
        for (v, x) in ds.views.iter().enumerate() {
            let codec = self.check_view(v, x)?;
            let pass = codec.forward(x);
            let diff = &pass.reconstruction - x;
            loss += diff.norm_squared();
            grads.push(codec.backward(&pass, Some(&(diff * 2.0)), None));
        }
        Ok((loss, grads))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Load { path: path.to_path_buf(), source })?;
        Self::from_text(&text).map_err(|(line, msg)| Error::Parse { file: path.to_path_buf(), line, msg })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "magspec-checkpoint 1").unwrap();
        writeln!(out, "latent_dim {}", self.latent_dim).unwrap();
        writeln!(out, "views {}", self.views.len()).unwrap();
        for (v, codec) in self.views.iter().enumerate() {
            match codec {
                ViewCodec::Identity { dim } => writeln!(out, "view {v} identity {dim}").unwrap(),
                ViewCodec::Autoencoder { encoder, decoder } => {
                    writeln!(out, "view {v} autoencoder").unwrap();
                    for (name, mlp) in [("encoder", encoder), ("decoder", decoder)] {
                        writeln!(out, "{name} {}", mlp.layers.len()).unwrap();
                        for layer in &mlp.layers {
                            let (i, o) = layer.weight.shape();
                            writeln!(out, "dense {i} {o} {}", layer.activation.name()).unwrap();
                            for row in layer.weight.row_iter() {
                                let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
                                writeln!(out, "{}", cells.join(" ")).unwrap();
                            }
                            let cells: Vec<String> = layer.bias.iter().map(|&x| fmt_f64(x)).collect();
                            writeln!(out, "{}", cells.join(" ")).unwrap();
                        }
                    }
                }
            }
        }
        out
    }

    fn from_text(text: &str) -> std::result::Result<Self, (usize, String)> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()));
        let mut next = |what: &str| lines.next().ok_or((0, format!("unexpected end of file, expected {what}")));
        let num = |line: usize, s: &str| s.parse::<usize>().map_err(|_| (line, format!("bad count `{s}`")));

        let (ln, header) = next("header")?;
        if header != ["magspec-checkpoint", "1"] {
            return Err((ln, "not a magspec checkpoint".into()));
        }
        let (ln, latent) = next("latent_dim")?;
        let latent_dim = match latent.as_slice() {
            ["latent_dim", d] => num(ln, d)?,
            _ => return Err((ln, "expected latent_dim".into())),
        };
        let (ln, views_line) = next("views")?;
        let n_views = match views_line.as_slice() {
            ["views", n] => num(ln, n)?,
            _ => return Err((ln, "expected views".into())),
        };
        let mut views = Vec::with_capacity(n_views);
        for _ in 0..n_views {
            let (ln, head) = next("view")?;
            match head.as_slice() {
                ["view", _, "identity", dim] => views.push(ViewCodec::Identity { dim: num(ln, dim)? }),
                ["view", _, "autoencoder"] => {
                    let mut mlps = Vec::new();
                    for name in ["encoder", "decoder"] {
                        let (ln, h) = next(name)?;
                        let count = match h.as_slice() {
                            [n, c] if *n == name => num(ln, c)?,
                            _ => return Err((ln, format!("expected {name}"))),
                        };
                        let mut layers = Vec::with_capacity(count);
                        for _ in 0..count {
                            let (ln, d) = next("dense")?;
                            let (i, o, activation) = match d.as_slice() {
                                ["dense", i, o, act] => {
                                    let activation = match *act {
                                        "linear" => Activation::Linear,
                                        "softplus" => Activation::Softplus,
                                        "squareplus" => Activation::Squareplus,
                                        other => return Err((ln, format!("unknown activation `{other}`"))),
                                    };
                                    (num(ln, i)?, num(ln, o)?, activation)
                                }
                                _ => return Err((ln, "expected dense".into())),
                            };
                            let mut parse_row = |width: usize| -> std::result::Result<Vec<f64>, (usize, String)> {
                                let (ln, cells) = next("values")?;
                                if cells.len() != width {
                                    return Err((ln, format!("expected {width} values, got {}", cells.len())));
                                }
                                cells.iter().map(|c| c.parse().map_err(|_| (ln, format!("bad value `{c}`")))).collect()
                            };
                            let mut w = Vec::with_capacity(i * o);
                            for _ in 0..i {
                                w.extend(parse_row(o)?);
                            }
                            let b = parse_row(o)?;
                            layers.push(Dense {
                                weight: DMatrix::from_row_slice(i, o, &w),
                                bias: DMatrix::from_row_slice(1, o, &b),
                                activation,
                            });
                        }
                        mlps.push(Mlp { layers });
                    }
                    let decoder = mlps.pop().unwrap();
                    let encoder = mlps.pop().unwrap();
                    views.push(ViewCodec::Autoencoder { encoder, decoder });
                }
                _ => return Err((ln, "expected view record".into())),
            }
        }
        Ok(AutoencoderParams { views, latent_dim })
    }
}

/// Adam moments for a fixed list of tensors.
#[derive(Debug, Clone)]
pub struct OptimState {
    pub first: Vec<DMatrix<f64>>,
    pub second: Vec<DMatrix<f64>>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimState {
    pub fn new(shapes: &[(usize, usize)], lr: f64) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| DMatrix::zeros(r, c)).collect();
        OptimState { first: zeros(), second: zeros(), step: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn for_tensors(tensors: &[&DMatrix<f64>], lr: f64) -> Self {
        let shapes: Vec<_> = tensors.iter().map(|t| t.shape()).collect();
        Self::new(&shapes, lr)
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [&mut DMatrix<f64>], grads: &[DMatrix<f64>], optim: &mut OptimState) -> Result<()> {
    if params.len() != grads.len() || params.len() != optim.first.len() {
        return Err(shape_err(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            optim.first.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != optim.first[i].shape() {
            return Err(shape_err(format!("adam: tensor {i} shape mismatch {:?} vs {:?}", p.shape(), g.shape())));
        }
    }
    optim.step += 1;
    let (b1, b2) = (optim.beta1, optim.beta2);
    let c1 = 1.0 - b1.powi(optim.step as i32);
    let c2 = 1.0 - b2.powi(optim.step as i32);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(optim.first.iter_mut().zip(optim.second.iter_mut())) {
        for (((pi, &gi), mi), vi) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            *pi -= optim.lr * (*mi / c1) / ((*vi / c2).sqrt() + optim.eps);
        }
    }
    Ok(())
}
