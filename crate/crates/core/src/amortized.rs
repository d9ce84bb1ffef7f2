//! Amortized slicing: parametric maps from a cloud pair `(X, Y)` to a unit
//! direction, used either directly as a projecting direction or as the
//! location of a vMF slicing distribution, plus the objectives they are
//! trained on and the amortization-gap experiment.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::checkpoint::Bundle;
use crate::error::{Error, Result};
use crate::optim::{Adam, Goal};
use crate::ot::WassersteinOrder;
use crate::pointcloud::{CloudPair, PointCloud};
use crate::rng::{child_rng, derive_seed, rng_from_seed};
use crate::sliced::{traced_sliced_distance, vdsw, vdsw_fixed, MonteCarloConfig, SliceOptConfig};
use crate::sphere::{sample_vmf_noise, vmf_reparam_batch, UnitDirection, VmfNoise, VmfParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Linear,
    #[serde(rename = "glinear")]
    GLinear,
    #[serde(rename = "nonlinear")]
    NonLinear,
    Attention,
    EfficientAttention,
    LinearAttention,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Linear,
        ModelKind::GLinear,
        ModelKind::NonLinear,
        ModelKind::Attention,
        ModelKind::EfficientAttention,
        ModelKind::LinearAttention,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::GLinear => "glinear",
            ModelKind::NonLinear => "nonlinear",
            ModelKind::Attention => "attention",
            ModelKind::EfficientAttention => "efficient-attention",
            ModelKind::LinearAttention => "linear-attention",
        }
    }

    pub fn is_attention(self) -> bool {
        matches!(
            self,
            ModelKind::Attention | ModelKind::EfficientAttention | ModelKind::LinearAttention
        )
    }

    /// Parameter tensor names, in storage order.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::Linear => &["w0", "w1", "w2"],
            ModelKind::GLinear => &["w0", "w1", "w2", "W1", "W2", "b0"],
            ModelKind::NonLinear => &["w1", "w2", "W3", "W4", "b0"],
            ModelKind::Attention | ModelKind::EfficientAttention => &["Wq", "Wk", "Wv"],
            ModelKind::LinearAttention => &["Wq", "Wk1", "Wk2", "Wv1", "Wv2"],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown amortized model kind {s:?}")))
    }
}

/// Sizes shared by all kinds: ambient `d`, cloud size `m`, key width `d_k`,
/// value width `d_v` and the point-axis projection size `k_proj`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d: usize,
    pub m: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub k_proj: usize,
}

impl ModelDims {
    /// Defaults `d_k = 32`, `d_v = d`, `k_proj = 16`.
    pub fn new(d: usize, m: usize) -> Self {
        Self {
            d,
            m,
            d_k: 32,
            d_v: d,
            k_proj: 16,
        }
    }

    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        if self.d == 0 || self.m == 0 || self.d_k == 0 || self.k_proj == 0 {
            return Err(Error::invalid("model dimensions must be >= 1"));
        }
        if kind.is_attention() && self.d_v != self.d {
            return Err(Error::invalid(format!("attention models need d_v = d, got {} vs {}", self.d_v, self.d)));
        }
        if kind == ModelKind::LinearAttention && self.k_proj >= self.m {
            return Err(Error::invalid(format!(
                "linear attention needs k_proj < m, got {} >= {}",
                self.k_proj, self.m
            )));
        }
        Ok(())
    }

    fn shapes(&self, kind: ModelKind) -> Vec<Vec<usize>> {
        let ModelDims { d, m, d_k, d_v, k_proj } = *self;
        match kind {
            ModelKind::Linear => vec![vec![d], vec![m], vec![m]],
            ModelKind::GLinear => vec![vec![d], vec![m], vec![m], vec![d, d], vec![d, d], vec![d]],
            ModelKind::NonLinear => vec![vec![m], vec![m], vec![d, d], vec![d, d], vec![d]],
            ModelKind::Attention | ModelKind::EfficientAttention => {
                vec![vec![d, d_k], vec![d, d_k], vec![d, d_v]]
            }
            ModelKind::LinearAttention => vec![
                vec![d, d_k],
                vec![k_proj, m],
                vec![d, d_k],
                vec![k_proj, m],
                vec![d, d_v],
            ],
        }
    }
}

/// Predicted direction and the vector it was normalized from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionPrediction {
    pub direction: UnitDirection,
    pub pre_norm: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AmortizedModel {
    pub kind: ModelKind,
    pub dims: ModelDims,
    params: Vec<Tensor>,
}

fn fan_in(shape: &[usize]) -> usize {
    match shape {
        [n] => *n,
        [r, _] => *r,
        _ => 1,
    }
}

impl AmortizedModel {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization from `seed`.
    pub fn init(kind: ModelKind, dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate(kind)?;
        let mut rng = rng_from_seed(seed);
        let params = dims
            .shapes(kind)
            .into_iter()
            .map(|shape| {
                let bound = 1.0 / (fan_in(&shape) as f64).sqrt();
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
                Tensor::new(shape, data)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { kind, dims, params })
    }

    pub fn from_params(kind: ModelKind, dims: ModelDims, params: Vec<Tensor>) -> Result<Self> {
        dims.validate(kind)?;
        let shapes = dims.shapes(kind);
        if params.len() != shapes.len() {
            return Err(Error::shape("amortized params", format!("{} tensors for {}", params.len(), kind)));
        }
        for ((t, s), name) in params.iter().zip(&shapes).zip(kind.param_names()) {
            if t.shape() != s.as_slice() {
                return Err(Error::shape("amortized params", format!("{name}: {:?} vs {:?}", t.shape(), s)));
            }
            if !t.is_finite() {
                return Err(Error::NonFinite("amortized parameter"));
            }
        }
        Ok(Self { kind, dims, params })
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.kind
            .param_names()
            .iter()
            .position(|n| *n == name)
            .map(|i| &self.params[i])
    }

    /// Puts every parameter on the tape: as leaves when `trainable`, else as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<NodeId> {
        self.params
            .iter()
            .map(|t| if trainable { tape.leaf(t.clone()) } else { tape.constant(t.clone()) })
            .collect()
    }

    /// Binds parameters as constants except tensor `index`, which is `node`.
    pub fn bind_with(&self, tape: &mut Tape, index: usize, node: NodeId) -> Vec<NodeId> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, t)| if i == index { node } else { tape.constant(t.clone()) })
            .collect()
    }

    fn check_cloud(&self, tape: &Tape, x: NodeId) -> Result<()> {
        let s = tape.value(x).shape();
        if s != [self.dims.m, self.dims.d] {
            return Err(Error::shape(
                "amortized model input",
                format!("{s:?} for m={}, d={}", self.dims.m, self.dims.d),
            ));
        }
        Ok(())
    }

    /// Traced numerator of the prediction, a length-`d` node.
    pub fn traced_pre_norm(&self, tape: &mut Tape, params: &[NodeId], x: NodeId, y: NodeId) -> Result<NodeId> {
        self.check_cloud(tape, x)?;
        self.check_cloud(tape, y)?;
        if params.len() != self.params.len() {
            return Err(Error::shape("amortized params", format!("{} bound nodes", params.len())));
        }
        let d = self.dims.d;
        match self.kind {
            ModelKind::Linear => {
                let (w0, w1, w2) = (params[0], params[1], params[2]);
                let sx = weighted_point_sum(tape, x, w1, d)?;
                let sy = weighted_point_sum(tape, y, w2, d)?;
                let s = tape.add(sx, sy)?;
                tape.add(w0, s)
            }
            ModelKind::GLinear => {
                let (w0, w1, w2, big1, big2, b0) = (params[0], params[1], params[2], params[3], params[4], params[5]);
                let gx = point_mlp(tape, x, big1, big2, b0)?;
                let gy = point_mlp(tape, y, big1, big2, b0)?;
                let sx = weighted_point_sum(tape, gx, w1, d)?;
                let sy = weighted_point_sum(tape, gy, w2, d)?;
                let s = tape.add(sx, sy)?;
                tape.add(w0, s)
            }
            ModelKind::NonLinear => {
                let (w1, w2, big3, big4, b0) = (params[0], params[1], params[2], params[3], params[4]);
                let sx = weighted_point_sum(tape, x, w1, d)?;
                let sy = weighted_point_sum(tape, y, w2, d)?;
                let z = tape.add(sx, sy)?;
                let z = tape.reshape(z, &[d, 1])?;
                let h = tape.matmul(big3, z)?;
                let h = tape.sigmoid(h)?;
                let h = tape.matmul(big4, h)?;
                let h = tape.reshape(h, &[d])?;
                tape.add(h, b0)
            }
            ModelKind::Attention | ModelKind::EfficientAttention | ModelKind::LinearAttention => {
                let sx = self.pooled_attention(tape, params, x)?;
                let sy = self.pooled_attention(tape, params, y)?;
                tape.add(sx, sy)
            }
        }
    }

    /// Attention output of one cloud, sum-pooled over its points.
    fn pooled_attention(&self, tape: &mut Tape, params: &[NodeId], x: NodeId) -> Result<NodeId> {
        let scale = 1.0 / (self.dims.d_k as f64).sqrt();
        let out = match self.kind {
            ModelKind::Attention => {
                let (wq, wk, wv) = (params[0], params[1], params[2]);
                let q = tape.matmul(x, wq)?;
                let k = tape.matmul(x, wk)?;
                let v = tape.matmul(x, wv)?;
                attend(tape, q, k, v, scale)?
            }
            ModelKind::EfficientAttention => {
                let (wq, wk, wv) = (params[0], params[1], params[2]);
                let q = tape.matmul(x, wq)?;
                let q = tape.softmax_rows(q)?;
                let k = tape.matmul(x, wk)?;
                let k = tape.softmax_cols(k)?;
                let v = tape.matmul(x, wv)?;
                let kt = tape.transpose(k)?;
                let context = tape.matmul(kt, v)?;
                tape.matmul(q, context)?
            }
            ModelKind::LinearAttention => {
                let (wq, wk1, wk2, wv1, wv2) = (params[0], params[1], params[2], params[3], params[4]);
                let q = tape.matmul(x, wq)?;
                let k = tape.matmul(x, wk2)?;
                let k = tape.matmul(wk1, k)?;
                let v = tape.matmul(x, wv2)?;
                let v = tape.matmul(wv1, v)?;
                attend(tape, q, k, v, scale)?
            }
            _ => unreachable!("pooled_attention on a non-attention kind"),
        };
        tape.sum_axis(out, 0)
    }

    /// Traced unit direction, a length-`d` node.
    pub fn traced_direction(&self, tape: &mut Tape, params: &[NodeId], x: NodeId, y: NodeId) -> Result<NodeId> {
        let pre = self.traced_pre_norm(tape, params, x, y)?;
        tape.normalize(pre)
    }

    pub fn predict_direction(&self, x: &PointCloud, y: &PointCloud) -> Result<DirectionPrediction> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let xn = tape.constant(x.points().clone());
        let yn = tape.constant(y.points().clone());
        let pre = self.traced_pre_norm(&mut tape, &params, xn, yn)?;
        let pre_norm = tape.value(pre).data().to_vec();
        let dir = tape.normalize(pre)?;
        Ok(DirectionPrediction {
            direction: UnitDirection::new(tape.value(dir).data().to_vec())?,
            pre_norm,
        })
    }

    pub fn to_bundle(&self) -> Bundle {
        let mut b = Bundle::new(format!("amortized-{}", self.kind.name()));
        let ModelDims { d, m, d_k, d_v, k_proj } = self.dims;
        for (k, v) in [("d", d), ("m", m), ("d_k", d_k), ("d_v", d_v), ("k_proj", k_proj)] {
            b.meta.push((k.to_string(), v.to_string()));
        }
        for (name, t) in self.kind.param_names().iter().zip(&self.params) {
            b.tensors.push((name.to_string(), t.clone()));
        }
        b
    }

    pub fn from_bundle(b: &Bundle) -> Result<Self> {
        let kind: ModelKind = b
            .kind
            .strip_prefix("amortized-")
            .ok_or_else(|| Error::Parse(format!("checkpoint kind {} is not an amortized model", b.kind)))?
            .parse()
            .map_err(|e: Error| Error::Parse(e.to_string()))?;
        let dims = ModelDims {
            d: b.meta_usize("d")?,
            m: b.meta_usize("m")?,
            d_k: b.meta_usize("d_k")?,
            d_v: b.meta_usize("d_v")?,
            k_proj: b.meta_usize("k_proj")?,
        };
        let params = kind
            .param_names()
            .iter()
            .map(|n| b.tensor(n).cloned())
            .collect::<Result<Vec<_>>>()?;
        if b.tensors.len() != params.len() {
            return Err(Error::Parse("amortized checkpoint has extra tensors".into()));
        }
        Self::from_params(kind, dims, params).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_bundle().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bundle(&Bundle::load(path)?)
    }
}

/// `X^T w` for an `m x d` cloud and a length-`m` weight, as a length-`d` node.
fn weighted_point_sum(tape: &mut Tape, x: NodeId, w: NodeId, d: usize) -> Result<NodeId> {
    let m = tape.value(w).numel();
    let xt = tape.transpose(x)?;
    let wc = tape.reshape(w, &[m, 1])?;
    let s = tape.matmul(xt, wc)?;
    tape.reshape(s, &[d])
}

/// Rows `W2 sigmoid(W1 x_i) + b0`.
fn point_mlp(tape: &mut Tape, x: NodeId, w1: NodeId, w2: NodeId, b0: NodeId) -> Result<NodeId> {
    let w1t = tape.transpose(w1)?;
    let h = tape.matmul(x, w1t)?;
    let h = tape.sigmoid(h)?;
    let w2t = tape.transpose(w2)?;
    let h = tape.matmul(h, w2t)?;
    tape.add_row(h, b0)
}

/// `softmax_row(Q K^T * scale) V`.
fn attend(tape: &mut Tape, q: NodeId, k: NodeId, v: NodeId, scale: f64) -> Result<NodeId> {
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, scale)?;
    let weights = tape.softmax_rows(scores)?;
    tape.matmul(weights, v)
}

/// What the predicted direction is used for.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum ObjectiveMode {
    /// Projected distance along the predicted direction.
    MaxSw,
    /// Monte Carlo distributional distance with the predicted vMF location.
    Vdsw { kappa: f64, projections: usize },
}

impl ObjectiveMode {
    pub fn validate(&self) -> Result<()> {
        if let ObjectiveMode::Vdsw { kappa, projections } = *self {
            if !(kappa.is_finite() && kappa >= 0.0) {
                return Err(Error::invalid(format!("kappa must be finite and >= 0, got {kappa}")));
            }
            if projections == 0 {
                return Err(Error::invalid("number of projections must be >= 1"));
            }
        }
        Ok(())
    }
}

/// vMF noise for one pair (empty in max-sliced mode).
pub fn sample_pair_noise<R: Rng + ?Sized>(d: usize, mode: ObjectiveMode, rng: &mut R) -> Result<Vec<VmfNoise>> {
    mode.validate()?;
    match mode {
        ObjectiveMode::MaxSw => Ok(Vec::new()),
        ObjectiveMode::Vdsw { kappa, projections } => {
            (0..projections).map(|_| sample_vmf_noise(d, kappa, rng)).collect()
        }
    }
}

/// Traced per-pair objective at a predicted unit direction `dir` (length `d`).
pub fn traced_pair_objective(
    tape: &mut Tape,
    dir: NodeId,
    x: NodeId,
    y: NodeId,
    p: WassersteinOrder,
    mode: ObjectiveMode,
    noise: &[VmfNoise],
) -> Result<NodeId> {
    let d = tape.value(dir).numel();
    let theta = match mode {
        ObjectiveMode::MaxSw => tape.reshape(dir, &[d, 1])?,
        ObjectiveMode::Vdsw { projections, .. } => {
            if noise.len() != projections {
                return Err(Error::shape("pair noise", format!("{} draws for L={}", noise.len(), projections)));
            }
            let rows = vmf_reparam_batch(tape, noise, dir)?;
            tape.transpose(rows)?
        }
    };
    traced_sliced_distance(tape, x, y, theta, p)
}

/// Traced mean over pairs of the per-pair objective at the model's prediction.
pub fn traced_amortized_objective(
    tape: &mut Tape,
    model: &AmortizedModel,
    params: &[NodeId],
    pairs: &[CloudPair],
    p: WassersteinOrder,
    mode: ObjectiveMode,
    noise: &[Vec<VmfNoise>],
) -> Result<NodeId> {
    if pairs.is_empty() {
        return Err(Error::invalid("amortized objective over no pairs"));
    }
    if noise.len() != pairs.len() {
        return Err(Error::shape("objective noise", format!("{} sets for {} pairs", noise.len(), pairs.len())));
    }
    let mut total: Option<NodeId> = None;
    for (pair, nz) in pairs.iter().zip(noise) {
        let x = tape.constant(pair.source.points().clone());
        let y = tape.constant(pair.target.points().clone());
        let dir = model.traced_direction(tape, params, x, y)?;
        let term = traced_pair_objective(tape, dir, x, y, p, mode, nz)?;
        total = Some(match total {
            None => term,
            Some(t) => tape.add(t, term)?,
        });
    }
    let total = total.expect("nonempty pairs");
    tape.scale(total, 1.0 / pairs.len() as f64)
}

/// Draws noise for every pair, in order, from `rng`.
pub fn sample_objective_noise<R: Rng + ?Sized>(pairs: usize, d: usize, mode: ObjectiveMode, rng: &mut R) -> Result<Vec<Vec<VmfNoise>>> {
    (0..pairs).map(|_| sample_pair_noise(d, mode, rng)).collect()
}

/// Value of the amortized objective with fresh noise from `rng`.
pub fn amortized_objective<R: Rng + ?Sized>(
    model: &AmortizedModel,
    pairs: &[CloudPair],
    p: WassersteinOrder,
    mode: ObjectiveMode,
    rng: &mut R,
) -> Result<f64> {
    let noise = sample_objective_noise(pairs.len(), model.dims.d, mode, rng)?;
    let mut tape = Tape::new();
    let params = model.bind(&mut tape, false);
    let obj = traced_amortized_objective(&mut tape, model, &params, pairs, p, mode, &noise)?;
    Ok(tape.scalar_value(obj))
}

/// Objective value and parameter gradients over a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveEval {
    /// Mean over pairs that produced a direction.
    pub value: f64,
    pub grads: Vec<Tensor>,
    /// Pairs whose prediction was degenerate and were left out.
    pub skipped: usize,
}

/// Mean objective and its gradient in the model parameters, with the given noise.
///
/// Pairs are evaluated on separate tapes in parallel and reduced in pair
/// order. A pair whose predicted direction is degenerate is skipped.
pub fn objective_and_grad(
    model: &AmortizedModel,
    pairs: &[CloudPair],
    p: WassersteinOrder,
    mode: ObjectiveMode,
    noise: &[Vec<VmfNoise>],
) -> Result<ObjectiveEval> {
    if pairs.is_empty() {
        return Err(Error::invalid("amortized objective over no pairs"));
    }
    if noise.len() != pairs.len() {
        return Err(Error::shape("objective noise", format!("{} sets for {} pairs", noise.len(), pairs.len())));
    }
    let per_pair: Vec<Result<Option<(f64, Vec<Tensor>)>>> = pairs
        .par_iter()
        .zip(noise.par_iter())
        .map(|(pair, nz)| {
            let mut tape = Tape::new();
            let params = model.bind(&mut tape, true);
            let x = tape.constant(pair.source.points().clone());
            let y = tape.constant(pair.target.points().clone());
            let dir = match model.traced_direction(&mut tape, &params, x, y) {
                Ok(d) => d,
                Err(Error::DegenerateDirection { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let term = traced_pair_objective(&mut tape, dir, x, y, p, mode, nz)?;
            let mut g = tape.backward(term)?;
            Ok(Some((tape.scalar_value(term), params.iter().map(|&id| g.take(id)).collect())))
        })
        .collect();
    let mut grads: Vec<Tensor> = model.params.iter().map(|t| Tensor::zeros(t.shape())).collect();
    let mut total = 0.0;
    let mut used = 0usize;
    for r in per_pair {
        if let Some((v, g)) = r? {
            total += v;
            used += 1;
            for (acc, gi) in grads.iter_mut().zip(&g) {
                acc.axpy(1.0, gi)?;
            }
        }
    }
    if used == 0 {
        return Err(Error::DegenerateDirection { norm: 0.0 });
    }
    let inv = 1.0 / used as f64;
    for g in grads.iter_mut() {
        *g = g.map(|v| v * inv);
    }
    Ok(ObjectiveEval {
        value: total * inv,
        grads,
        skipped: pairs.len() - used,
    })
}

/// Settings of the amortization-gap comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapConfig {
    pub kinds: Vec<ModelKind>,
    pub kappa: f64,
    pub projections: usize,
    pub t_list: Vec<usize>,
    /// Slice learning rate of the per-pair ascent baselines.
    pub eta_s: f64,
    /// Adam learning rate of the amortized models.
    pub model_lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub p: f64,
    pub d_k: usize,
    pub k_proj: usize,
    pub seed: u64,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            kinds: vec![ModelKind::LinearAttention],
            kappa: 1.0,
            projections: 100,
            t_list: vec![1, 10, 50],
            eta_s: 1e-2,
            model_lr: 1e-3,
            epochs: 20,
            batch_size: 20,
            p: 2.0,
            d_k: 32,
            k_proj: 16,
            seed: 0,
        }
    }
}

impl GapConfig {
    pub fn validate(&self) -> Result<()> {
        ObjectiveMode::Vdsw {
            kappa: self.kappa,
            projections: self.projections,
        }
        .validate()?;
        WassersteinOrder::new(self.p)?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if !(self.eta_s > 0.0 && self.eta_s.is_finite() && self.model_lr > 0.0 && self.model_lr.is_finite()) {
            return Err(Error::invalid("learning rates must be > 0"));
        }
        Ok(())
    }
}

/// One method's result in the gap comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub method: String,
    pub mean_objective: f64,
    /// Amortized rows only: the same model's objective before training.
    pub initial_objective: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub pairs: usize,
    pub rows: Vec<GapRow>,
}

const STREAM_EVAL: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_ASCENT: u64 = 3;
const STREAM_MODEL: u64 = 4;
const STREAM_TRAIN: u64 = 5;

/// Evaluation shared by every method: pair `i` is scored at a location with
/// the same `L` vMF draws (relative to that location) regardless of method.
fn shared_eval(pair_index: usize, pair: &CloudPair, dir: &UnitDirection, cfg: &GapConfig) -> Result<f64> {
    let mc = MonteCarloConfig::new(cfg.projections, derive_seed(cfg.seed, &[STREAM_EVAL, pair_index as u64]))?;
    let params = VmfParams::new(dir.clone(), cfg.kappa)?;
    vdsw_fixed(&pair.source, &pair.target, WassersteinOrder::new(cfg.p)?, &params, &mc)
}

fn mean_shared_eval(pairs: &[CloudPair], dirs: &[UnitDirection], cfg: &GapConfig) -> Result<f64> {
    let vals = pairs
        .par_iter()
        .zip(dirs.par_iter())
        .enumerate()
        .map(|(i, (pair, dir))| shared_eval(i, pair, dir, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

fn model_directions(model: &AmortizedModel, pairs: &[CloudPair]) -> Result<Vec<UnitDirection>> {
    pairs
        .par_iter()
        .map(|pr| model.predict_direction(&pr.source, &pr.target).map(|d| d.direction))
        .collect()
}

/// Trains `model` by Adam ascent on the vMF amortized objective over `pairs`.
pub fn train_amortized(model: &mut AmortizedModel, pairs: &[CloudPair], cfg: &GapConfig) -> Result<()> {
    let mode = ObjectiveMode::Vdsw {
        kappa: cfg.kappa,
        projections: cfg.projections,
    };
    let p = WassersteinOrder::new(cfg.p)?;
    let mut adam = Adam::new(cfg.model_lr)?;
    for epoch in 0..cfg.epochs {
        for (b, batch) in pairs.chunks(cfg.batch_size).enumerate() {
            let mut rng = child_rng(cfg.seed, &[STREAM_TRAIN, model.kind as u64, epoch as u64, b as u64]);
            let noise = sample_objective_noise(batch.len(), model.dims.d, mode, &mut rng)?;
            let eval = objective_and_grad(model, batch, p, mode, &noise)?;
            adam.step(&mut model.params, &eval.grads, Goal::Maximize)?;
        }
    }
    Ok(())
}

/// Compares trained amortized models against per-pair stochastic ascent with
/// each `T` in `t_list`, all scored under shared evaluation noise.
pub fn amortization_gap_experiment(pairs: &[CloudPair], cfg: &GapConfig) -> Result<GapReport> {
    cfg.validate()?;
    let first = pairs.first().ok_or_else(|| Error::invalid("gap experiment over no pairs"))?;
    let (m, d) = (first.source.m(), first.source.d());
    if pairs.iter().any(|pr| pr.source.m() != m || pr.source.d() != d) {
        return Err(Error::shape("gap experiment", "pairs differ in (m, d)"));
    }
    let p = WassersteinOrder::new(cfg.p)?;
    let mut rows = Vec::new();
    for &kind in &cfg.kinds {
        let start = Instant::now();
        let dims = ModelDims {
            d_k: cfg.d_k,
            k_proj: cfg.k_proj,
            ..ModelDims::new(d, m)
        };
        let mut model = AmortizedModel::init(kind, dims, derive_seed(cfg.seed, &[STREAM_MODEL, kind as u64]))?;
        let initial = mean_shared_eval(pairs, &model_directions(&model, pairs)?, cfg)?;
        train_amortized(&mut model, pairs, cfg)?;
        let trained = mean_shared_eval(pairs, &model_directions(&model, pairs)?, cfg)?;
        rows.push(GapRow {
            method: format!("amortized-{}", kind.name()),
            mean_objective: trained,
            initial_objective: Some(initial),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    for &t in &cfg.t_list {
        let start = Instant::now();
        let slice_cfg = SliceOptConfig::new(t, cfg.eta_s)?;
        let dirs = pairs
            .par_iter()
            .enumerate()
            .map(|(i, pr)| {
                let mut init_rng = child_rng(cfg.seed, &[STREAM_INIT, i as u64]);
                let mc = MonteCarloConfig::new(cfg.projections, derive_seed(cfg.seed, &[STREAM_ASCENT, i as u64]))?;
                vdsw(&pr.source, &pr.target, p, cfg.kappa, &mc, &slice_cfg, &mut init_rng).map(|r| r.direction)
            })
            .collect::<Result<Vec<_>>>()?;
        let mean = mean_shared_eval(pairs, &dirs, cfg)?;
        rows.push(GapRow {
            method: format!("vdsw-T{t}"),
            mean_objective: mean,
            initial_objective: None,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(GapReport {
        pairs: pairs.len(),
        rows,
    })
}
