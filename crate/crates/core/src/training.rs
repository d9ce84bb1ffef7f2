//! A small point-cloud autoencoder and its training loops under every
//! reconstruction discrepancy: Chamfer, exact transport, sliced, max-sliced
//! and vMF-distributional sliced (each optimized per item or amortized).

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amortized::{sample_pair_noise, traced_pair_objective, AmortizedModel, ModelDims, ModelKind, ObjectiveMode};
use crate::autodiff::{NodeId, Tape, Tensor};
use crate::checkpoint::Bundle;
use crate::error::{Error, Result};
use crate::optim::{Adam, Goal, Sgd};
use crate::ot::{chamfer, exact_assignment, exact_wasserstein, WassersteinOrder};
use crate::pointcloud::PointCloud;
use crate::rng::{child_rng, derive_seed, rng_from_seed};
use crate::sliced::{
    max_sw, sw, traced_sliced_distance, uniform_projections, vdsw, vmf_projections, MonteCarloConfig, SliceInit,
    SliceOptConfig,
};
use crate::sphere::{UnitDirection, VmfParams};

/// Widths of the autoencoder: cloud size `m`, ambient `d`, hidden/latent `h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AeDims {
    pub m: usize,
    pub d: usize,
    pub h: usize,
}

const AE_PARAM_NAMES: [&str; 8] = [
    "enc1_w", "enc1_b", "enc2_w", "enc2_b", "dec1_w", "dec1_b", "dec2_w", "dec2_b",
];

/// Encoder: shared per-point `d -> h (ReLU) -> h`, then coordinate-wise max
/// over points. Decoder: `h -> h (ReLU) -> m*d`, reshaped to `m x d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    pub dims: AeDims,
    params: Vec<Tensor>,
}

impl Autoencoder {
    pub fn init(dims: AeDims, seed: u64) -> Result<Self> {
        if dims.m == 0 || dims.d == 0 || dims.h == 0 {
            return Err(Error::invalid("autoencoder dimensions must be >= 1"));
        }
        let mut rng = rng_from_seed(seed);
        let params = Self::shapes(dims)
            .into_iter()
            .map(|(shape, fan_in)| {
                let bound = 1.0 / (fan_in as f64).sqrt();
                let n: usize = shape.iter().product();
                Tensor::new(shape, (0..n).map(|_| rng.random_range(-bound..bound)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dims, params })
    }

    fn shapes(dims: AeDims) -> Vec<(Vec<usize>, usize)> {
        let AeDims { m, d, h } = dims;
        vec![
            (vec![d, h], d),
            (vec![h], d),
            (vec![h, h], h),
            (vec![h], h),
            (vec![h, h], h),
            (vec![h], h),
            (vec![h, m * d], h),
            (vec![m * d], h),
        ]
    }

    pub fn from_params(dims: AeDims, params: Vec<Tensor>) -> Result<Self> {
        let shapes = Self::shapes(dims);
        if params.len() != shapes.len() {
            return Err(Error::shape("autoencoder params", format!("{} tensors", params.len())));
        }
        for ((t, (s, _)), name) in params.iter().zip(&shapes).zip(AE_PARAM_NAMES) {
            if t.shape() != s.as_slice() {
                return Err(Error::shape("autoencoder params", format!("{name}: {:?} vs {:?}", t.shape(), s)));
            }
        }
        Ok(Self { dims, params })
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<NodeId> {
        self.params
            .iter()
            .map(|t| if trainable { tape.leaf(t.clone()) } else { tape.constant(t.clone()) })
            .collect()
    }

    /// Traced latent code of an `m' x d` cloud, a length-`h` node.
    pub fn traced_encode(&self, tape: &mut Tape, params: &[NodeId], x: NodeId) -> Result<NodeId> {
        let s = tape.value(x).shape();
        if s.len() != 2 || s[1] != self.dims.d {
            return Err(Error::shape("encoder input", format!("{s:?} for d={}", self.dims.d)));
        }
        let h = tape.matmul(x, params[0])?;
        let h = tape.add_row(h, params[1])?;
        let h = tape.relu(h)?;
        let h = tape.matmul(h, params[2])?;
        let h = tape.add_row(h, params[3])?;
        tape.max_axis(h, 0)
    }

    /// Traced reconstruction from a latent code, an `m x d` node.
    pub fn traced_decode(&self, tape: &mut Tape, params: &[NodeId], z: NodeId) -> Result<NodeId> {
        let h = self.dims.h;
        let z = tape.reshape(z, &[1, h])?;
        let t = tape.matmul(z, params[4])?;
        let t = tape.add_row(t, params[5])?;
        let t = tape.relu(t)?;
        let t = tape.matmul(t, params[6])?;
        let t = tape.add_row(t, params[7])?;
        tape.reshape(t, &[self.dims.m, self.dims.d])
    }

    pub fn traced_reconstruct(&self, tape: &mut Tape, params: &[NodeId], x: NodeId) -> Result<NodeId> {
        let z = self.traced_encode(tape, params, x)?;
        self.traced_decode(tape, params, z)
    }

    pub fn encode(&self, x: &PointCloud) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let xn = tape.constant(x.points().clone());
        let z = self.traced_encode(&mut tape, &params, xn)?;
        Ok(tape.value(z).data().to_vec())
    }

    pub fn to_bundle(&self) -> Bundle {
        let mut b = Bundle::new("autoencoder");
        for (k, v) in [("m", self.dims.m), ("d", self.dims.d), ("h", self.dims.h)] {
            b.meta.push((k.to_string(), v.to_string()));
        }
        for (name, t) in AE_PARAM_NAMES.iter().zip(&self.params) {
            b.tensors.push((name.to_string(), t.clone()));
        }
        b
    }

    pub fn from_bundle(b: &Bundle) -> Result<Self> {
        if b.kind != "autoencoder" {
            return Err(Error::Parse(format!("checkpoint kind {} is not an autoencoder", b.kind)));
        }
        let dims = AeDims {
            m: b.meta_usize("m")?,
            d: b.meta_usize("d")?,
            h: b.meta_usize("h")?,
        };
        let params = AE_PARAM_NAMES
            .iter()
            .map(|n| b.tensor(n).cloned())
            .collect::<Result<Vec<_>>>()?;
        Self::from_params(dims, params).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_bundle().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bundle(&Bundle::load(path)?)
    }
}

/// Anything that maps a cloud to a reconstruction.
pub trait Reconstruct: Sync {
    fn reconstruct(&self, x: &PointCloud) -> Result<PointCloud>;
}

impl Reconstruct for Autoencoder {
    fn reconstruct(&self, x: &PointCloud) -> Result<PointCloud> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let xn = tape.constant(x.points().clone());
        let y = self.traced_reconstruct(&mut tape, &params, xn)?;
        PointCloud::new(tape.value(y).clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Chamfer,
    Emd,
    Sw,
    MaxSw,
    Vdsw,
    AmortizedMaxSw,
    AmortizedVdsw,
}

impl LossKind {
    pub const ALL: [LossKind; 7] = [
        LossKind::Chamfer,
        LossKind::Emd,
        LossKind::Sw,
        LossKind::MaxSw,
        LossKind::Vdsw,
        LossKind::AmortizedMaxSw,
        LossKind::AmortizedVdsw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Chamfer => "chamfer",
            LossKind::Emd => "emd",
            LossKind::Sw => "sw",
            LossKind::MaxSw => "max-sw",
            LossKind::Vdsw => "vdsw",
            LossKind::AmortizedMaxSw => "amortized-max-sw",
            LossKind::AmortizedVdsw => "amortized-vdsw",
        }
    }

    pub fn is_amortized(self) -> bool {
        matches!(self, LossKind::AmortizedMaxSw | LossKind::AmortizedVdsw)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown loss kind {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub batch_size: usize,
    pub epochs: usize,
    /// SGD rate, momentum and weight decay of the autoencoder.
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Rate of the per-item slice ascent.
    pub slice_lr: f64,
    /// Number of projections `L`.
    pub projections: usize,
    /// Per-item ascent steps `T`.
    pub slice_steps: usize,
    pub kappa: f64,
    pub p: f64,
    pub hidden: usize,
    pub amortized_kind: ModelKind,
    /// Adam rate of the amortized model.
    pub model_lr: f64,
    pub d_k: usize,
    pub k_proj: usize,
    /// Start each item's slice ascent from that item's previous optimum.
    pub warm_start: bool,
    /// Evaluate every this many epochs (the last epoch is always evaluated); 0 disables.
    pub eval_every: usize,
    pub eval_projections: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Sw,
            batch_size: 32,
            epochs: 30,
            lr: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            slice_lr: 1e-4,
            projections: 100,
            slice_steps: 50,
            kappa: 1.0,
            p: 2.0,
            hidden: 64,
            amortized_kind: ModelKind::EfficientAttention,
            model_lr: 1e-3,
            d_k: 32,
            k_proj: 16,
            warm_start: false,
            eval_every: 1,
            eval_projections: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} must be > 0, got {v}")))
            }
        };
        positive(self.lr, "lr")?;
        positive(self.slice_lr, "slice_lr")?;
        positive(self.model_lr, "model_lr")?;
        WassersteinOrder::new(self.p)?;
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::invalid(format!("kappa must be finite and >= 0, got {}", self.kappa)));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("momentum must lie in [0, 1) and weight_decay be >= 0"));
        }
        if self.batch_size == 0 || self.projections == 0 || self.hidden == 0 || self.eval_projections == 0 {
            return Err(Error::invalid("batch_size, projections, hidden and eval_projections must be >= 1"));
        }
        Ok(())
    }

    fn order(&self) -> WassersteinOrder {
        WassersteinOrder::new(self.p).expect("validated")
    }
}

/// Mean reconstruction discrepancies over a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub cd: f64,
    pub sw: f64,
    pub emd: f64,
}

/// One line of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the epoch's batches of the batch training objective.
    pub train_objective: f64,
    /// Items left out because the amortized prediction was degenerate.
    pub skipped: usize,
    pub metrics: Option<Metrics>,
    pub wall_ms: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub autoencoder: Autoencoder,
    pub amortized: Option<AmortizedModel>,
    pub history: Vec<EpochRecord>,
}

/// Mean Chamfer, sliced (with `mc`) and exact 2-Wasserstein discrepancies
/// between each cloud and its reconstruction.
pub fn evaluate<A: Reconstruct + ?Sized>(ae: &A, data: &[PointCloud], mc: &MonteCarloConfig) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::invalid("evaluate on no clouds"));
    }
    let p = WassersteinOrder::default();
    let per = data
        .par_iter()
        .map(|x| {
            let y = ae.reconstruct(x)?;
            Ok([chamfer(x, &y)?, sw(x, &y, p, mc)?, exact_wasserstein(x, &y, p)?])
        })
        .collect::<Result<Vec<[f64; 3]>>>()?;
    let n = per.len() as f64;
    let sum = per.iter().fold([0.0; 3], |a, v| [a[0] + v[0], a[1] + v[1], a[2] + v[2]]);
    Ok(Metrics {
        cd: sum[0] / n,
        sw: sum[1] / n,
        emd: sum[2] / n,
    })
}

/// Traced symmetric Chamfer discrepancy with squared distances.
pub fn traced_chamfer(tape: &mut Tape, x: NodeId, y: NodeId) -> Result<NodeId> {
    let dist = tape.pairwise_sq_dist(x, y)?;
    let to_y = tape.min_axis(dist, 1)?;
    let to_x = tape.min_axis(dist, 0)?;
    let a = tape.mean(to_y)?;
    let b = tape.mean(to_x)?;
    tape.add(a, b)
}

/// Traced exact `W_p` with the optimal matching found on the current values.
pub fn traced_exact_wasserstein(tape: &mut Tape, x: NodeId, y: NodeId, p: WassersteinOrder) -> Result<NodeId> {
    let xc = PointCloud::new(tape.value(x).clone())?;
    let yc = PointCloud::new(tape.value(y).clone())?;
    let (_, matching) = exact_assignment(&xc, &yc, p)?;
    let ym = tape.gather(y, &matching)?;
    let diff = tape.sub(x, ym)?;
    let sq = tape.mul(diff, diff)?;
    let sq = tape.sum_axis(sq, 1)?;
    let cost = if p.get() == 2.0 { sq } else { tape.pow(sq, p.get() / 2.0)? };
    let mean = tape.mean(cost)?;
    crate::sliced::traced_root(tape, mean, p)
}

const STREAM_SHUFFLE: u64 = 11;
const STREAM_ITEM: u64 = 12;
const STREAM_AE: u64 = 13;
const STREAM_MODEL: u64 = 14;

struct ItemResult {
    loss: f64,
    ae_grads: Vec<Tensor>,
    model_grads: Option<Vec<Tensor>>,
    slice: Option<UnitDirection>,
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    p: WassersteinOrder,
}

impl Trainer<'_> {
    /// Loss of one item on its own tape, with gradients. `Ok(None)` means the
    /// amortized prediction was degenerate and the item is skipped.
    fn item(
        &self,
        ae: &Autoencoder,
        model: Option<&AmortizedModel>,
        x: &PointCloud,
        warm: Option<&UnitDirection>,
        seed: u64,
    ) -> Result<Option<ItemResult>> {
        let cfg = self.cfg;
        let p = self.p;
        let mut rng = rng_from_seed(seed);
        let mut tape = Tape::new();
        let ae_params = ae.bind(&mut tape, true);
        let model_params = model.map(|m| m.bind(&mut tape, true));
        let xn = tape.constant(x.points().clone());
        let yn = ae.traced_reconstruct(&mut tape, &ae_params, xn)?;
        let slice_cfg = |rng_init: Option<&UnitDirection>| SliceOptConfig {
            steps: cfg.slice_steps,
            eta_s: cfg.slice_lr,
            init: match rng_init {
                Some(u) => SliceInit::Provided(u.clone()),
                None => SliceInit::Random,
            },
            ..SliceOptConfig::default()
        };
        let mut slice = None;
        let loss = match cfg.loss {
            LossKind::Chamfer => traced_chamfer(&mut tape, xn, yn)?,
            LossKind::Emd => traced_exact_wasserstein(&mut tape, xn, yn, p)?,
            LossKind::Sw => {
                let mc = MonteCarloConfig::new(cfg.projections, rng.random())?;
                let th = tape.constant(uniform_projections(x.d(), &mc)?);
                traced_sliced_distance(&mut tape, xn, yn, th, p)?
            }
            LossKind::MaxSw => {
                let y = PointCloud::new(tape.value(yn).clone())?;
                let r = max_sw(x, &y, p, &slice_cfg(warm), &mut rng)?;
                let th = tape.constant(Tensor::matrix(x.d(), 1, r.direction.as_slice().to_vec())?);
                slice = Some(r.direction);
                traced_sliced_distance(&mut tape, xn, yn, th, p)?
            }
            LossKind::Vdsw => {
                let y = PointCloud::new(tape.value(yn).clone())?;
                let mc = MonteCarloConfig::new(cfg.projections, rng.random())?;
                let r = vdsw(x, &y, p, cfg.kappa, &mc, &slice_cfg(warm), &mut rng)?;
                let fresh = MonteCarloConfig::new(cfg.projections, rng.random())?;
                let th = tape.constant(vmf_projections(&VmfParams::new(r.direction.clone(), cfg.kappa)?, &fresh)?);
                slice = Some(r.direction);
                traced_sliced_distance(&mut tape, xn, yn, th, p)?
            }
            LossKind::AmortizedMaxSw | LossKind::AmortizedVdsw => {
                let model = model.expect("amortized loss has a model");
                let params = model_params.as_deref().expect("bound");
                let dir = match model.traced_direction(&mut tape, params, xn, yn) {
                    Ok(d) => d,
                    Err(Error::DegenerateDirection { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                };
                let mode = self.mode();
                let noise = sample_pair_noise(x.d(), mode, &mut rng)?;
                traced_pair_objective(&mut tape, dir, xn, yn, p, mode, &noise)?
            }
        };
        let value = tape.scalar_value(loss);
        if !value.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        let mut grads = tape.backward(loss)?;
        let ae_grads = ae_params.iter().map(|&id| grads.take(id)).collect();
        let model_grads = model_params.map(|ids| ids.iter().map(|&id| grads.take(id)).collect());
        Ok(Some(ItemResult {
            loss: value,
            ae_grads,
            model_grads,
            slice,
        }))
    }

    fn mode(&self) -> ObjectiveMode {
        match self.cfg.loss {
            LossKind::AmortizedMaxSw => ObjectiveMode::MaxSw,
            _ => ObjectiveMode::Vdsw {
                kappa: self.cfg.kappa,
                projections: self.cfg.projections,
            },
        }
    }
}

fn mean_grads(sum: &mut [Tensor], n: usize) {
    let inv = 1.0 / n as f64;
    for g in sum.iter_mut() {
        *g = g.map(|v| v * inv);
    }
}

/// Trains an autoencoder on `data` with the configured discrepancy.
///
/// Each epoch shuffles the data and walks it in mini-batches. Items of a
/// batch are evaluated on separate tapes in parallel and reduced in batch
/// order, so the run is a pure function of the config and seed.
///
/// * `sw`, `chamfer`, `emd`: descent on the batch-mean discrepancy.
/// * `max-sw`, `vdsw`: for each item, an inner ascent finds the slicing
///   direction (or vMF location) against the current reconstruction; the
///   autoencoder then descends the discrepancy at that fixed slicing.
/// * `amortized-*`: the amortized model predicts the slicing from
///   `(X, reconstruction)`; one shared forward pass yields gradients for both
///   players, and the model ascends (Adam) while the autoencoder descends
///   (SGD), both updates applied simultaneously.
pub fn train_autoencoder(data: &[PointCloud], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let first = data.first().ok_or_else(|| Error::invalid("training on no clouds"))?;
    let (m, d) = (first.m(), first.d());
    if data.iter().any(|c| c.m() != m || c.d() != d) {
        return Err(Error::shape("training data", "clouds differ in (m, d)"));
    }
    let dims = AeDims { m, d, h: cfg.hidden };
    let mut ae = Autoencoder::init(dims, derive_seed(cfg.seed, &[STREAM_AE]))?;
    let mut model = if cfg.loss.is_amortized() {
        let mdims = ModelDims {
            d_k: cfg.d_k,
            k_proj: cfg.k_proj,
            ..ModelDims::new(d, m)
        };
        Some(AmortizedModel::init(cfg.amortized_kind, mdims, derive_seed(cfg.seed, &[STREAM_MODEL]))?)
    } else {
        None
    };
    let mut sgd = Sgd::new(cfg.lr, cfg.momentum, cfg.weight_decay)?;
    let mut adam = Adam::new(cfg.model_lr)?;
    let trainer = Trainer { cfg, p: cfg.order() };
    let mut warm: Vec<Option<UnitDirection>> = vec![None; data.len()];
    let eval_mc = MonteCarloConfig::new(cfg.eval_projections, derive_seed(cfg.seed, &[STREAM_SHUFFLE, u64::MAX]))?;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut child_rng(cfg.seed, &[STREAM_SHUFFLE, epoch as u64]));
        let mut objective_sum = 0.0;
        let mut batches = 0usize;
        let mut skipped = 0usize;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<Result<Option<ItemResult>>> = batch
                .par_iter()
                .enumerate()
                .map(|(pos, &i)| {
                    let seed = derive_seed(cfg.seed, &[STREAM_ITEM, epoch as u64, step as u64, pos as u64]);
                    let w = if cfg.warm_start { warm[i].as_ref() } else { None };
                    trainer.item(&ae, model.as_ref(), &data[i], w, seed)
                })
                .collect();
            let mut ae_sum: Vec<Tensor> = ae.params.iter().map(|t| Tensor::zeros(t.shape())).collect();
            let mut model_sum: Option<Vec<Tensor>> = model
                .as_ref()
                .map(|md| md.params().iter().map(|t| Tensor::zeros(t.shape())).collect());
            let mut loss_sum = 0.0;
            let mut used = 0usize;
            for (r, &i) in results.into_iter().zip(batch) {
                let Some(item) = r? else {
                    skipped += 1;
                    continue;
                };
                loss_sum += item.loss;
                used += 1;
                for (acc, g) in ae_sum.iter_mut().zip(&item.ae_grads) {
                    acc.axpy(1.0, g)?;
                }
                if let (Some(acc), Some(g)) = (model_sum.as_mut(), item.model_grads.as_ref()) {
                    for (a, gi) in acc.iter_mut().zip(g) {
                        a.axpy(1.0, gi)?;
                    }
                }
                if item.slice.is_some() {
                    warm[i] = item.slice;
                }
            }
            if used == 0 {
                continue;
            }
            mean_grads(&mut ae_sum, used);
            sgd.step(&mut ae.params, &ae_sum, Goal::Minimize)?;
            if let (Some(md), Some(mut g)) = (model.as_mut(), model_sum) {
                mean_grads(&mut g, used);
                adam.step(md.params_mut(), &g, Goal::Maximize)?;
            }
            objective_sum += loss_sum / used as f64;
            batches += 1;
        }
        let last = epoch + 1 == cfg.epochs;
        let metrics = if cfg.eval_every > 0 && ((epoch + 1) % cfg.eval_every == 0 || last) {
            Some(evaluate(&ae, data, &eval_mc)?)
        } else {
            None
        };
        history.push(EpochRecord {
            epoch: epoch + 1,
            train_objective: if batches > 0 { objective_sum / batches as f64 } else { f64::NAN },
            skipped,
            metrics,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(TrainOutcome {
        autoencoder: ae,
        amortized: model,
        history,
    })
}
