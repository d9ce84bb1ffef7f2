//! The sliced family: Monte Carlo sliced Wasserstein, the max-sliced
//! distance by projected ascent on the sphere, and the vMF-distributional
//! sliced distance by stochastic ascent over the vMF location.
//!
//! Every estimate is a power mean over a finite set of projecting directions,
//! `((1/L) sum_l W_p^p(theta_l))^{1/p}`. Projection sets are drawn up front from
//! a seed; per-projection terms are evaluated in parallel and summed in index
//! order, so results are bitwise independent of the worker count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, Tensor, NORMALIZE_EPS};
use crate::error::{Error, Result};
use crate::optim::{Adam, Goal, Sgd};
use crate::ot::{project, wasserstein_1d_pow, WassersteinOrder};
use crate::pointcloud::PointCloud;
use crate::rng::{child_rng, rng_from_seed};
use crate::sphere::{sample_uniform_sphere, sample_vmf, sample_vmf_noise, vmf_reparam_batch, UnitDirection, VmfParams};

/// Number of projections and the seed of the projection stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub projections: usize,
    pub seed: u64,
}

impl MonteCarloConfig {
    pub fn new(projections: usize, seed: u64) -> Result<Self> {
        let mc = Self { projections, seed };
        mc.validate()?;
        Ok(mc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.projections == 0 {
            return Err(Error::invalid("number of projections must be >= 1"));
        }
        Ok(())
    }
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            projections: 100,
            seed: 0,
        }
    }
}

/// Starting point of a slice ascent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SliceInit {
    /// Uniform draw from the caller's rng.
    Random,
    Provided(UnitDirection),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AscentRule {
    /// Adam with `beta1 = 0`, `beta2 = 0.9`.
    Adam,
    /// Plain gradient step.
    Sgd,
}

/// Settings of the inner ascent over a direction (or vMF location).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceOptConfig {
    pub steps: usize,
    pub eta_s: f64,
    pub init: SliceInit,
    pub rule: AscentRule,
}

impl SliceOptConfig {
    pub fn new(steps: usize, eta_s: f64) -> Result<Self> {
        let cfg = Self {
            steps,
            eta_s,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_s.is_finite() && self.eta_s > 0.0) {
            return Err(Error::invalid(format!("slice learning rate must be > 0, got {}", self.eta_s)));
        }
        Ok(())
    }

    fn start<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Result<UnitDirection> {
        match &self.init {
            SliceInit::Random => sample_uniform_sphere(d, rng),
            SliceInit::Provided(u) if u.dim() == d => Ok(u.clone()),
            SliceInit::Provided(u) => Err(Error::shape("slice init", format!("dim {} for d={}", u.dim(), d))),
        }
    }
}

impl Default for SliceOptConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            eta_s: 1e-4,
            init: SliceInit::Random,
            rule: AscentRule::Adam,
        }
    }
}

/// Outcome of an optimized slicing distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlicedResult {
    pub value: f64,
    /// Optimal direction (max-sliced) or vMF location (distributional).
    pub direction: UnitDirection,
    /// Objective before each of the `T` steps, then the final value.
    pub trace: Vec<f64>,
}

fn check_pair(x: &PointCloud, y: &PointCloud) -> Result<()> {
    if x.m() != y.m() || x.d() != y.d() {
        return Err(Error::shape(
            "sliced distance",
            format!("{}x{} vs {}x{}", x.m(), x.d(), y.m(), y.d()),
        ));
    }
    Ok(())
}

fn directions_to_matrix(dirs: &[UnitDirection]) -> Result<Tensor> {
    let d = dirs[0].dim();
    let l = dirs.len();
    let mut data = vec![0.0; d * l];
    for (j, u) in dirs.iter().enumerate() {
        for (i, v) in u.as_slice().iter().enumerate() {
            data[i * l + j] = *v;
        }
    }
    Tensor::matrix(d, l, data)
}

/// `d x L` matrix of i.i.d. uniform directions drawn from `mc.seed`.
pub fn uniform_projections(d: usize, mc: &MonteCarloConfig) -> Result<Tensor> {
    mc.validate()?;
    let mut rng = rng_from_seed(mc.seed);
    let dirs = (0..mc.projections)
        .map(|_| sample_uniform_sphere(d, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    directions_to_matrix(&dirs)
}

/// `d x L` matrix of i.i.d. vMF directions drawn from `mc.seed`.
pub fn vmf_projections(params: &VmfParams, mc: &MonteCarloConfig) -> Result<Tensor> {
    mc.validate()?;
    let mut rng = rng_from_seed(mc.seed);
    let dirs = (0..mc.projections)
        .map(|_| sample_vmf(params, &mut rng).map(|d| d.theta))
        .collect::<Result<Vec<_>>>()?;
    directions_to_matrix(&dirs)
}

/// `W_p^p` between the projected clouds, one entry per column of `projections`.
pub fn projection_powers(x: &PointCloud, y: &PointCloud, projections: &Tensor, p: WassersteinOrder) -> Result<Vec<f64>> {
    check_pair(x, y)?;
    if projections.ndim() != 2 || projections.rows() != x.d() || projections.cols() == 0 {
        return Err(Error::shape(
            "projections",
            format!("{:?} for d={}", projections.shape(), x.d()),
        ));
    }
    let t = projections.transposed()?;
    (0..t.rows())
        .into_par_iter()
        .map(|l| {
            let theta = t.row(l);
            wasserstein_1d_pow(&project(x, theta), &project(y, theta), p)
        })
        .collect()
}

/// `((1/L) sum_l s_l)^{1/p}`, summed in index order.
pub fn power_mean(powers: &[f64], p: WassersteinOrder) -> Result<f64> {
    if powers.is_empty() {
        return Err(Error::invalid("power mean of no projections"));
    }
    let mean = powers.iter().sum::<f64>() / powers.len() as f64;
    Ok(p.root(mean))
}

/// Monte Carlo sliced Wasserstein with `mc.projections` uniform directions.
pub fn sw(x: &PointCloud, y: &PointCloud, p: WassersteinOrder, mc: &MonteCarloConfig) -> Result<f64> {
    power_mean(&sw_powers(x, y, p, mc)?, p)
}

/// Per-projection terms of [`sw`], for standard errors.
pub fn sw_powers(x: &PointCloud, y: &PointCloud, p: WassersteinOrder, mc: &MonteCarloConfig) -> Result<Vec<f64>> {
    check_pair(x, y)?;
    projection_powers(x, y, &uniform_projections(x.d(), mc)?, p)
}

fn check_fixed_params(params: &VmfParams, d: usize) -> Result<()> {
    if params.dim() != d {
        return Err(Error::shape("vmf location", format!("dim {} for d={}", params.dim(), d)));
    }
    if !(params.kappa.is_finite() && params.kappa >= 0.0) {
        return Err(Error::invalid(format!("kappa must be finite and >= 0, got {}", params.kappa)));
    }
    Ok(())
}

/// Distributional sliced distance at a fixed vMF `(epsilon, kappa)`, no ascent.
///
/// `kappa = 0` is accepted and reduces to uniform slicing.
pub fn vdsw_fixed(x: &PointCloud, y: &PointCloud, p: WassersteinOrder, params: &VmfParams, mc: &MonteCarloConfig) -> Result<f64> {
    power_mean(&vdsw_fixed_powers(x, y, p, params, mc)?, p)
}

pub fn vdsw_fixed_powers(
    x: &PointCloud,
    y: &PointCloud,
    p: WassersteinOrder,
    params: &VmfParams,
    mc: &MonteCarloConfig,
) -> Result<Vec<f64>> {
    check_pair(x, y)?;
    check_fixed_params(params, x.d())?;
    projection_powers(x, y, &vmf_projections(params, mc)?, p)
}

/// Traces `(1/L) sum_l W_p^p` for supports `x`, `y` (`m x d`) and directions
/// `theta` (`d x L`). Differentiable in all three inputs; the sorted matching
/// found in the forward pass is held fixed for the gradient.
pub fn traced_power_mean(tape: &mut Tape, x: NodeId, y: NodeId, theta: NodeId, p: WassersteinOrder) -> Result<NodeId> {
    let px = tape.matmul(x, theta)?;
    let py = tape.matmul(y, theta)?;
    if tape.value(px).shape() != tape.value(py).shape() {
        return Err(Error::shape(
            "traced_power_mean",
            format!("{:?} vs {:?}", tape.value(px).shape(), tape.value(py).shape()),
        ));
    }
    let (sx, _) = tape.sort(px)?;
    let (sy, _) = tape.sort(py)?;
    let diff = tape.sub(sx, sy)?;
    let cost = if p.get() == 2.0 {
        tape.mul(diff, diff)?
    } else {
        let a = tape.abs(diff)?;
        if p.get() == 1.0 {
            a
        } else {
            tape.pow(a, p.get())?
        }
    };
    tape.mean(cost)
}

/// [`traced_power_mean`] followed by the `1/p` root.
pub fn traced_sliced_distance(tape: &mut Tape, x: NodeId, y: NodeId, theta: NodeId, p: WassersteinOrder) -> Result<NodeId> {
    let s = traced_power_mean(tape, x, y, theta, p)?;
    traced_root(tape, s, p)
}

pub(crate) fn traced_root(tape: &mut Tape, s: NodeId, p: WassersteinOrder) -> Result<NodeId> {
    if p.get() == 1.0 {
        Ok(s)
    } else {
        tape.pow(s, 1.0 / p.get())
    }
}

enum Stepper {
    Adam(Adam),
    Sgd(Sgd),
}

impl Stepper {
    fn new(cfg: &SliceOptConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(match cfg.rule {
            AscentRule::Adam => Stepper::Adam(Adam::new(cfg.eta_s)?),
            AscentRule::Sgd => Stepper::Sgd(Sgd::plain(cfg.eta_s)?),
        })
    }

    /// One ascent step followed by renormalization onto the sphere.
    fn ascend(&mut self, dir: &mut Vec<f64>, grad: Tensor) -> Result<()> {
        let mut params = [Tensor::vector(std::mem::take(dir))];
        let grad = grad.reshaped(vec![params[0].numel()])?;
        match self {
            Stepper::Adam(a) => a.step(&mut params, &[grad], Goal::Maximize)?,
            Stepper::Sgd(s) => s.step(&mut params, &[grad], Goal::Maximize)?,
        }
        let [v] = params;
        let n = v.norm();
        if !(n >= NORMALIZE_EPS) {
            return Err(Error::DegenerateDirection { norm: n });
        }
        *dir = v.data().iter().map(|e| e / n).collect();
        Ok(())
    }
}

fn to_direction(v: Vec<f64>) -> Result<UnitDirection> {
    UnitDirection::normalized(&v)
}

/// Max-sliced Wasserstein by projected ascent on the direction.
///
/// Each step differentiates `W_p^p` along `theta` through the sorted matching,
/// takes an ascent step of rate `eta_s` and renormalizes. The rng is used only
/// for a random initial direction.
pub fn max_sw<R: Rng + ?Sized>(x: &PointCloud, y: &PointCloud, p: WassersteinOrder, cfg: &SliceOptConfig, rng: &mut R) -> Result<SlicedResult> {
    check_pair(x, y)?;
    let d = x.d();
    let mut stepper = Stepper::new(cfg)?;
    let mut theta = cfg.start(d, rng)?.as_slice().to_vec();
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    for _ in 0..cfg.steps {
        let mut tape = Tape::new();
        let xn = tape.constant(x.points().clone());
        let yn = tape.constant(y.points().clone());
        let th = tape.leaf(Tensor::matrix(d, 1, theta.clone())?);
        let th_unit = tape.normalize(th)?;
        let obj = traced_power_mean(&mut tape, xn, yn, th_unit, p)?;
        trace.push(p.root(tape.scalar_value(obj)));
        let grad = tape.backward(obj)?.take(th);
        stepper.ascend(&mut theta, grad)?;
    }
    let direction = to_direction(theta)?;
    let value = p.root(wasserstein_1d_pow(
        &project(x, direction.as_slice()),
        &project(y, direction.as_slice()),
        p,
    )?);
    trace.push(value);
    Ok(SlicedResult { value, direction, trace })
}

/// Stream of the ascent iteration `t` of [`vdsw`]; index `steps` is the final evaluation.
fn vdsw_stream(mc: &MonteCarloConfig, t: usize) -> u64 {
    crate::rng::derive_seed(mc.seed, &[t as u64])
}

/// vMF-distributional sliced Wasserstein by stochastic ascent over the location.
///
/// Each iteration draws fresh reparameterized vMF noise, differentiates the
/// projected power mean with respect to `epsilon` through the Householder
/// transform, takes an ascent step and renormalizes. The final value is a
/// fresh `L`-sample estimate at the last location. The rng supplies only a
/// random initial location; projection noise comes from `mc.seed`.
pub fn vdsw<R: Rng + ?Sized>(
    x: &PointCloud,
    y: &PointCloud,
    p: WassersteinOrder,
    kappa: f64,
    mc: &MonteCarloConfig,
    cfg: &SliceOptConfig,
    rng: &mut R,
) -> Result<SlicedResult> {
    check_pair(x, y)?;
    mc.validate()?;
    let d = x.d();
    let mut stepper = Stepper::new(cfg)?;
    let mut eps = cfg.start(d, rng)?.as_slice().to_vec();
    check_fixed_params(&VmfParams::new(UnitDirection::normalized(&eps)?, kappa)?, d)?;
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    for t in 0..cfg.steps {
        let mut noise_rng = child_rng(mc.seed, &[t as u64]);
        let noise = (0..mc.projections)
            .map(|_| sample_vmf_noise(d, kappa, &mut noise_rng))
            .collect::<Result<Vec<_>>>()?;
        let mut tape = Tape::new();
        let xn = tape.constant(x.points().clone());
        let yn = tape.constant(y.points().clone());
        let e = tape.leaf(Tensor::vector(eps.clone()));
        // The location only matters up to scale; tracing it through the
        // normalization keeps the gradient tangent to the sphere.
        let e_unit = tape.normalize(e)?;
        let rows = vmf_reparam_batch(&mut tape, &noise, e_unit)?;
        let th = tape.transpose(rows)?;
        let obj = traced_power_mean(&mut tape, xn, yn, th, p)?;
        trace.push(p.root(tape.scalar_value(obj)));
        let grad = tape.backward(obj)?.take(e);
        stepper.ascend(&mut eps, grad)?;
    }
    let direction = to_direction(eps)?;
    let final_mc = MonteCarloConfig {
        projections: mc.projections,
        seed: vdsw_stream(mc, cfg.steps),
    };
    let params = VmfParams::new(direction.clone(), kappa)?;
    let value = vdsw_fixed(x, y, p, &params, &final_mc)?;
    trace.push(value);
    Ok(SlicedResult { value, direction, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::pointcloud::{synth_cloud, ShapeKind};

    fn two() -> WassersteinOrder {
        WassersteinOrder::default()
    }

    fn cloud(rows: &[&[f64]]) -> PointCloud {
        PointCloud::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn delta_pair() -> (PointCloud, PointCloud) {
        (cloud(&[&[0.0, 0.0]]), cloud(&[&[3.0, 4.0]]))
    }

    #[test]
    fn sw_of_identical_clouds_is_zero() {
        let x = synth_cloud(ShapeKind::SphereShell, 32, 3, 1).unwrap();
        assert_eq!(sw(&x, &x, two(), &MonteCarloConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn sw_delta_pair_matches_closed_form() {
        // E[(theta . c)^2] = |c|^2 / d for uniform theta
        let x = cloud(&[&[0.0, 0.0]]);
        let y = cloud(&[&[1.0, 0.0]]);
        let v = sw(&x, &y, two(), &MonteCarloConfig::new(100_000, 3).unwrap()).unwrap();
        assert!((v - 0.5f64.sqrt()).abs() < 0.005, "{v}");
    }

    #[test]
    fn sw_rejects_mismatch() {
        let x = cloud(&[&[0.0, 0.0]]);
        let y = cloud(&[&[0.0, 0.0], &[1.0, 1.0]]);
        assert!(sw(&x, &y, two(), &MonteCarloConfig::default()).is_err());
        assert!(MonteCarloConfig::new(0, 1).is_err());
    }

    #[test]
    fn traced_value_matches_direct_evaluation() {
        let x = synth_cloud(ShapeKind::GaussianBlob, 16, 3, 4).unwrap();
        let y = synth_cloud(ShapeKind::CubeSurface, 16, 3, 5).unwrap();
        let mc = MonteCarloConfig::new(7, 9).unwrap();
        let proj = uniform_projections(3, &mc).unwrap();
        let direct = power_mean(&projection_powers(&x, &y, &proj, two()).unwrap(), two()).unwrap();
        let mut tape = Tape::new();
        let xn = tape.constant(x.points().clone());
        let yn = tape.constant(y.points().clone());
        let th = tape.constant(proj);
        let v = traced_sliced_distance(&mut tape, xn, yn, th, two()).unwrap();
        assert!((tape.scalar_value(v) - direct).abs() < 1e-12);
    }

    #[test]
    fn traced_gradient_wrt_supports() {
        let y = synth_cloud(ShapeKind::CubeSurface, 8, 3, 5).unwrap();
        let x = synth_cloud(ShapeKind::GaussianBlob, 8, 3, 4).unwrap();
        let proj = uniform_projections(3, &MonteCarloConfig::new(5, 2).unwrap()).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let p = WassersteinOrder::new(p).unwrap();
            let f = |tape: &mut Tape, xn: NodeId| {
                let yn = tape.constant(y.points().clone());
                let th = tape.constant(proj.clone());
                traced_sliced_distance(tape, xn, yn, th, p)
            };
            let err = grad_check(f, x.points(), 1e-6).unwrap();
            assert!(err < 1e-4, "p={}: {err}", p.get());
        }
    }

    #[test]
    fn max_sw_recovers_displacement_direction() {
        let (x, y) = delta_pair();
        let cfg = SliceOptConfig::new(50, 0.03).unwrap();
        let r = max_sw(&x, &y, two(), &cfg, &mut rng_from_seed(1)).unwrap();
        assert!((r.value - 5.0).abs() < 0.05, "{}", r.value);
        let cos = r.direction.dot(&[0.6, 0.8]).abs();
        assert!(cos > 0.999, "{cos} {:?}", r.trace);
        assert_eq!(r.trace.len(), 51);
    }

    #[test]
    fn max_sw_identical_is_zero() {
        let x = synth_cloud(ShapeKind::PlaneGrid, 9, 2, 1).unwrap();
        let r = max_sw(&x, &x, two(), &SliceOptConfig::default(), &mut rng_from_seed(0)).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn zero_steps_gives_init_value() {
        let (x, y) = delta_pair();
        let mut cfg = SliceOptConfig::new(0, 0.1).unwrap();
        cfg.init = SliceInit::Provided(UnitDirection::new(vec![1.0, 0.0]).unwrap());
        let r = max_sw(&x, &y, two(), &cfg, &mut rng_from_seed(0)).unwrap();
        assert_eq!(r.value, 3.0);
        assert_eq!(r.trace, vec![3.0]);
    }

    #[test]
    fn vdsw_identical_is_zero() {
        let x = synth_cloud(ShapeKind::SphereShell, 10, 3, 2).unwrap();
        let r = vdsw(&x, &x, two(), 1.0, &MonteCarloConfig::new(10, 1).unwrap(), &SliceOptConfig::new(5, 0.1).unwrap(), &mut rng_from_seed(3)).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.trace.len(), 6);
    }

    #[test]
    fn vdsw_concentrated_approaches_max() {
        let (x, y) = delta_pair();
        let cfg = SliceOptConfig::new(50, 0.1).unwrap();
        let r = vdsw(&x, &y, two(), 1e4, &MonteCarloConfig::new(20, 5).unwrap(), &cfg, &mut rng_from_seed(2)).unwrap();
        assert!((r.value - 5.0).abs() < 0.1, "{} {:?}", r.value, r.trace);
    }

    #[test]
    fn vdsw_fixed_is_symmetric_and_zero_on_diagonal() {
        let x = synth_cloud(ShapeKind::GaussianBlob, 12, 3, 1).unwrap();
        let y = synth_cloud(ShapeKind::CubeSurface, 12, 3, 2).unwrap();
        let params = VmfParams::new(UnitDirection::normalized(&[1.0, 2.0, 2.0]).unwrap(), 1.0).unwrap();
        let mc = MonteCarloConfig::new(30, 4).unwrap();
        let a = vdsw_fixed(&x, &y, two(), &params, &mc).unwrap();
        let b = vdsw_fixed(&y, &x, two(), &params, &mc).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(vdsw_fixed(&x, &x, two(), &params, &mc).unwrap(), 0.0);
        let bad = VmfParams {
            epsilon: UnitDirection::e1(2),
            kappa: 1.0,
        };
        assert!(vdsw_fixed(&x, &y, two(), &bad, &mc).is_err());
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let x = synth_cloud(ShapeKind::GaussianBlob, 40, 3, 1).unwrap();
        let y = synth_cloud(ShapeKind::SphereShell, 40, 3, 2).unwrap();
        let mc = MonteCarloConfig::new(64, 4).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| sw(&x, &y, two(), &mc).unwrap());
        let b = sw(&x, &y, two(), &mc).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
