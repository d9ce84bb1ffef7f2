//! Directions on the unit sphere: uniform sampling, the von Mises–Fisher
//! density, the reparameterized rejection sampler and its differentiable
//! Householder transform.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};

/// Tolerance on `||v|| = 1` for a [`UnitDirection`].
pub const UNIT_TOL: f64 = 1e-9;
/// Cap on rejection-loop iterations in [`sample_vmf`].
pub const VMF_MAX_REJECTIONS: usize = 1_000_000;
/// `||e1 - epsilon||` below which the Householder reflection is replaced by the identity.
pub const HOUSEHOLDER_EPS: f64 = 1e-9;
const UNIFORM_RETRIES: usize = 100;
const BESSEL_SWITCH: f64 = 50.0;

/// A point on `S^{d-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitDirection(Vec<f64>);

impl UnitDirection {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        let n = norm(&v);
        if v.is_empty() || !((n - 1.0).abs() <= UNIT_TOL) {
            return Err(Error::invalid(format!("direction norm {n} is not 1")));
        }
        Ok(Self(v))
    }

    /// Scales a nonzero vector onto the sphere.
    pub fn normalized(v: &[f64]) -> Result<Self> {
        let n = norm(v);
        if !(n >= crate::autodiff::NORMALIZE_EPS) {
            return Err(Error::DegenerateDirection { norm: n });
        }
        Ok(Self(v.iter().map(|x| x / n).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    /// First standard basis vector of `R^d`.
    pub fn e1(d: usize) -> Self {
        let mut v = vec![0.0; d];
        v[0] = 1.0;
        Self(v)
    }
}

impl TryFrom<Vec<f64>> for UnitDirection {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        UnitDirection::new(v)
    }
}

impl From<UnitDirection> for Vec<f64> {
    fn from(u: UnitDirection) -> Self {
        u.0
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sample_uniform_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<UnitDirection> {
    if d == 0 {
        return Err(Error::invalid("sphere dimension must be >= 1"));
    }
    for _ in 0..UNIFORM_RETRIES {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&g);
        if n > 1e-300 {
            return Ok(UnitDirection(g.iter().map(|x| x / n).collect()));
        }
    }
    Err(Error::DegenerateDirection { norm: 0.0 })
}

/// Location and concentration of a von Mises–Fisher distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VmfParams {
    pub epsilon: UnitDirection,
    pub kappa: f64,
}

impl VmfParams {
    pub fn new(epsilon: UnitDirection, kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::invalid(format!("kappa must be finite and >= 0, got {kappa}")));
        }
        Ok(Self { epsilon, kappa })
    }

    pub fn dim(&self) -> usize {
        self.epsilon.dim()
    }
}

/// `ln I_nu(x)` for the modified Bessel function of the first kind, `nu >= 0`, `x >= 0`.
///
/// Power series below `x = 50`, large-argument expansion above (the series is
/// kept when `nu` is large relative to `x`, where the expansion is poor).
pub fn ln_bessel_i(nu: f64, x: f64) -> f64 {
    assert!(nu >= 0.0 && x >= 0.0, "ln_bessel_i domain");
    if x == 0.0 {
        return if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if x >= BESSEL_SWITCH && nu * nu < 0.25 * x {
        ln_bessel_i_asymptotic(nu, x)
    } else {
        ln_bessel_i_series(nu, x)
    }
}

fn ln_bessel_i_series(nu: f64, x: f64) -> f64 {
    let lh = (0.5 * x).ln();
    let term = |k: f64| (2.0 * k + nu) * lh - ln_gamma(k + 1.0) - ln_gamma(k + nu + 1.0);
    let mut peak = term(0.0);
    let mut acc = 1.0;
    let mut k = 1.0;
    loop {
        let t = term(k);
        if t > peak {
            acc = acc * (peak - t).exp() + 1.0;
            peak = t;
        } else {
            acc += (t - peak).exp();
            // past the peak terms decay monotonically
            if t < peak - 40.0 && k * (k + nu) > 0.25 * x * x {
                break;
            }
        }
        k += 1.0;
        if k > 100_000.0 {
            break;
        }
    }
    peak + acc.ln()
}

fn ln_bessel_i_asymptotic(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut sum = 1.0;
    let mut term = 1.0;
    for k in 1..=12 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= -(mu - odd * odd) / (kf * 8.0 * x);
        sum += term;
        if term.abs() < 1e-17 {
            break;
        }
    }
    x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + sum.ln()
}

/// `ln C_d(kappa)`, the log normalizer of the vMF density on `S^{d-1}`.
pub fn vmf_ln_normalizer(d: usize, kappa: f64) -> f64 {
    let df = d as f64;
    let nu = 0.5 * df - 1.0;
    if kappa == 0.0 {
        // reciprocal surface area: Gamma(d/2) / (2 pi^{d/2})
        return ln_gamma(0.5 * df) - std::f64::consts::LN_2 - 0.5 * df * std::f64::consts::PI.ln();
    }
    let nu_abs = nu.abs(); // I_{-1/2} appears for d = 1 only
    nu * kappa.ln() - 0.5 * df * (2.0 * std::f64::consts::PI).ln() - ln_bessel_i(nu_abs, kappa)
}

pub fn vmf_pdf(theta: &UnitDirection, params: &VmfParams) -> Result<f64> {
    if params.kappa < 0.0 {
        return Err(Error::invalid("kappa < 0"));
    }
    if theta.dim() != params.dim() {
        return Err(Error::shape("vmf_pdf", format!("{} vs {}", theta.dim(), params.dim())));
    }
    let lc = vmf_ln_normalizer(params.dim(), params.kappa);
    Ok((lc + params.kappa * params.epsilon.dot(theta.as_slice())).exp())
}

/// Mean resultant length `E[epsilon . theta] = I_{d/2}(kappa) / I_{d/2-1}(kappa)`.
pub fn mean_resultant_length(d: usize, kappa: f64) -> f64 {
    if kappa == 0.0 {
        return 0.0;
    }
    let nu = 0.5 * d as f64;
    (ln_bessel_i(nu, kappa) - ln_bessel_i(nu - 1.0, kappa)).exp()
}

/// The `epsilon`-independent randomness of one vMF draw.
#[derive(Clone, Debug, PartialEq)]
pub struct VmfNoise {
    /// Component along the location in the `e1` frame.
    pub omega: f64,
    /// Uniform direction on `S^{d-2}`.
    pub tangential: Vec<f64>,
    /// Accepted Beta variate.
    pub beta_sample: f64,
}

impl VmfNoise {
    /// `(omega, sqrt(1 - omega^2) v)`, the sample before reflection.
    pub fn frame_sample(&self) -> Vec<f64> {
        let s = (1.0 - self.omega * self.omega).max(0.0).sqrt();
        std::iter::once(self.omega)
            .chain(self.tangential.iter().map(|v| s * v))
            .collect()
    }
}

/// One accepted vMF draw with the intermediates of the rejection sampler.
#[derive(Clone, Debug, PartialEq)]
pub struct VmfDraw {
    pub theta: UnitDirection,
    pub noise: VmfNoise,
}

/// Draws `(omega, v)` for a vMF on `S^{d-1}` with concentration `kappa`.
pub fn sample_vmf_noise<R: Rng + ?Sized>(d: usize, kappa: f64, rng: &mut R) -> Result<VmfNoise> {
    if d < 2 {
        return Err(Error::invalid(format!("vMF sampling needs d >= 2, got {d}")));
    }
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(Error::invalid(format!("kappa must be finite and >= 0, got {kappa}")));
    }
    let tangential = sample_uniform_sphere(d - 1, rng)?.0;
    let dm1 = (d - 1) as f64;
    let root = (4.0 * kappa * kappa + dm1 * dm1).sqrt();
    // (-2k + root) / (d-1), rearranged to avoid cancellation at large kappa
    let b = dm1 / (2.0 * kappa + root);
    let a = (dm1 + 2.0 * kappa + root) / 4.0;
    let m = 4.0 * a * b / (1.0 + b) - dm1 * dm1.ln();
    let beta = Beta::new(0.5 * dm1, 0.5 * dm1).map_err(|e| Error::invalid(e.to_string()))?;
    for _ in 0..VMF_MAX_REJECTIONS {
        let psi: f64 = beta.sample(rng);
        let denom = 1.0 - (1.0 - b) * psi;
        let omega = (1.0 - (1.0 + b) * psi) / denom;
        let t = 2.0 * a * b / denom;
        let u: f64 = rng.random();
        if dm1 * t.ln() - t + m >= u.ln() {
            return Ok(VmfNoise {
                omega: omega.clamp(-1.0, 1.0),
                tangential,
                beta_sample: psi,
            });
        }
    }
    Err(Error::SamplerExhausted(VMF_MAX_REJECTIONS))
}

/// Reflection taking `e1` to `epsilon`, applied to `h`; identity when `epsilon ≈ e1`.
pub fn householder_apply(epsilon: &[f64], h: &[f64]) -> Vec<f64> {
    let mut w: Vec<f64> = epsilon.iter().map(|e| -e).collect();
    w[0] += 1.0;
    let n = norm(&w);
    if n < HOUSEHOLDER_EPS {
        return h.to_vec();
    }
    let u: Vec<f64> = w.iter().map(|x| x / n).collect();
    let proj: f64 = u.iter().zip(h).map(|(a, b)| a * b).sum();
    h.iter().zip(&u).map(|(hv, uv)| hv - 2.0 * proj * uv).collect()
}

pub fn sample_vmf<R: Rng + ?Sized>(params: &VmfParams, rng: &mut R) -> Result<VmfDraw> {
    let noise = sample_vmf_noise(params.dim(), params.kappa, rng)?;
    let theta = householder_apply(params.epsilon.as_slice(), &noise.frame_sample());
    Ok(VmfDraw {
        theta: UnitDirection::normalized(&theta)?,
        noise,
    })
}

/// Traced `epsilon -> T(omega, v, epsilon)` for a batch of noise draws.
///
/// `epsilon` is a length-`d` node; the result is an `L x d` node whose rows
/// are the reflected frame samples. Gradients reach `epsilon` only; the noise
/// is held fixed.
pub fn vmf_reparam_batch(tape: &mut Tape, noise: &[VmfNoise], epsilon: NodeId) -> Result<NodeId> {
    let d = tape.value(epsilon).numel();
    if noise.is_empty() {
        return Err(Error::invalid("vmf_reparam_batch needs at least one draw"));
    }
    let mut frame = Vec::with_capacity(noise.len() * d);
    for nz in noise {
        let h = nz.frame_sample();
        if h.len() != d {
            return Err(Error::shape("vmf_reparam", format!("noise dim {} for d={}", h.len(), d)));
        }
        frame.extend(h);
    }
    let h = tape.constant(Tensor::matrix(noise.len(), d, frame)?);
    let mut e1 = vec![0.0; d];
    e1[0] = 1.0;
    let e1 = tape.constant(Tensor::new(tape.value(epsilon).shape().to_vec(), e1)?);
    let w = tape.sub(e1, epsilon)?;
    if tape.value(w).norm() < HOUSEHOLDER_EPS {
        return Ok(h);
    }
    let u = tape.normalize(w)?;
    let u_col = tape.reshape(u, &[d, 1])?;
    let u_row = tape.reshape(u, &[1, d])?;
    let hu = tape.matmul(h, u_col)?;
    let outer = tape.matmul(hu, u_row)?;
    let refl = tape.scale(outer, -2.0)?;
    tape.add(h, refl)
}

/// Traced single-draw transform; returns a length-`d` node.
pub fn vmf_reparam_theta(tape: &mut Tape, noise: &VmfNoise, epsilon: NodeId) -> Result<NodeId> {
    let d = tape.value(epsilon).numel();
    let batch = vmf_reparam_batch(tape, std::slice::from_ref(noise), epsilon)?;
    tape.reshape(batch, &[d])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::rng::rng_from_seed;

    #[test]
    fn uniform_draws_are_unit_and_deterministic() {
        let mut a = rng_from_seed(5);
        let mut b = rng_from_seed(5);
        for _ in 0..100 {
            let u = sample_uniform_sphere(4, &mut a).unwrap();
            let v = sample_uniform_sphere(4, &mut b).unwrap();
            assert!((norm(u.as_slice()) - 1.0).abs() < 1e-9);
            assert_eq!(u, v);
        }
    }

    #[test]
    fn uniform_mean_near_origin() {
        let mut rng = rng_from_seed(1);
        let n = 100_000;
        let mut acc = [0.0; 3];
        for _ in 0..n {
            let u = sample_uniform_sphere(3, &mut rng).unwrap();
            for (a, v) in acc.iter_mut().zip(u.as_slice()) {
                *a += v;
            }
        }
        for a in acc {
            assert!((a / n as f64).abs() < 0.02);
        }
    }

    #[test]
    fn bessel_matches_closed_forms() {
        // I_{1/2}(x) = sqrt(2 / (pi x)) sinh x
        for x in [0.1, 1.0, 10.0, 49.0, 60.0, 200.0] {
            let exact = (2.0 / (std::f64::consts::PI * x)).sqrt().ln() + x.sinh().ln();
            let got = ln_bessel_i(0.5, x);
            assert!((got - exact).abs() < 1e-10 * exact.abs().max(1.0), "x={x}: {got} vs {exact}");
        }
        // I_0(1) = 1.2660658777520082
        assert!((ln_bessel_i(0.0, 1.0).exp() - 1.266_065_877_752_008_2).abs() < 1e-14);
    }

    #[test]
    fn bessel_series_and_asymptotic_agree_at_switch() {
        for nu in [0.0, 0.5, 1.0, 1.5] {
            let s = ln_bessel_i_series(nu, 50.0);
            let a = ln_bessel_i_asymptotic(nu, 50.0);
            assert!((s - a).abs() < 1e-12, "nu={nu}: {s} vs {a}");
        }
    }

    #[test]
    fn mean_resultant_length_d3() {
        let k: f64 = 1.0;
        let exact = 1.0 / k.tanh() - 1.0 / k;
        assert!((mean_resultant_length(3, k) - exact).abs() < 1e-13);
        assert!((mean_resultant_length(3, 1.0) - 0.3130).abs() < 1e-4);
    }

    #[test]
    fn pdf_properties() {
        let eps = UnitDirection::new(vec![0.0, 0.0, 1.0]).unwrap();
        let params = VmfParams::new(eps.clone(), 1.0).unwrap();
        let neg = UnitDirection::new(vec![0.0, 0.0, -1.0]).unwrap();
        let ratio = vmf_pdf(&eps, &params).unwrap() / vmf_pdf(&neg, &params).unwrap();
        assert!((ratio - 2f64.exp()).abs() < 1e-12);
        let side = UnitDirection::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(vmf_pdf(&eps, &params).unwrap() > vmf_pdf(&side, &params).unwrap());
        let flat = VmfParams::new(eps.clone(), 0.0).unwrap();
        let a = vmf_pdf(&eps, &flat).unwrap();
        let b = vmf_pdf(&side, &flat).unwrap();
        assert_eq!(a, b);
        // uniform density on S^2 is 1 / (4 pi)
        assert!((a - 1.0 / (4.0 * std::f64::consts::PI)).abs() < 1e-15);
        assert!(VmfParams::new(eps, -1.0).is_err());
    }

    #[test]
    fn pdf_normalizer_is_continuous_at_zero() {
        for d in [2, 3, 5] {
            let a = vmf_ln_normalizer(d, 0.0);
            let b = vmf_ln_normalizer(d, 1e-6);
            assert!((a - b).abs() < 1e-6, "d={d}: {a} vs {b}");
        }
    }

    #[test]
    fn draws_are_unit() {
        let mut rng = rng_from_seed(2);
        for d in [2, 3, 7] {
            for kappa in [0.0, 0.5, 10.0, 1e4] {
                let eps = sample_uniform_sphere(d, &mut rng).unwrap();
                let params = VmfParams::new(eps, kappa).unwrap();
                let draw = sample_vmf(&params, &mut rng).unwrap();
                assert!((norm(draw.theta.as_slice()) - 1.0).abs() < 1e-9);
                assert!((-1.0..=1.0).contains(&draw.noise.omega));
                assert!(draw.noise.beta_sample > 0.0 && draw.noise.beta_sample < 1.0);
            }
        }
    }

    #[test]
    fn mean_resultant_length_d3_kappa1_monte_carlo() {
        let mut rng = rng_from_seed(3);
        let eps = UnitDirection::new(vec![0.0, 1.0, 0.0]).unwrap();
        let params = VmfParams::new(eps.clone(), 1.0).unwrap();
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| eps.dot(sample_vmf(&params, &mut rng).unwrap().theta.as_slice()))
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.3130).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn huge_kappa_concentrates() {
        let mut rng = rng_from_seed(4);
        let eps = UnitDirection::normalized(&[1.0, -2.0, 0.5]).unwrap();
        let params = VmfParams::new(eps.clone(), 1e4).unwrap();
        let close = (0..1000)
            .filter(|_| eps.dot(sample_vmf(&params, &mut rng).unwrap().theta.as_slice()) > 0.999)
            .count();
        assert!(close >= 990, "{close}");
    }

    #[test]
    fn reflection_at_minus_e1() {
        let noise = VmfNoise {
            omega: 0.3,
            tangential: vec![0.6, 0.8],
            beta_sample: 0.5,
        };
        let mut tape = Tape::new();
        let eps = tape.leaf(Tensor::vector(vec![-1.0, 0.0, 0.0]));
        let th = vmf_reparam_theta(&mut tape, &noise, eps).unwrap();
        let s = (1.0f64 - 0.09).sqrt();
        let want = [-0.3, s * 0.6, s * 0.8];
        for (g, w) in tape.value(th).data().iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn omega_one_maps_to_epsilon() {
        let noise = VmfNoise {
            omega: 1.0,
            tangential: vec![1.0, 0.0],
            beta_sample: 0.0,
        };
        let eps = UnitDirection::normalized(&[0.2, -0.4, 0.9]).unwrap();
        let mut tape = Tape::new();
        let e = tape.leaf(Tensor::vector(eps.as_slice().to_vec()));
        let th = vmf_reparam_theta(&mut tape, &noise, e).unwrap();
        let v = tape.value(th);
        assert!((v.norm() - 1.0).abs() < 1e-12);
        for (a, b) in v.data().iter().zip(eps.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_at_e1() {
        let h = vec![0.1, 0.2, 0.3];
        assert_eq!(householder_apply(&[1.0, 0.0, 0.0], &h), h);
    }

    #[test]
    fn reparam_gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(8);
        for _ in 0..20 {
            let noise = sample_vmf_noise(4, 2.0, &mut rng).unwrap();
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let eps = sample_uniform_sphere(4, &mut rng).unwrap();
            let f = |tape: &mut Tape, e: NodeId| -> Result<NodeId> {
                let th = vmf_reparam_theta(tape, &noise, e)?;
                let cn = tape.constant(Tensor::vector(c.clone()));
                tape.dot(cn, th)
            };
            let err = grad_check(f, &Tensor::vector(eps.as_slice().to_vec()), 1e-6).unwrap();
            assert!(err < 1e-5, "rel err {err}");
        }
    }
}
