use super::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};

/// Central-difference gradient of the scalar built by `f` at `x`.
pub fn central_difference<F>(f: F, x: &Tensor, eps: f64) -> Result<Tensor>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    let eval = |v: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let leaf = tape.leaf(v);
        let root = f(&mut tape, leaf)?;
        let out = tape.value(root);
        if out.numel() != 1 {
            return Err(Error::shape("grad_check", format!("root shape {:?}", out.shape())));
        }
        Ok(out.item())
    };
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        grad.data_mut()[i] = (eval(plus)? - eval(minus)?) / (2.0 * eps);
    }
    Ok(grad)
}

/// Maximum coordinate-wise relative error between the reverse-mode gradient
/// and central differences.
///
/// Each coordinate's error is `|a - n| / max(|a|, |n|, floor)` where `floor`
/// is 1% of the largest gradient magnitude (at least 1e-10), so coordinates
/// that are essentially zero are judged against the gradient's overall scale.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::invalid(format!("grad_check eps {eps} outside (0, 1e-2]")));
    }
    let mut tape = Tape::new();
    let leaf = tape.leaf(x.clone());
    let root = f(&mut tape, leaf)?;
    let analytic = tape.backward(root)?.get(leaf);
    let numeric = central_difference(&f, x, eps)?;
    Ok(max_relative_error(&analytic, &numeric))
}

pub(crate) fn max_relative_error(a: &Tensor, n: &Tensor) -> f64 {
    let scale = a
        .data()
        .iter()
        .chain(n.data())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let floor = (1e-2 * scale).max(1e-10);
    a.data()
        .iter()
        .zip(n.data())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
