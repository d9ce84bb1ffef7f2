//! First-order update rules over lists of parameter tensors.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Whether an update climbs or descends the objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Goal {
    Maximize,
    Minimize,
}

impl Goal {
    fn sign(self) -> f64 {
        match self {
            Goal::Maximize => 1.0,
            Goal::Minimize => -1.0,
        }
    }
}

fn check(params: &[Tensor], grads: &[Tensor]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape("optimizer", format!("{} params vs {} grads", params.len(), grads.len())));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::shape("optimizer", format!("{:?} vs {:?}", p.shape(), g.shape())));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
    }
    Ok(())
}

fn zeros_like(params: &[Tensor]) -> Vec<Tensor> {
    params.iter().map(|p| Tensor::zeros(p.shape())).collect()
}

/// Adam with bias correction. Defaults: `beta1 = 0`, `beta2 = 0.9`, `eps = 1e-8`.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Result<Self> {
        Self::with_betas(lr, 0.0, 0.9)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64) -> Result<Self> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be > 0, got {lr}")));
        }
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2)) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        Ok(Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], goal: Goal) -> Result<()> {
        check(params, grads)?;
        if self.first.is_empty() {
            self.first = zeros_like(params);
            self.second = zeros_like(params);
        } else if self.first.len() != params.len() {
            return Err(Error::shape("adam", "parameter list changed between steps"));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let s = goal.sign();
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *pi += s * self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// SGD with heavy-ball momentum and L2 weight decay:
/// `buf = mu * buf + (g_descent + wd * w)`, `w -= lr * buf`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    buffers: Vec<Tensor>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be > 0, got {lr}")));
        }
        if !((0.0..1.0).contains(&momentum) && weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::invalid("momentum must lie in [0, 1) and weight decay be >= 0"));
        }
        Ok(Self {
            lr,
            momentum,
            weight_decay,
            buffers: Vec::new(),
        })
    }

    pub fn plain(lr: f64) -> Result<Self> {
        Self::new(lr, 0.0, 0.0)
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], goal: Goal) -> Result<()> {
        check(params, grads)?;
        if self.buffers.is_empty() {
            self.buffers = zeros_like(params);
        } else if self.buffers.len() != params.len() {
            return Err(Error::shape("sgd", "parameter list changed between steps"));
        }
        let s = goal.sign();
        for ((p, g), b) in params.iter_mut().zip(grads).zip(self.buffers.iter_mut()) {
            for ((pi, &gi), bi) in p.data_mut().iter_mut().zip(g.data()).zip(b.data_mut()) {
                let descent = -s * gi + self.weight_decay * *pi;
                *bi = self.momentum * *bi + descent;
                *pi -= self.lr * *bi;
            }
        }
        Ok(())
    }
}
