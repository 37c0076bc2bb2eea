//! Stochastic gradient descent with momentum and L2 weight decay.

use crate::error::{arg_err, shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
        }
    }
}

/// Momentum buffers, one per parameter tensor.
#[derive(Clone, Debug, Default)]
pub struct Sgd<T> {
    pub cfg: SgdConfig,
    velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(cfg: SgdConfig) -> Self {
        Self {
            cfg,
            velocity: Vec::new(),
        }
    }

    pub fn velocity(&self) -> &[Tensor<T>] {
        &self.velocity
    }

    /// `d = g + wd p; v = momentum v + d; p -= lr v` for each pair.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        if !(self.cfg.lr > 0.0) {
            return arg_err("sgd_step", format!("learning rate must be positive, got {}", self.cfg.lr));
        }
        if params.len() != grads.len() {
            return shape_err("sgd_step", format!("{} params, {} grads", params.len(), grads.len()));
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        }
        if self.velocity.len() != params.len() {
            return shape_err("sgd_step", "parameter count changed between steps");
        }
        let SgdConfig { lr, momentum, weight_decay } = self.cfg;
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            if p.shape() != g.shape() || p.shape() != v.shape() {
                return shape_err("sgd_step", format!("param {} vs grad {}", p.shape(), g.shape()));
            }
            for ((pv, gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                let d = gv.acc() + weight_decay * pv.acc();
                let nv = momentum * vv.acc() + d;
                *vv = T::from_acc(nv);
                *pv = T::from_acc(pv.acc() - lr * nv);
            }
        }
        Ok(())
    }
}

/// One functional SGD step: returns the updated parameters.
pub fn sgd_step<T: Scalar>(
    params: &[Tensor<T>],
    grads: &[Tensor<T>],
    velocity: &mut Vec<Tensor<T>>,
    cfg: SgdConfig,
) -> Result<Vec<Tensor<T>>> {
    let mut opt = Sgd {
        cfg,
        velocity: std::mem::take(velocity),
    };
    let mut out: Vec<Tensor<T>> = params.to_vec();
    {
        let mut refs: Vec<&mut Tensor<T>> = out.iter_mut().collect();
        let grefs: Vec<&Tensor<T>> = grads.iter().collect();
        opt.step(&mut refs, &grefs)?;
    }
    *velocity = opt.velocity;
    Ok(out)
}
