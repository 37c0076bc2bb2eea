//! Batch normalization over `(n, h, w)` per channel.

use rayon::prelude::*;

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Affine parameters and running statistics of one batchnorm layer.
///
/// All four tensors have shape `(1, c, 1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
}

/// What training-mode forward keeps for the backward pass.
#[derive(Clone, Debug)]
pub struct BnSaved<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<f64>,
}

impl<T: Scalar> BatchNorm<T> {
    /// `gamma = 1`, `beta = 0`, running mean 0 and variance 1.
    pub fn identity(c: usize) -> Self {
        Self {
            gamma: Tensor::full([1, c, 1, 1], T::one()),
            beta: Tensor::zeros([1, c, 1, 1]),
            running_mean: Tensor::zeros([1, c, 1, 1]),
            running_var: Tensor::full([1, c, 1, 1], T::one()),
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Folds batch statistics (biased variance over `count` values) into the
    /// running estimates.
    pub fn update_running(&mut self, mean: &[f64], var: &[f64], count: usize) {
        let unbias = if count > 1 { count as f64 / (count - 1) as f64 } else { 1.0 };
        let m = self.momentum;
        for (c, (&bm, &bv)) in mean.iter().zip(var).enumerate() {
            let rm = self.running_mean.data()[c].acc();
            self.running_mean.data_mut()[c] = T::from_acc((1.0 - m) * rm + m * bm);
            let rv = self.running_var.data()[c].acc();
            self.running_var.data_mut()[c] = T::from_acc((1.0 - m) * rv + m * bv * unbias);
        }
    }

    /// Inference mode: normalizes with the running statistics.
    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        batchnorm(x, self.running_mean.data(), self.running_var.data(), &self.gamma, &self.beta, self.eps)
    }

    /// Training mode: normalizes with batch statistics and folds them into
    /// the running estimates (`running = (1 - momentum) running + momentum batch`,
    /// unbiased batch variance).
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, BnSaved<T>)> {
        let (y, saved, mean, var) = batchnorm_train(x, &self.gamma, &self.beta, self.eps)?;
        let s = x.shape();
        self.update_running(&mean, &var, s.n * s.plane());
        Ok((y, saved))
    }
}

fn check_channels<T: Scalar>(x: &Tensor<T>, len: usize, what: &str) -> Result<()> {
    if x.shape().c != len {
        return shape_err(
            "batchnorm",
            format!("{what} has {len} entries for {} channels", x.shape().c),
        );
    }
    Ok(())
}

/// Per-channel affine normalization with given statistics.
pub fn batchnorm<T: Scalar>(
    x: &Tensor<T>,
    mean: &[T],
    var: &[T],
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    check_channels(x, mean.len(), "mean")?;
    check_channels(x, var.len(), "var")?;
    check_channels(x, gamma.len(), "gamma")?;
    check_channels(x, beta.len(), "beta")?;
    let s = x.shape();
    let coeffs: Vec<(T, T)> = (0..s.c)
        .map(|c| {
            let scale = gamma.data()[c].acc() / (var[c].acc() + eps).sqrt();
            let shift = beta.data()[c].acc() - mean[c].acc() * scale;
            (T::from_acc(scale), T::from_acc(shift))
        })
        .collect();
    let mut out = x.clone();
    affine_planes(&mut out, &coeffs);
    Ok(out)
}

/// `v = v * scale + shift` with one coefficient pair per channel.
fn affine_planes<T: Scalar>(t: &mut Tensor<T>, coeffs: &[(T, T)]) {
    let plane = t.shape().plane();
    if plane == 0 {
        return;
    }
    t.data_mut().par_chunks_mut(plane).enumerate().for_each(|(i, p)| {
        let (a, b) = coeffs[i % coeffs.len()];
        for v in p {
            *v = *v * a + b;
        }
    });
}

/// Per-channel mean and biased variance over `(n, h, w)`.
pub fn batch_statistics<T: Scalar>(x: &Tensor<T>) -> (Vec<f64>, Vec<f64>) {
    let s = x.shape();
    let count = (s.n * s.plane()) as f64;
    let mut mean = vec![0.0; s.c];
    let mut var = vec![0.0; s.c];
    if s.numel() == 0 {
        return (mean, var);
    }
    let sums: Vec<f64> = x.data().par_chunks(s.plane()).map(|p| p.iter().map(|v| v.acc()).sum()).collect();
    for (i, v) in sums.iter().enumerate() {
        mean[i % s.c] += v;
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let sq: Vec<f64> = x
        .data()
        .par_chunks(s.plane())
        .enumerate()
        .map(|(i, p)| {
            let mu = mean[i % s.c];
            p.iter().map(|v| (v.acc() - mu).powi(2)).sum()
        })
        .collect();
    for (i, v) in sq.iter().enumerate() {
        var[i % s.c] += v;
    }
    var.iter_mut().for_each(|v| *v /= count);
    (mean, var)
}

/// Training-mode forward. Returns output, saved intermediates and the batch
/// mean / biased variance.
pub fn batchnorm_train<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, BnSaved<T>, Vec<f64>, Vec<f64>)> {
    check_channels(x, gamma.len(), "gamma")?;
    check_channels(x, beta.len(), "beta")?;
    let s = x.shape();
    let (mean, var) = batch_statistics(x);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let norm: Vec<(T, T)> = (0..s.c)
        .map(|c| (T::from_acc(inv_std[c]), T::from_acc(-mean[c] * inv_std[c])))
        .collect();
    let mut xhat = x.clone();
    affine_planes(&mut xhat, &norm);
    let mut y = xhat.clone();
    let gb: Vec<(T, T)> = gamma.data().iter().zip(beta.data()).map(|(&g, &b)| (g, b)).collect();
    affine_planes(&mut y, &gb);
    Ok((y, BnSaved { xhat, inv_std }, mean, var))
}

/// Gradients of training-mode batchnorm: `(dx, dgamma, dbeta)`.
pub fn batchnorm_train_backward<T: Scalar>(
    saved: &BnSaved<T>,
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let s = grad_out.shape();
    if saved.xhat.shape() != s {
        return shape_err("batchnorm_backward", format!("{} vs {}", saved.xhat.shape(), s));
    }
    let count = (s.n * s.plane()) as f64;
    let mut dx = Tensor::zeros(s);
    let mut dgamma = Tensor::zeros([1, s.c, 1, 1]);
    let mut dbeta = Tensor::zeros([1, s.c, 1, 1]);
    for c in 0..s.c {
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for n in 0..s.n {
            for (dy, xh) in grad_out.plane(n, c).iter().zip(saved.xhat.plane(n, c)) {
                sum_dy += dy.acc();
                sum_dy_xhat += dy.acc() * xh.acc();
            }
        }
        dbeta.data_mut()[c] = T::from_acc(sum_dy);
        dgamma.data_mut()[c] = T::from_acc(sum_dy_xhat);
        let k = gamma.data()[c].acc() * saved.inv_std[c] / count;
        let (a, b0, b1) = (T::from_acc(k * count), T::from_acc(-k * sum_dy), T::from_acc(-k * sum_dy_xhat));
        for n in 0..s.n {
            let planes = grad_out.plane(n, c).iter().zip(saved.xhat.plane(n, c));
            for (d, (&g, &h)) in dx.plane_mut(n, c).iter_mut().zip(planes) {
                *d = a * g + b0 + b1 * h;
            }
        }
    }
    Ok((dx, dgamma, dbeta))
}
