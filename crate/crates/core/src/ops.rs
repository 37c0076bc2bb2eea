//! Softmax, pooling and resampling primitives.

use rayon::prelude::*;

use crate::error::{arg_err, shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape4, Tensor};

/// Softmax over consecutive channel slices of length `m`.
///
/// Channels `[s*m, (s+1)*m)` form one distribution at every `(n, i, j)`.
/// Max-subtraction keeps large logits from overflowing. Exponentials are
/// taken in the storage type and normalized by an `f64` sum, so each
/// distribution sums to one up to the final rounding of its entries. Entries
/// are floored at the smallest positive normal value, so a weight that would
/// underflow to zero for a very wide logit spread stays positive.
pub fn softmax_over_axis<T: Scalar>(x: &Tensor<T>, m: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if m == 0 || s.c % m != 0 {
        return arg_err("softmax_over_axis", format!("slice length {m} does not divide {} channels", s.c));
    }
    let plane = s.plane();
    let mut out = vec![T::zero(); s.numel()];
    if plane == 0 {
        return Tensor::from_vec(s, out);
    }
    out.par_chunks_mut(m * plane)
        .zip(x.data().par_chunks(m * plane))
        .for_each(|(o, xs)| {
            let mut mx = vec![T::neg_infinity(); plane];
            for row in xs.chunks(plane) {
                for (a, &v) in mx.iter_mut().zip(row) {
                    *a = a.max(v);
                }
            }
            let mut sum = vec![0.0f64; plane];
            for (orow, xrow) in o.chunks_mut(plane).zip(xs.chunks(plane)) {
                for (((d, &v), &a), acc) in orow.iter_mut().zip(xrow).zip(&mx).zip(sum.iter_mut()) {
                    let e = (v - a).exp();
                    *d = e;
                    *acc += e.acc();
                }
            }
            let inv: Vec<f64> = sum.iter().map(|v| 1.0 / v).collect();
            for orow in o.chunks_mut(plane) {
                for (d, &r) in orow.iter_mut().zip(&inv) {
                    *d = T::from_acc(d.acc() * r).max(T::min_positive_value());
                }
            }
        });
    Tensor::from_vec(s, out)
}

/// Vector-Jacobian product of [`softmax_over_axis`] given its output `y`:
/// `dx = y * (g - sum_t y_t g_t)` per distribution.
pub fn softmax_backward<T: Scalar>(y: &Tensor<T>, grad_out: &Tensor<T>, m: usize) -> Result<Tensor<T>> {
    let s = y.shape();
    if grad_out.shape() != s {
        return shape_err("softmax_backward", format!("{} vs {}", grad_out.shape(), s));
    }
    if m == 0 || s.c % m != 0 {
        return arg_err("softmax_backward", format!("slice length {m} does not divide {} channels", s.c));
    }
    let plane = s.plane();
    let mut out = vec![T::zero(); s.numel()];
    if plane == 0 {
        return Tensor::from_vec(s, out);
    }
    out.par_chunks_mut(m * plane)
        .zip(y.data().par_chunks(m * plane).zip(grad_out.data().par_chunks(m * plane)))
        .for_each(|(o, (ys, gs))| {
            let mut dot = vec![0.0f64; plane];
            for (yrow, grow) in ys.chunks(plane).zip(gs.chunks(plane)) {
                for ((d, &a), &b) in dot.iter_mut().zip(yrow).zip(grow) {
                    *d += a.acc() * b.acc();
                }
            }
            for ((orow, yrow), grow) in o.chunks_mut(plane).zip(ys.chunks(plane)).zip(gs.chunks(plane)) {
                for (((d, &a), &b), &dt) in orow.iter_mut().zip(yrow).zip(grow).zip(&dot) {
                    *d = T::from_acc(a.acc() * (b.acc() - dt));
                }
            }
        });
    Tensor::from_vec(s, out)
}

fn pool_geometry(s: Shape4, kernel: (usize, usize), stride: usize, op: &'static str) -> Result<(usize, usize)> {
    if stride == 0 {
        return arg_err(op, "stride must be positive");
    }
    if kernel.0 == 0 || kernel.1 == 0 || kernel.0 > s.h || kernel.1 > s.w {
        return arg_err(op, format!("kernel {:?} does not fit {}x{}", kernel, s.h, s.w));
    }
    Ok(((s.h - kernel.0) / stride + 1, (s.w - kernel.1) / stride + 1))
}

/// Max pooling without padding. Also returns the flat input index of each
/// selected maximum (first occurrence wins on ties).
pub fn max_pool2d_with_indices<T: Scalar>(
    x: &Tensor<T>,
    kernel: (usize, usize),
    stride: usize,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let s = x.shape();
    let (oh, ow) = pool_geometry(s, kernel, stride, "max_pool2d")?;
    let out_shape = Shape4::new(s.n, s.c, oh, ow);
    let mut out = Vec::with_capacity(out_shape.numel());
    let mut idx = Vec::with_capacity(out_shape.numel());
    let xd = x.data();
    for n in 0..s.n {
        for c in 0..s.c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = s.index(n, c, oy * stride, ox * stride);
                    for ky in 0..kernel.0 {
                        for kx in 0..kernel.1 {
                            let i = s.index(n, c, oy * stride + ky, ox * stride + kx);
                            if xd[i] > xd[best] {
                                best = i;
                            }
                        }
                    }
                    out.push(xd[best]);
                    idx.push(best);
                }
            }
        }
    }
    Ok((Tensor::from_vec(out_shape, out)?, idx))
}

pub fn max_pool2d<T: Scalar>(x: &Tensor<T>, kernel: (usize, usize), stride: usize) -> Result<Tensor<T>> {
    max_pool2d_with_indices(x, kernel, stride).map(|(t, _)| t)
}

/// Average pooling without padding.
pub fn avg_pool2d<T: Scalar>(x: &Tensor<T>, kernel: (usize, usize), stride: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    let (oh, ow) = pool_geometry(s, kernel, stride, "avg_pool2d")?;
    let area = (kernel.0 * kernel.1) as f64;
    Ok(Tensor::from_fn([s.n, s.c, oh, ow], |n, c, oy, ox| {
        let mut acc = 0.0;
        for ky in 0..kernel.0 {
            for kx in 0..kernel.1 {
                acc += x.at(n, c, oy * stride + ky, ox * stride + kx).acc();
            }
        }
        T::from_acc(acc / area)
    }))
}

/// Keeps every `stride`-th sample on both spatial axes, starting at 0.
pub fn strided_subsample<T: Scalar>(x: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
    if stride == 0 {
        return arg_err("strided_subsample", "stride must be positive");
    }
    if stride == 1 {
        return Ok(x.clone());
    }
    let s = x.shape();
    let oh = s.h.div_ceil(stride);
    let ow = s.w.div_ceil(stride);
    Ok(Tensor::from_fn([s.n, s.c, oh, ow], |n, c, y, xx| x.at(n, c, y * stride, xx * stride)))
}

/// Adjoint of [`strided_subsample`]: scatters into a zero tensor of `input` shape.
pub fn strided_subsample_backward<T: Scalar>(grad_out: &Tensor<T>, input: Shape4, stride: usize) -> Result<Tensor<T>> {
    let mut out = Tensor::zeros(input);
    let g = grad_out.shape();
    if g.n != input.n || g.c != input.c || g.h != input.h.div_ceil(stride) || g.w != input.w.div_ceil(stride) {
        return shape_err("strided_subsample_backward", format!("{} vs input {}", g, input));
    }
    for n in 0..g.n {
        for c in 0..g.c {
            for y in 0..g.h {
                for x in 0..g.w {
                    out.set(n, c, y * stride, x * stride, grad_out.at(n, c, y, x));
                }
            }
        }
    }
    Ok(out)
}

/// Mean over the spatial axes: `(n, c, h, w) -> (n, c, 1, 1)`.
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    Tensor::from_fn([s.n, s.c, 1, 1], |n, c, _, _| {
        let p = x.plane(n, c);
        T::from_acc(p.iter().map(|v| v.acc()).sum::<f64>() / p.len() as f64)
    })
}

/// Repeats a `(n, c, 1, 1)` tensor over an `h x w` grid.
pub fn broadcast_spatial<T: Scalar>(x: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.h != 1 || s.w != 1 {
        return shape_err("broadcast_spatial", format!("expected (n, c, 1, 1), got {s}"));
    }
    Ok(Tensor::from_fn([s.n, s.c, h, w], |n, c, _, _| x.at(n, c, 0, 0)))
}
