//! 2-D cross-correlation with zero or reflect padding, evaluated as matrix
//! products over unfolded inputs.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{pad_plane, unpad_plane_add, PadMode, Shape4, Tensor};

/// Weights and geometry of a square-kernel convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T> {
    /// `(out_ch, in_ch, k, k)`
    pub weight: Tensor<T>,
    /// `(1, out_ch, 1, 1)`
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
    pub pad_mode: PadMode,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>, stride: usize, padding: usize, pad_mode: PadMode) -> Result<Self> {
        let ws = weight.shape();
        if ws.h != ws.w {
            return shape_err("ConvParams", format!("non-square kernel {ws}"));
        }
        if ws.h % 2 == 0 {
            return Err(Error::EvenKernel(ws.h));
        }
        if bias.shape() != Shape4::new(1, ws.n, 1, 1) {
            return shape_err("ConvParams", format!("bias {} for {} outputs", bias.shape(), ws.n));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument {
                op: "ConvParams",
                detail: "stride must be positive".into(),
            });
        }
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
            pad_mode,
        })
    }

    /// Zero weights and bias, stride 1, "same" padding.
    pub fn zeros(out_ch: usize, in_ch: usize, k: usize, pad_mode: PadMode) -> Result<Self> {
        Self::new(
            Tensor::zeros([out_ch, in_ch, k, k]),
            Tensor::zeros([1, out_ch, 1, 1]),
            1,
            k / 2,
            pad_mode,
        )
    }

    /// Weights drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, bias zero,
    /// stride 1, "same" padding.
    pub fn init_uniform<R: Rng + ?Sized>(out_ch: usize, in_ch: usize, k: usize, pad_mode: PadMode, rng: &mut R) -> Result<Self> {
        let bound = 1.0 / ((in_ch * k * k) as f64).sqrt();
        Self::new(
            Tensor::uniform([out_ch, in_ch, k, k], -bound, bound, rng),
            Tensor::zeros([1, out_ch, 1, 1]),
            1,
            k / 2,
            pad_mode,
        )
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape().c
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape().n
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape().h
    }
}

pub(crate) struct ConvGeom {
    pub x: Shape4,
    pub out: Shape4,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ph: usize,
    pub pw: usize,
}

pub(crate) fn conv_geometry(x: Shape4, weight: Shape4, stride: usize, pad: usize) -> Result<ConvGeom> {
    if x.c != weight.c {
        return shape_err(
            "conv2d",
            format!("input has {} channels, weight expects {}", x.c, weight.c),
        );
    }
    if stride == 0 {
        return Err(Error::InvalidArgument {
            op: "conv2d",
            detail: "stride must be positive".into(),
        });
    }
    let k = weight.h;
    let ph = x.h + 2 * pad;
    let pw = x.w + 2 * pad;
    if ph < k || pw < weight.w {
        return shape_err(
            "conv2d",
            format!("padded input {ph}x{pw} smaller than kernel {}x{}", k, weight.w),
        );
    }
    let oh = (ph - k) / stride + 1;
    let ow = (pw - weight.w) / stride + 1;
    Ok(ConvGeom {
        x,
        out: Shape4::new(x.n, weight.n, oh, ow),
        k,
        stride,
        pad,
        ph,
        pw,
    })
}

/// Unfolds one padded sample into a `(c k kw, oh ow)` column matrix.
fn im2col<T: Scalar>(x: &Tensor<T>, n: usize, g: &ConvGeom, kw: usize, mode: PadMode, cols: &mut Vec<T>) {
    let (oh, ow) = (g.out.h, g.out.w);
    let p = oh * ow;
    cols.clear();
    cols.resize(g.x.c * g.k * kw * p, T::zero());
    let mut plane: Vec<T> = Vec::new();
    for ic in 0..g.x.c {
        pad_plane(x.plane(n, ic), g.x.h, g.x.w, g.pad, mode, &mut plane);
        for ky in 0..g.k {
            for kx in 0..kw {
                let row = &mut cols[((ic * g.k + ky) * kw + kx) * p..][..p];
                for oy in 0..oh {
                    let src = &plane[(oy * g.stride + ky) * g.pw + kx..];
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    if g.stride == 1 {
                        dst.copy_from_slice(&src[..ow]);
                    } else {
                        for (ox, d) in dst.iter_mut().enumerate() {
                            *d = src[ox * g.stride];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the unpadded sample.
fn col2im<T: Scalar>(dcols: &[T], g: &ConvGeom, kw: usize, mode: PadMode, dst: &mut [T]) {
    let (oh, ow) = (g.out.h, g.out.w);
    let p = oh * ow;
    let mut plane = vec![T::zero(); g.ph * g.pw];
    for ic in 0..g.x.c {
        plane.iter_mut().for_each(|v| *v = T::zero());
        for ky in 0..g.k {
            for kx in 0..kw {
                let row = &dcols[((ic * g.k + ky) * kw + kx) * p..][..p];
                for oy in 0..oh {
                    let base = (oy * g.stride + ky) * g.pw + kx;
                    for (ox, &d) in row[oy * ow..(oy + 1) * ow].iter().enumerate() {
                        let t = &mut plane[base + ox * g.stride];
                        *t = *t + d;
                    }
                }
            }
        }
        unpad_plane_add(&plane, g.x.h, g.x.w, g.pad, mode, &mut dst[ic * g.x.plane()..(ic + 1) * g.x.plane()]);
    }
}

/// Cross-correlation of `x` with `weight` `(out, in, k, k)`, evaluated per
/// sample as a matrix product over the unfolded input.
pub fn conv2d_raw<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
    mode: PadMode,
) -> Result<Tensor<T>> {
    let g = conv_geometry(x.shape(), weight.shape(), stride, pad)?;
    if let Some(b) = bias {
        if b.len() != g.out.c {
            return shape_err("conv2d", format!("bias has {} entries for {} outputs", b.len(), g.out.c));
        }
    }
    let out_c = g.out.c;
    let p = g.out.h * g.out.w;
    let kw = weight.shape().w;
    let kdim = g.x.c * g.k * kw;
    let wd = weight.data();
    let mut out = vec![T::zero(); g.out.numel()];
    out.par_chunks_mut((out_c * p).max(1)).enumerate().for_each(|(n, out_n)| {
        let mut cols = Vec::new();
        im2col(x, n, &g, kw, mode, &mut cols);
        if let Some(b) = bias {
            for (oc, row) in out_n.chunks_mut(p).enumerate() {
                row.iter_mut().for_each(|v| *v = b.data()[oc]);
            }
        }
        T::gemm(out_c, kdim, p, T::one(), (wd, kdim, 1), (&cols, p, 1), T::one(), (out_n, p, 1));
    });
    Tensor::from_vec(g.out, out)
}

pub fn conv2d<T: Scalar>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    conv2d_raw(x, &p.weight, Some(&p.bias), p.stride, p.padding, p.pad_mode)
}

/// Gradients of a convolution; `input` is `None` when not requested.
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Backward pass of [`conv2d_raw`]. Per-sample weight and bias partials are
/// summed in batch order, so results do not depend on the thread count.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
    mode: PadMode,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    let g = conv_geometry(x.shape(), weight.shape(), stride, pad)?;
    if grad_out.shape() != g.out {
        return shape_err("conv2d_backward", format!("grad {} vs output {}", grad_out.shape(), g.out));
    }
    let ws = weight.shape();
    let kw = ws.w;
    let p = g.out.h * g.out.w;
    let kdim = g.x.c * g.k * kw;
    let wd = weight.data();

    struct Partial<T> {
        dx: Vec<T>,
        dw: Vec<T>,
        db: Vec<f64>,
    }

    let partials: Vec<Partial<T>> = (0..g.x.n)
        .into_par_iter()
        .map(|n| {
            let dy = grad_out.sample(n);
            let mut cols = Vec::new();
            im2col(x, n, &g, kw, mode, &mut cols);
            let mut dw = vec![T::zero(); ws.numel()];
            // dW = dY cols^T
            T::gemm(ws.n, p, kdim, T::one(), (dy, p, 1), (&cols, 1, p), T::zero(), (&mut dw, kdim, 1));
            let db = dy.chunks(p.max(1)).map(|row| row.iter().map(|v| v.acc()).sum()).collect();
            let mut dx = Vec::new();
            if need_input {
                // dcols = W^T dY, reusing the column buffer.
                T::gemm(kdim, ws.n, p, T::one(), (wd, 1, kdim), (dy, p, 1), T::zero(), (&mut cols, p, 1));
                dx = vec![T::zero(); g.x.c * g.x.plane()];
                col2im(&cols, &g, kw, mode, &mut dx);
            }
            Partial { dx, dw, db }
        })
        .collect();

    let mut dw = vec![0.0f64; ws.numel()];
    let mut db = vec![0.0f64; ws.n];
    let mut dx = Vec::with_capacity(if need_input { g.x.numel() } else { 0 });
    for part in partials {
        dw.iter_mut().zip(&part.dw).for_each(|(a, b)| *a += b.acc());
        db.iter_mut().zip(&part.db).for_each(|(a, b)| *a += b);
        dx.extend(part.dx);
    }
    Ok(ConvGrads {
        input: if need_input { Some(Tensor::from_vec(g.x, dx)?) } else { None },
        weight: Tensor::from_vec(ws, dw.into_iter().map(T::from_acc).collect())?,
        bias: Tensor::from_vec([1, ws.n, 1, 1], db.into_iter().map(T::from_acc).collect())?,
    })
}
