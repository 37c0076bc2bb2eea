//! Application of predicted or fixed low-pass filters, and the family of
//! interchangeable blur providers that precede subsampling.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{arg_err, shape_err, Error, Result};
use crate::ops::{broadcast_spatial, global_avg_pool, softmax_over_axis, strided_subsample};
use crate::predictor::{filter_logits, predict_filters, FilterField, PredictorParams};
use crate::scalar::Scalar;
use crate::tensor::{pad_plane, unpad_plane_add, PadMode, Shape4, Tensor};

fn check_field<T: Scalar>(x: Shape4, field: &FilterField<T>, op: &'static str) -> Result<()> {
    let [fn_, g, _, fh, fw] = field.dims();
    if fn_ != x.n || fh != x.h || fw != x.w {
        return shape_err(
            op,
            format!("field {}x{}x{} does not cover input {}", fn_, fh, fw, x),
        );
    }
    if x.c % g != 0 {
        return Err(Error::GroupMismatch { groups: g, channels: x.c });
    }
    Ok(())
}

/// `Y[n,c,i,j] = sum_{p,q} w[n, group(c), (p,q), i, j] * X[n, c, i+p, j+q]`
/// over the reflect-padded `k x k` window centered at `(i, j)`.
///
/// Channels are split into `g` consecutive blocks of `c / g`; every channel of
/// a block shares the block's filter. Taps are summed in row-major order.
pub fn apply_grouped_adaptive<T: Scalar>(x: &Tensor<T>, field: &FilterField<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    check_field(s, field, "apply_grouped_adaptive")?;
    let k = field.k();
    let r = k / 2;
    let taps = field.taps();
    let per_group = s.c / field.groups();
    let (h, w) = (s.h, s.w);
    let pw = w + 2 * r;
    let wt = field.weights();
    let mut out = vec![T::zero(); s.numel()];
    out.par_chunks_mut((s.c * s.plane()).max(1))
        .enumerate()
        .for_each(|(n, out_n)| {
            let mut xp: Vec<f64> = Vec::new();
            let mut acc = vec![0.0f64; h * w];
            for c in 0..s.c {
                let g = c / per_group;
                pad_plane(x.plane(n, c), h, w, r, PadMode::Reflect, &mut xp);
                acc.iter_mut().for_each(|a| *a = 0.0);
                for t in 0..taps {
                    let (dy, dx) = (t / k, t % k);
                    let wp = wt.plane(n, g * taps + t);
                    for i in 0..h {
                        let src = &xp[(i + dy) * pw + dx..(i + dy) * pw + dx + w];
                        let wr = &wp[i * w..(i + 1) * w];
                        for ((a, &v), &wv) in acc[i * w..(i + 1) * w].iter_mut().zip(src).zip(wr) {
                            *a += wv.acc() * v;
                        }
                    }
                }
                for (o, a) in out_n[c * h * w..(c + 1) * h * w].iter_mut().zip(&acc) {
                    *o = T::from_acc(*a);
                }
            }
        });
    Tensor::from_vec(s, out)
}

/// Single filter per location shared by all channels (`g = 1`).
pub fn apply_spatial_adaptive<T: Scalar>(x: &Tensor<T>, field: &FilterField<T>) -> Result<Tensor<T>> {
    if field.groups() != 1 {
        return arg_err(
            "apply_spatial_adaptive",
            format!("expected a single-group field, got {} groups", field.groups()),
        );
    }
    apply_grouped_adaptive(x, field)
}

/// Gradients of [`apply_grouped_adaptive`] with respect to the input and the
/// filter weights (both factors of the product).
pub fn apply_grouped_adaptive_backward<T: Scalar>(
    x: &Tensor<T>,
    field: &FilterField<T>,
    grad_out: &Tensor<T>,
    need_input: bool,
    need_field: bool,
) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>)> {
    let s = x.shape();
    check_field(s, field, "apply_grouped_adaptive_backward")?;
    if grad_out.shape() != s {
        return shape_err("apply_grouped_adaptive_backward", format!("{} vs {}", grad_out.shape(), s));
    }
    let k = field.k();
    let r = k / 2;
    let taps = field.taps();
    let groups = field.groups();
    let per_group = s.c / groups;
    let (h, w) = (s.h, s.w);
    let (ph, pw) = (h + 2 * r, w + 2 * r);
    let wt = field.weights();
    let fplane = groups * taps * h * w;

    let parts: Vec<(Vec<T>, Vec<T>)> = (0..s.n)
        .into_par_iter()
        .map(|n| {
            let mut dx = Vec::new();
            let mut dfield = vec![0.0f64; if need_field { fplane } else { 0 }];
            let mut xp: Vec<f64> = Vec::new();
            let mut dxp = vec![0.0f64; ph * pw];
            let mut dxc = vec![0.0f64; h * w];
            for c in 0..s.c {
                let g = c / per_group;
                let dy: Vec<f64> = grad_out.plane(n, c).iter().map(|v| v.acc()).collect();
                if need_field {
                    pad_plane(x.plane(n, c), h, w, r, PadMode::Reflect, &mut xp);
                }
                dxp.iter_mut().for_each(|v| *v = 0.0);
                for t in 0..taps {
                    let (oy, ox) = (t / k, t % k);
                    let wp = wt.plane(n, g * taps + t);
                    let fbase = (g * taps + t) * h * w;
                    for i in 0..h {
                        let row = (i + oy) * pw + ox;
                        let dyr = &dy[i * w..(i + 1) * w];
                        if need_field {
                            let src = &xp[row..row + w];
                            for ((d, &a), &b) in dfield[fbase + i * w..fbase + (i + 1) * w].iter_mut().zip(dyr).zip(src) {
                                *d += a * b;
                            }
                        }
                        if need_input {
                            let wr = &wp[i * w..(i + 1) * w];
                            for ((d, &a), &b) in dxp[row..row + w].iter_mut().zip(dyr).zip(wr) {
                                *d += a * b.acc();
                            }
                        }
                    }
                }
                if need_input {
                    dxc.iter_mut().for_each(|v| *v = 0.0);
                    unpad_plane_add(&dxp, h, w, r, PadMode::Reflect, &mut dxc);
                    dx.extend(dxc.iter().map(|&v| T::from_acc(v)));
                }
            }
            (dx, dfield.into_iter().map(T::from_acc).collect())
        })
        .collect();

    let mut dx = Vec::new();
    let mut df = Vec::new();
    for (a, b) in parts {
        dx.extend(a);
        df.extend(b);
    }
    let dx = if need_input { Some(Tensor::from_vec(s, dx)?) } else { None };
    let df = if need_field {
        Some(Tensor::from_vec(wt.shape(), df)?)
    } else {
        None
    };
    Ok((dx, df))
}

/// Normalized `k x k` Gaussian, row-major.
pub fn gaussian_kernel(k: usize, sigma: f64) -> Result<Vec<f64>> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::EvenKernel(k));
    }
    if !(sigma > 0.0) {
        return arg_err("gaussian_kernel", format!("sigma must be positive, got {sigma}"));
    }
    let r = (k / 2) as isize;
    let mut w: Vec<f64> = (-r..=r)
        .flat_map(|p| (-r..=r).map(move |q| (-((p * p + q * q) as f64) / (2.0 * sigma * sigma)).exp()))
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    Ok(w)
}

pub fn box_kernel(k: usize) -> Result<Vec<f64>> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::EvenKernel(k));
    }
    Ok(vec![1.0 / (k * k) as f64; k * k])
}

/// Applies one fixed kernel to every channel and location.
pub fn blur_fixed<T: Scalar>(x: &Tensor<T>, kernel: &[f64]) -> Result<Tensor<T>> {
    let s = x.shape();
    let field = FilterField::constant(kernel, s.n, 1, s.h, s.w)?;
    apply_grouped_adaptive(x, &field)
}

/// Smoothing strategy preceding subsampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BlurKind {
    None,
    Gaussian { sigma: f64 },
    Box,
    /// One predicted filter per image (spatially pooled logits).
    ImageAdaptive,
    /// One predicted filter per location, shared by all channels.
    SpatialAdaptive,
    /// One predicted filter per location and channel group.
    SpatialChannelAdaptive,
}

pub const DEFAULT_SIGMA: f64 = 1.0;

impl BlurKind {
    pub fn is_adaptive(&self) -> bool {
        matches!(self, Self::ImageAdaptive | Self::SpatialAdaptive | Self::SpatialChannelAdaptive)
    }

    /// Short name used on the command line and in reports.
    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Gaussian { .. } => "gaussian",
            Self::Box => "box",
            Self::ImageAdaptive => "image",
            Self::SpatialAdaptive => "spatial",
            Self::SpatialChannelAdaptive => "grouped",
        }
    }
}

impl fmt::Display for BlurKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BlurKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => Self::None,
            "gaussian" => Self::Gaussian { sigma: DEFAULT_SIGMA },
            "box" => Self::Box,
            "image" | "image_adaptive" => Self::ImageAdaptive,
            "spatial" | "spatial_adaptive" => Self::SpatialAdaptive,
            "grouped" | "spatial_channel_adaptive" => Self::SpatialChannelAdaptive,
            other => return arg_err("BlurKind", format!("unknown blur kind {other:?}")),
        })
    }
}

/// A blur kind together with its filter size and, for adaptive kinds, the
/// predictor that produces its filters.
#[derive(Clone, Debug, PartialEq)]
pub struct BlurProvider<T> {
    pub kind: BlurKind,
    pub k: usize,
    pub predictor: Option<PredictorParams<T>>,
}

impl<T: Scalar> BlurProvider<T> {
    pub fn none() -> Self {
        Self {
            kind: BlurKind::None,
            k: 1,
            predictor: None,
        }
    }

    pub fn gaussian(k: usize, sigma: f64) -> Result<Self> {
        gaussian_kernel(k, sigma)?;
        Ok(Self {
            kind: BlurKind::Gaussian { sigma },
            k,
            predictor: None,
        })
    }

    pub fn boxed(k: usize) -> Result<Self> {
        box_kernel(k)?;
        Ok(Self {
            kind: BlurKind::Box,
            k,
            predictor: None,
        })
    }

    /// Builds an adaptive provider around `predictor`. Image- and
    /// spatial-adaptive kinds require a single-group predictor.
    pub fn adaptive(kind: BlurKind, predictor: PredictorParams<T>) -> Result<Self> {
        if !kind.is_adaptive() {
            return arg_err("BlurProvider::adaptive", format!("{kind} is not adaptive"));
        }
        predictor.check()?;
        if kind != BlurKind::SpatialChannelAdaptive && predictor.cfg.groups != 1 {
            return arg_err(
                "BlurProvider::adaptive",
                format!("{kind} predicts one filter for all channels, got {} groups", predictor.cfg.groups),
            );
        }
        Ok(Self {
            kind,
            k: predictor.cfg.k,
            predictor: Some(predictor),
        })
    }

    pub fn groups(&self) -> usize {
        self.predictor.as_ref().map_or(1, |p| p.cfg.groups)
    }

    fn predictor(&self) -> Result<&PredictorParams<T>> {
        self.predictor.as_ref().ok_or(Error::InvalidArgument {
            op: "BlurProvider",
            detail: format!("{} provider has no predictor", self.kind),
        })
    }

    /// The filter field this provider applies to `x` (`None` for kind none).
    pub fn field(&self, x: &Tensor<T>) -> Result<Option<FilterField<T>>> {
        let s = x.shape();
        Ok(match self.kind {
            BlurKind::None => None,
            BlurKind::Gaussian { sigma } => Some(FilterField::constant(&gaussian_kernel(self.k, sigma)?, s.n, 1, s.h, s.w)?),
            BlurKind::Box => Some(FilterField::constant(&box_kernel(self.k)?, s.n, 1, s.h, s.w)?),
            BlurKind::ImageAdaptive => {
                let p = self.predictor()?;
                let logits = global_avg_pool(&filter_logits(x, p)?);
                let filt = softmax_over_axis(&logits, p.cfg.taps())?;
                Some(FilterField::new(broadcast_spatial(&filt, s.h, s.w)?, 1, p.cfg.k)?)
            }
            BlurKind::SpatialAdaptive | BlurKind::SpatialChannelAdaptive => Some(predict_filters(x, self.predictor()?)?),
        })
    }

    /// Blurs `x` without changing its shape.
    pub fn blur(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self.field(x)? {
            None => Ok(x.clone()),
            Some(f) => apply_grouped_adaptive(x, &f),
        }
    }
}

/// Blur followed by strided subsampling.
pub fn blur_then_downsample<T: Scalar>(x: &Tensor<T>, provider: &BlurProvider<T>, stride: usize) -> Result<Tensor<T>> {
    if stride < 2 {
        return arg_err("blur_then_downsample", format!("stride must be at least 2, got {stride}"));
    }
    strided_subsample(&provider.blur(x)?, stride)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::PredictorConfig;

    #[test]
    fn identity_field_is_exact() {
        let x = Tensor::<f32>::from_fn([1, 3, 4, 5], |_, c, h, w| (c * 7 + h * 3 + w) as f32 * 0.25 - 2.0);
        let f = FilterField::identity(1, 3, 3, 4, 5).unwrap();
        assert_eq!(apply_grouped_adaptive(&x, &f).unwrap(), x);
    }

    #[test]
    fn gaussian_kernel_normalized_and_symmetric() {
        let g = gaussian_kernel(3, 1.0).unwrap();
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(g[0], g[8]);
        assert!(g[4] > g[1] && g[1] > g[0]);
        assert!(gaussian_kernel(4, 1.0).is_err());
        assert!(gaussian_kernel(3, 0.0).is_err());
    }

    #[test]
    fn kind_round_trips_through_names() {
        for s in ["none", "gaussian", "box", "image", "spatial", "grouped"] {
            assert_eq!(s.parse::<BlurKind>().unwrap().name(), s);
        }
        assert!("median".parse::<BlurKind>().is_err());
    }

    #[test]
    fn spatial_provider_needs_single_group() {
        let p = PredictorParams::<f32>::zeros(PredictorConfig::new(4, 3, 2).unwrap()).unwrap();
        assert!(BlurProvider::adaptive(BlurKind::SpatialAdaptive, p.clone()).is_err());
        assert!(BlurProvider::adaptive(BlurKind::SpatialChannelAdaptive, p).is_ok());
    }

    #[test]
    fn field_must_cover_input() {
        let x = Tensor::<f32>::zeros([1, 2, 4, 4]);
        let f = FilterField::uniform(1, 1, 3, 4, 3).unwrap();
        assert!(apply_grouped_adaptive(&x, &f).is_err());
        let f = FilterField::uniform(1, 3, 3, 4, 4).unwrap();
        assert!(matches!(apply_grouped_adaptive(&x, &f), Err(Error::GroupMismatch { .. })));
        let f = FilterField::uniform(1, 2, 3, 4, 4).unwrap();
        assert!(apply_spatial_adaptive(&x, &f).is_err());
    }

    #[test]
    fn downsample_requires_stride_two() {
        let x = Tensor::<f32>::zeros([1, 1, 4, 4]);
        assert!(blur_then_downsample(&x, &BlurProvider::none(), 1).is_err());
        assert_eq!(
            blur_then_downsample(&x, &BlurProvider::none(), 2).unwrap().shape(),
            Shape4::new(1, 1, 2, 2)
        );
    }
}
