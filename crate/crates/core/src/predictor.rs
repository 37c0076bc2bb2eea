//! Prediction of per-location, per-group low-pass filter banks.
//!
//! A conv + batchnorm block maps the feature map to `g * k^2` logits per
//! pixel; a softmax over each block of `k^2` logits makes every filter
//! positive with unit sum.

use rand::Rng;

use crate::conv::{conv2d, ConvParams};
use crate::error::{arg_err, shape_err, Error, Result};
use crate::norm::BatchNorm;
use crate::ops::softmax_over_axis;
use crate::scalar::Scalar;
use crate::tensor::{PadMode, Shape4, Tensor};

/// Geometry of a filter predictor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PredictorConfig {
    pub in_channels: usize,
    /// Side of each predicted filter.
    pub k: usize,
    pub groups: usize,
    /// Side of the predictor's own convolution kernel.
    pub conv_kernel: usize,
    pub pad_mode: PadMode,
}

impl PredictorConfig {
    pub fn new(in_channels: usize, k: usize, groups: usize) -> Result<Self> {
        let cfg = Self {
            in_channels,
            k,
            groups,
            conv_kernel: 3,
            pad_mode: PadMode::Reflect,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k % 2 == 0 {
            return Err(Error::EvenKernel(self.k));
        }
        if self.conv_kernel == 0 || self.conv_kernel % 2 == 0 {
            return Err(Error::EvenKernel(self.conv_kernel));
        }
        if self.groups == 0 || self.in_channels % self.groups != 0 {
            return Err(Error::GroupMismatch {
                groups: self.groups,
                channels: self.in_channels,
            });
        }
        Ok(())
    }

    pub fn taps(&self) -> usize {
        self.k * self.k
    }

    /// Number of logit channels the predictor emits.
    pub fn out_channels(&self) -> usize {
        self.groups * self.taps()
    }
}

/// Group owning channel `c_idx` when `c` channels are split into `g`
/// consecutive blocks.
pub fn group_of_channel(c_idx: usize, c: usize, g: usize) -> Result<usize> {
    if g == 0 || c % g != 0 {
        return Err(Error::GroupMismatch { groups: g, channels: c });
    }
    if c_idx >= c {
        return arg_err("group_of_channel", format!("channel {c_idx} out of {c}"));
    }
    Ok(c_idx / (c / g))
}

/// Bank of `k x k` filters, one per `(sample, group, row, col)`.
///
/// Stored as a `(n, g * k^2, h, w)` tensor, i.e. the row-major layout of
/// `(n, g, k^2, h, w)`. Tap `t = (p + r) * k + (q + r)` weighs the input at
/// offset `(p, q)`, `r = k / 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterField<T> {
    weights: Tensor<T>,
    groups: usize,
    k: usize,
}

impl<T: Scalar> FilterField<T> {
    /// Wraps a weight tensor. Only the layout is checked; see [`Self::check_low_pass`].
    pub fn new(weights: Tensor<T>, groups: usize, k: usize) -> Result<Self> {
        if k == 0 || k % 2 == 0 {
            return Err(Error::EvenKernel(k));
        }
        if groups == 0 || weights.shape().c != groups * k * k {
            return shape_err(
                "FilterField",
                format!("{} channels for {} groups of {}x{} filters", weights.shape().c, groups, k, k),
            );
        }
        Ok(Self { weights, groups, k })
    }

    pub fn from_fn(
        n: usize,
        groups: usize,
        k: usize,
        h: usize,
        w: usize,
        mut f: impl FnMut(usize, usize, usize, usize, usize) -> T,
    ) -> Result<Self> {
        let taps = k * k;
        let t = Tensor::from_fn([n, groups * taps, h, w], |b, c, i, j| f(b, c / taps, c % taps, i, j));
        Self::new(t, groups, k)
    }

    /// Every filter is the `k x k` average.
    pub fn uniform(n: usize, groups: usize, k: usize, h: usize, w: usize) -> Result<Self> {
        let v = T::from_acc(1.0 / (k * k) as f64);
        Self::from_fn(n, groups, k, h, w, |_, _, _, _, _| v)
    }

    /// Every filter passes the center tap only.
    pub fn identity(n: usize, groups: usize, k: usize, h: usize, w: usize) -> Result<Self> {
        let center = (k * k) / 2;
        Self::from_fn(n, groups, k, h, w, |_, _, t, _, _| if t == center { T::one() } else { T::zero() })
    }

    /// The same `k x k` kernel (row-major) at every location and group.
    pub fn constant(kernel: &[f64], n: usize, groups: usize, h: usize, w: usize) -> Result<Self> {
        let k = (kernel.len() as f64).sqrt() as usize;
        if k * k != kernel.len() {
            return arg_err("FilterField::constant", format!("{} taps is not a square", kernel.len()));
        }
        Self::from_fn(n, groups, k, h, w, |_, _, t, _, _| T::from_acc(kernel[t]))
    }

    pub fn weights(&self) -> &Tensor<T> {
        &self.weights
    }

    pub fn into_weights(self) -> Tensor<T> {
        self.weights
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn taps(&self) -> usize {
        self.k * self.k
    }

    pub fn batch(&self) -> usize {
        self.weights.shape().n
    }

    pub fn height(&self) -> usize {
        self.weights.shape().h
    }

    pub fn width(&self) -> usize {
        self.weights.shape().w
    }

    /// `(n, g, k^2, h, w)`
    pub fn dims(&self) -> [usize; 5] {
        let s = self.weights.shape();
        [s.n, self.groups, self.taps(), s.h, s.w]
    }

    #[inline]
    pub fn weight(&self, n: usize, g: usize, tap: usize, i: usize, j: usize) -> T {
        self.weights.at(n, g * self.taps() + tap, i, j)
    }

    /// The `k^2` weights of one filter.
    pub fn filter(&self, n: usize, g: usize, i: usize, j: usize) -> Vec<T> {
        (0..self.taps()).map(|t| self.weight(n, g, t, i, j)).collect()
    }

    /// Worst deviation from the low-pass constraint: returns
    /// `(min weight, max |sum - 1|)` over all filters.
    pub fn low_pass_violation(&self) -> (f64, f64) {
        let [n, g, _, h, w] = self.dims();
        let mut min_w = f64::INFINITY;
        let mut worst = 0.0f64;
        for b in 0..n {
            for gi in 0..g {
                for i in 0..h {
                    for j in 0..w {
                        let f = self.filter(b, gi, i, j);
                        let s: f64 = f.iter().map(|v| v.acc()).sum();
                        worst = worst.max((s - 1.0).abs());
                        min_w = f.iter().map(|v| v.acc()).fold(min_w, f64::min);
                    }
                }
            }
        }
        (min_w, worst)
    }

    /// Fails unless every weight is positive and every filter sums to 1 within `tol`.
    pub fn check_low_pass(&self, tol: f64) -> Result<()> {
        let (min_w, worst) = self.low_pass_violation();
        if !(min_w > 0.0) || worst > tol {
            return arg_err(
                "FilterField::check_low_pass",
                format!("min weight {min_w:e}, max |sum - 1| {worst:e}"),
            );
        }
        Ok(())
    }
}

/// Learnable state of a filter predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorParams<T> {
    pub cfg: PredictorConfig,
    pub conv: ConvParams<T>,
    pub bn: BatchNorm<T>,
}

impl<T: Scalar> PredictorParams<T> {
    /// All-zero conv, identity batchnorm: predicts the average filter everywhere.
    pub fn zeros(cfg: PredictorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            conv: ConvParams::zeros(cfg.out_channels(), cfg.in_channels, cfg.conv_kernel, cfg.pad_mode)?,
            bn: BatchNorm::identity(cfg.out_channels()),
        })
    }

    /// Centered uniform fan-in init for the conv, zero bias.
    pub fn init<R: Rng + ?Sized>(cfg: PredictorConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            conv: ConvParams::init_uniform(cfg.out_channels(), cfg.in_channels, cfg.conv_kernel, cfg.pad_mode, rng)?,
            bn: BatchNorm::identity(cfg.out_channels()),
        })
    }

    pub fn check(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.conv.in_channels() != self.cfg.in_channels || self.conv.out_channels() != self.cfg.out_channels() {
            return shape_err(
                "PredictorParams",
                format!(
                    "conv {} -> {} but config expects {} -> {}",
                    self.conv.in_channels(),
                    self.conv.out_channels(),
                    self.cfg.in_channels,
                    self.cfg.out_channels()
                ),
            );
        }
        if self.conv.stride != 1 || self.conv.padding != self.conv.kernel() / 2 {
            return arg_err("PredictorParams", "predictor conv must be stride 1 with same padding");
        }
        if self.bn.channels() != self.cfg.out_channels() {
            return shape_err("PredictorParams", "batchnorm width differs from logit count");
        }
        Ok(())
    }
}

/// Filter logits before the softmax: conv followed by inference-mode batchnorm.
pub fn filter_logits<T: Scalar>(x: &Tensor<T>, params: &PredictorParams<T>) -> Result<Tensor<T>> {
    params.check()?;
    if x.shape().c != params.cfg.in_channels {
        return shape_err(
            "predict_filters",
            format!("input has {} channels, predictor expects {}", x.shape().c, params.cfg.in_channels),
        );
    }
    let y = conv2d(x, &params.conv)?;
    params.bn.forward_eval(&y)
}

/// Predicts one low-pass filter per `(sample, group, location)` (inference mode).
pub fn predict_filters<T: Scalar>(x: &Tensor<T>, params: &PredictorParams<T>) -> Result<FilterField<T>> {
    let logits = filter_logits(x, params)?;
    let taps = params.cfg.taps();
    FilterField::new(softmax_over_axis(&logits, taps)?, params.cfg.groups, params.cfg.k)
}

/// Shape of the field predicted for an input of shape `x`.
pub fn field_shape(x: Shape4, cfg: &PredictorConfig) -> Shape4 {
    Shape4::new(x.n, cfg.out_channels(), x.h, x.w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grouping_rule() {
        assert_eq!(group_of_channel(5, 8, 8).unwrap(), 5);
        for c in 0..8 {
            assert_eq!(group_of_channel(c, 8, 1).unwrap(), 0);
        }
        assert_eq!(group_of_channel(7, 12, 4).unwrap(), 2);
        assert!(matches!(group_of_channel(1, 10, 4), Err(Error::GroupMismatch { .. })));
        assert!(group_of_channel(12, 12, 4).is_err());
    }

    #[test]
    fn config_rejects_bad_groups_and_even_k() {
        assert!(matches!(PredictorConfig::new(6, 3, 4), Err(Error::GroupMismatch { .. })));
        assert!(matches!(PredictorConfig::new(8, 4, 2), Err(Error::EvenKernel(4))));
        assert!(PredictorConfig::new(8, 5, 2).is_ok());
    }

    #[test]
    fn zero_predictor_gives_average_filter() {
        let cfg = PredictorConfig::new(4, 3, 2).unwrap();
        let p = PredictorParams::<f32>::zeros(cfg).unwrap();
        let x = Tensor::from_fn([2, 4, 5, 6], |n, c, h, w| (n + c * h + w) as f32);
        let f = predict_filters(&x, &p).unwrap();
        assert_eq!(f.dims(), [2, 2, 9, 5, 6]);
        assert!(f.weights().data().iter().all(|&v| (v - 1.0 / 9.0).abs() < 1e-7));
    }

    #[test]
    fn center_bias_saturates_to_identity() {
        let cfg = PredictorConfig::new(2, 3, 1).unwrap();
        let mut p = PredictorParams::<f32>::zeros(cfg).unwrap();
        p.conv.bias.data_mut()[4] = 10.0;
        let x = Tensor::from_fn([1, 2, 4, 4], |_, c, h, w| (c + h * w) as f32 * 0.1);
        let f = predict_filters(&x, &p).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!(f.weight(0, 0, 4, i, j) > 0.999);
            }
        }
    }

    #[test]
    fn field_layout_checked() {
        assert!(FilterField::new(Tensor::<f32>::zeros([1, 10, 2, 2]), 1, 3).is_err());
        assert!(FilterField::new(Tensor::<f32>::zeros([1, 18, 2, 2]), 2, 3).is_ok());
        let f = FilterField::<f32>::identity(1, 1, 3, 2, 2).unwrap();
        assert!(f.check_low_pass(1e-6).is_err(), "zero taps are not positive");
        FilterField::<f32>::uniform(1, 1, 5, 2, 2).unwrap().check_low_pass(1e-6).unwrap();
    }
}
