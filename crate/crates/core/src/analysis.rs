//! Interpretability statistics for predicted filters and grouped features.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, shape_err, Error, Result};
use crate::predictor::FilterField;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Largest population variance of `k^2` non-negative weights summing to 1,
/// reached by the identity filter.
pub fn max_filter_variance(k: usize) -> f64 {
    let kk = (k * k) as f64;
    (kk - 1.0) / (kk * kk)
}

/// Per-location variance of the filter weights, `(n, g, h, w)`.
///
/// Low variance means a flat (strongly blurring) filter; the average filter
/// has variance 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceMap {
    pub n: usize,
    pub groups: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub values: Vec<f64>,
}

impl VarianceMap {
    pub fn get(&self, n: usize, g: usize, i: usize, j: usize) -> f64 {
        self.values[((n * self.groups + g) * self.h + i) * self.w + j]
    }

    /// The `h x w` grid of one sample and group.
    pub fn grid(&self, n: usize, g: usize) -> &[f64] {
        let p = self.h * self.w;
        let s = (n * self.groups + g) * p;
        &self.values[s..s + p]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }

    /// Min-max normalized 8-bit rendering of one grid (all zeros when flat).
    pub fn to_gray(&self, n: usize, g: usize) -> Vec<u8> {
        let grid = self.grid(n, g);
        let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        grid.iter()
            .map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 })
            .collect()
    }
}

/// Population variance of the `k^2` weights at every `(n, g, i, j)`.
pub fn filter_variance<T: Scalar>(field: &FilterField<T>) -> VarianceMap {
    let [n, g, taps, h, w] = field.dims();
    let mut values = Vec::with_capacity(n * g * h * w);
    let inv = 1.0 / taps as f64;
    for b in 0..n {
        for gi in 0..g {
            for i in 0..h {
                for j in 0..w {
                    let mut s = 0.0;
                    let mut ss = 0.0;
                    for t in 0..taps {
                        let v = field.weight(b, gi, t, i, j).acc();
                        s += v;
                        ss += v * v;
                    }
                    let mean = s * inv;
                    values.push((ss * inv - mean * mean).max(0.0));
                }
            }
        }
    }
    VarianceMap {
        n,
        groups: g,
        h,
        w,
        k: field.k(),
        values,
    }
}

/// Mean correlation between channel feature maps, blocked by channel group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSimilarityReport {
    pub groups: usize,
    /// Row-major `g x g`.
    pub matrix: Vec<f64>,
}

impl GroupSimilarityReport {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.matrix[a * self.groups + b]
    }

    /// Mean of the diagonal minus mean of the off-diagonal entries (0 when g = 1).
    pub fn contrast(&self) -> f64 {
        let g = self.groups;
        if g < 2 {
            return 0.0;
        }
        let diag: f64 = (0..g).map(|i| self.get(i, i)).sum::<f64>() / g as f64;
        let off: f64 = (0..g)
            .flat_map(|i| (0..g).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .sum::<f64>()
            / (g * (g - 1)) as f64;
        diag - off
    }
}

/// Pearson correlation of two equally long series; 0 if either is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Pearson correlation between flattened `(n, h, w)` channel maps, averaged
/// over distinct channel pairs within each group block.
///
/// A diagonal block with a single channel has no distinct pair and is
/// reported as 1.
pub fn group_similarity<T: Scalar>(features: &Tensor<T>, groups: usize) -> Result<GroupSimilarityReport> {
    let s = features.shape();
    if groups == 0 || s.c % groups != 0 {
        return Err(Error::GroupMismatch { groups, channels: s.c });
    }
    if s.numel() == 0 {
        return Err(Error::Empty("group_similarity"));
    }
    let per = s.c / groups;
    let chans: Vec<Vec<f64>> = (0..s.c)
        .map(|c| (0..s.n).flat_map(|n| features.plane(n, c)).map(|v| v.acc()).collect())
        .collect();
    let mut corr = vec![0.0; s.c * s.c];
    for i in 0..s.c {
        for j in i..s.c {
            let r = if i == j { 1.0 } else { pearson(&chans[i], &chans[j]) };
            corr[i * s.c + j] = r;
            corr[j * s.c + i] = r;
        }
    }
    let mut matrix = vec![0.0; groups * groups];
    for ga in 0..groups {
        for gb in ga..groups {
            let mut sum = 0.0;
            let mut cnt = 0usize;
            for i in ga * per..(ga + 1) * per {
                for j in gb * per..(gb + 1) * per {
                    if i != j {
                        sum += corr[i * s.c + j];
                        cnt += 1;
                    }
                }
            }
            let v = if cnt == 0 { 1.0 } else { sum / cnt as f64 };
            matrix[ga * groups + gb] = v;
            matrix[gb * groups + ga] = v;
        }
    }
    Ok(GroupSimilarityReport { groups, matrix })
}

/// Mean filter variance at high- versus low-gradient locations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientVarianceStat {
    pub high_gradient_mean_variance: f64,
    pub low_gradient_mean_variance: f64,
    pub locations: usize,
}

/// Splits locations at the median gradient magnitude of `signal` (summed over
/// channels, central differences with clamped borders) and averages the
/// variance map over groups within each half.
pub fn variance_by_gradient<T: Scalar>(signal: &Tensor<T>, vmap: &VarianceMap) -> Result<GradientVarianceStat> {
    let s = signal.shape();
    if s.n != vmap.n || s.h != vmap.h || s.w != vmap.w {
        return shape_err(
            "variance_by_gradient",
            format!("signal {} vs variance map {}x{}x{}", s, vmap.n, vmap.h, vmap.w),
        );
    }
    if s.h * s.w < 2 {
        return arg_err("variance_by_gradient", "need at least two locations");
    }
    let mut entries = Vec::with_capacity(s.n * s.h * s.w);
    for n in 0..s.n {
        for i in 0..s.h {
            for j in 0..s.w {
                let mut mag = 0.0;
                for c in 0..s.c {
                    let at = |y: usize, x: usize| signal.at(n, c, y, x).acc();
                    let gy = at((i + 1).min(s.h - 1), j) - at(i.saturating_sub(1), j);
                    let gx = at(i, (j + 1).min(s.w - 1)) - at(i, j.saturating_sub(1));
                    mag += (gx * gx + gy * gy).sqrt();
                }
                let v: f64 = (0..vmap.groups).map(|g| vmap.get(n, g, i, j)).sum::<f64>() / vmap.groups as f64;
                entries.push((mag, v));
            }
        }
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    let half = entries.len() / 2;
    let mean = |xs: &[(f64, f64)]| xs.iter().map(|e| e.1).sum::<f64>() / xs.len().max(1) as f64;
    Ok(GradientVarianceStat {
        low_gradient_mean_variance: mean(&entries[..half]),
        high_gradient_mean_variance: mean(&entries[half..]),
        locations: entries.len(),
    })
}
