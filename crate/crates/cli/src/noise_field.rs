//! Content-aware Gaussian fields without a learned predictor.
//!
//! Impulse noise is what a 3x3 median removes, while straight edges survive
//! it. The local density of the median residual therefore picks a wide
//! Gaussian in noisy regions and a narrow one along clean edges.

use adablur_core::adaptive::{blur_fixed, box_kernel, gaussian_kernel};
use adablur_core::tensor::reflect_index;
use adablur_core::{BlurKind, FilterField32, Result, Tensor32};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseAware {
    pub k: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Residual density (fraction of the full intensity range) that selects
    /// `sigma_max`.
    pub density_full: f64,
}

impl NoiseAware {
    pub fn new(k: usize, sigma_max: f64) -> Self {
        Self {
            k,
            sigma_min: 0.3,
            sigma_max,
            density_full: 0.08,
        }
    }

    /// Per-location sigma, `(n, groups, h, w)` flattened. Channel residuals
    /// are averaged within each group; `ImageAdaptive` averages over the
    /// whole image.
    pub fn sigmas(&self, x: &Tensor32, kind: BlurKind, groups: usize, maxval: f64) -> Result<Tensor32> {
        let s = x.shape();
        let resid = Tensor32::from_fn(s, |n, c, i, j| ((x.at(n, c, i, j) - median3(x, n, c, i, j)).abs() as f64 / maxval) as f32);
        let density = blur_fixed(&resid, &box_kernel(5)?)?;
        let per = s.c / groups;
        let mut out = Tensor32::from_fn([s.n, groups, s.h, s.w], |n, g, i, j| {
            let d: f64 = (g * per..(g + 1) * per).map(|c| density.at(n, c, i, j) as f64).sum::<f64>() / per as f64;
            let t = (d / self.density_full).clamp(0.0, 1.0);
            (self.sigma_min + t * (self.sigma_max - self.sigma_min)) as f32
        });
        if kind == BlurKind::ImageAdaptive {
            for n in 0..s.n {
                let plane = s.plane() * groups;
                let chunk = &mut out.data_mut()[n * plane..(n + 1) * plane];
                let mean = chunk.iter().map(|&v| v as f64).sum::<f64>() / plane as f64;
                chunk.iter_mut().for_each(|v| *v = mean as f32);
            }
        }
        Ok(out)
    }

    pub fn field(&self, x: &Tensor32, kind: BlurKind, groups: usize, maxval: f64) -> Result<FilterField32> {
        let sig = self.sigmas(x, kind, groups, maxval)?;
        let s = sig.shape();
        let taps = self.k * self.k;
        let mut weights = Tensor32::zeros([s.n, s.c * taps, s.h, s.w]);
        for n in 0..s.n {
            for g in 0..s.c {
                for i in 0..s.h {
                    for j in 0..s.w {
                        let kern = gaussian_kernel(self.k, sig.at(n, g, i, j) as f64)?;
                        for (t, w) in kern.iter().enumerate() {
                            weights.set(n, g * taps + t, i, j, *w as f32);
                        }
                    }
                }
            }
        }
        FilterField32::new(weights, s.c, self.k)
    }
}

fn median3(x: &Tensor32, n: usize, c: usize, i: usize, j: usize) -> f32 {
    let s = x.shape();
    let mut v = [0f32; 9];
    for (t, slot) in v.iter_mut().enumerate() {
        let y = reflect_index(i as isize + t as isize / 3 - 1, s.h);
        let xx = reflect_index(j as isize + t as isize % 3 - 1, s.w);
        *slot = x.at(n, c, y, xx);
    }
    v.sort_by(f32::total_cmp);
    v[4]
}
