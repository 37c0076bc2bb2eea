//! Synthetic texture segmentation.
//!
//! Scenes hold textured disks on a smooth background. A crop is segmented
//! without training: local texture energy is blurred and downsampled by the
//! provider under test, thresholded, and upsampled by pixel repetition.
//! Segmenting two overlapping crops of one scene and comparing the overlap
//! gives semantic-segmentation consistency.

use adablur_core::metrics::{make_crop_pairs, massc, LabelMap, MetricValue};
use adablur_core::{blur_then_downsample, BlurProvider, Error, Result, Tensor32};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationTask {
    pub seed: u64,
    /// Scene side.
    pub size: usize,
    /// Crop side; must be even.
    pub crop: usize,
    pub scenes: usize,
    pub pairs_per_scene: usize,
    pub disks: usize,
    pub amplitude: f32,
    pub noise: f32,
    /// Energy above which a downsampled cell counts as texture.
    pub threshold: f32,
}

impl Default for SegmentationTask {
    fn default() -> Self {
        Self {
            seed: 0,
            size: 48,
            crop: 32,
            scenes: 16,
            pairs_per_scene: 4,
            disks: 3,
            amplitude: 0.2,
            noise: 0.03,
            threshold: 0.005,
        }
    }
}

/// One rendered scene: `(1, 1, size, size)` image and per-pixel truth
/// (1 inside a textured disk).
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub image: Tensor32,
    pub truth: LabelMap,
}

impl SegmentationTask {
    pub fn validate(&self) -> Result<()> {
        if self.crop == 0 || self.crop % 2 != 0 || self.crop > self.size {
            return Err(Error::InvalidArgument {
                op: "SegmentationTask",
                detail: format!("crop {} must be even and fit in {}", self.crop, self.size),
            });
        }
        if self.scenes == 0 || self.pairs_per_scene == 0 {
            return Err(Error::InvalidArgument {
                op: "SegmentationTask",
                detail: "need at least one scene and one pair".into(),
            });
        }
        Ok(())
    }

    pub fn scene(&self, index: usize) -> Scene {
        let s = self.size;
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(3 << 40 | index as u64);
        let base = r.gen_range(0.35..0.65f32);
        let tilt = (r.gen_range(-0.1..0.1f32), r.gen_range(-0.1..0.1f32));
        let disks: Vec<(f32, f32, f32, usize, bool)> = (0..self.disks)
            .map(|_| {
                let rad = r.gen_range(s as f32 * 0.1..s as f32 * 0.22);
                (
                    r.gen_range(0.0..s as f32),
                    r.gen_range(0.0..s as f32),
                    rad,
                    r.gen_range(2..=4usize),
                    r.gen_bool(0.5),
                )
            })
            .collect();
        let mut img = Vec::with_capacity(s * s);
        let mut labels = Vec::with_capacity(s * s);
        for y in 0..s {
            for x in 0..s {
                let (yf, xf) = (y as f32, x as f32);
                let mut v = base + tilt.0 * yf / s as f32 + tilt.1 * xf / s as f32;
                let mut label = 0;
                for &(cy, cx, rad, period, horizontal) in &disks {
                    if (yf - cy).powi(2) + (xf - cx).powi(2) <= rad * rad {
                        let t = if horizontal { y } else { x };
                        v += if t % period < period.div_ceil(2) { self.amplitude } else { -self.amplitude };
                        label = 1;
                        break;
                    }
                }
                v += r.gen_range(-self.noise..=self.noise);
                img.push(v.clamp(0.0, 1.0));
                labels.push(label);
            }
        }
        Scene {
            image: Tensor32::from_vec([1, 1, s, s], img).expect("scene canvas"),
            truth: LabelMap::new(s, s, labels).expect("scene labels"),
        }
    }
}

/// Squared high-pass response `(x - box3(x))^2` with mirrored borders.
pub fn texture_energy(x: &Tensor32) -> Result<Tensor32> {
    let smooth = adablur_core::adaptive::blur_fixed(x, &adablur_core::adaptive::box_kernel(3)?)?;
    let mut e = x.clone();
    for (v, m) in e.data_mut().iter_mut().zip(smooth.data()) {
        *v = (*v - m).powi(2);
    }
    Ok(e)
}

/// Texture mask of a single-channel crop: energy, blur plus stride-2
/// subsampling, threshold, then 2x pixel repetition back to full size.
pub fn segment(crop: &Tensor32, provider: &BlurProvider<f32>, threshold: f32) -> Result<LabelMap> {
    let s = crop.shape();
    if s.n != 1 || s.c != 1 || s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(Error::InvalidArgument {
            op: "segment",
            detail: format!("expected one even-sized channel, got {s}"),
        });
    }
    let low = blur_then_downsample(&texture_energy(crop)?, provider, 2)?;
    let lw = low.shape().w;
    Ok(LabelMap::from_fn(s.h, s.w, |i, j| (low.data()[(i / 2) * lw + j / 2] > threshold) as u32))
}

/// Semantic-segmentation consistency of [`segment`] with `provider` over the
/// task's scenes and crop pairs.
pub fn segmentation_consistency(task: &SegmentationTask, provider: &BlurProvider<f32>) -> Result<MetricValue> {
    task.validate()?;
    let mut per_scene = Vec::with_capacity(task.scenes);
    for i in 0..task.scenes {
        let scene = task.scene(i);
        let pairs = make_crop_pairs(task.size, task.size, task.crop, task.crop, task.pairs_per_scene, task.seed ^ ((i as u64) << 8))?;
        let mut maps = Vec::with_capacity(pairs.len());
        for p in &pairs {
            let la = segment(&crop(&scene.image, p.a.y, p.a.x, task.crop)?, provider, task.threshold)?;
            let lb = segment(&crop(&scene.image, p.b.y, p.b.x, task.crop)?, provider, task.threshold)?;
            maps.push((la.crop(p.overlap_a)?, lb.crop(p.overlap_b)?));
        }
        per_scene.push(maps);
    }
    massc(&per_scene)
}

fn crop(img: &Tensor32, y: usize, x: usize, side: usize) -> Result<Tensor32> {
    let w = img.shape().w;
    let data: Vec<f32> = (0..side).flat_map(|i| (0..side).map(move |j| (i, j))).map(|(i, j)| img.data()[(y + i) * w + x + j]).collect();
    Tensor32::from_vec([1, 1, side, side], data)
}

/// Pixel accuracy of [`segment`] on whole scenes against their truth.
pub fn segmentation_accuracy(task: &SegmentationTask, provider: &BlurProvider<f32>) -> Result<f64> {
    task.validate()?;
    let mut correct = 0usize;
    let mut total = 0usize;
    for i in 0..task.scenes {
        let scene = task.scene(i);
        let size = task.size - task.size % 2;
        let pred = segment(&crop(&scene.image, 0, 0, size)?, provider, task.threshold)?;
        let truth = scene.truth.crop(adablur_core::metrics::Rect::new(0, 0, size, size))?;
        correct += pred.labels().iter().zip(truth.labels()).filter(|(a, b)| a == b).count();
        total += size * size;
    }
    Ok(correct as f64 / total as f64)
}
