//! Synthetic shifted-pattern classification.
//!
//! Each image is a smooth low-frequency background with one textured disk
//! whose pattern is the class label, so high- and low-frequency regions
//! coexist in every image. Shifted views are exact translations with
//! mirrored borders.

use std::fmt;
use std::str::FromStr;

use adablur_core::io::KvConfig;
use adablur_core::tensor::reflect_index;
use adablur_core::{Error, Result, Tensor32};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pattern {
    /// Horizontal stripes, `period` rows per dark/light cycle.
    HorizontalBars { period: usize },
    VerticalBars { period: usize },
    /// Checkerboard with square cells of side `cell`.
    Checkerboard { cell: usize },
    /// A smooth bump without texture.
    Blob,
}

impl Pattern {
    pub fn name(&self) -> String {
        match self {
            Pattern::HorizontalBars { period } => format!("hbars{period}"),
            Pattern::VerticalBars { period } => format!("vbars{period}"),
            Pattern::Checkerboard { cell } => format!("checker{cell}"),
            Pattern::Blob => "blob".into(),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let num = |p: &str| -> Result<usize> {
            s[p.len()..].parse().map_err(|_| Error::InvalidArgument {
                op: "Pattern",
                detail: format!("bad size in {s:?}"),
            })
        };
        match s {
            "blob" => Ok(Pattern::Blob),
            _ if s.starts_with("hbars") => Ok(Pattern::HorizontalBars { period: num("hbars")? }),
            _ if s.starts_with("vbars") => Ok(Pattern::VerticalBars { period: num("vbars")? }),
            _ if s.starts_with("checker") => Ok(Pattern::Checkerboard { cell: num("checker")? }),
            _ => Err(Error::InvalidArgument {
                op: "Pattern",
                detail: format!("unknown pattern {s:?}"),
            }),
        }
    }
}

/// Which half of the data a sample belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTask {
    pub seed: u64,
    /// Square canvas side.
    pub size: usize,
    /// Class `i` is `vocabulary[i]`.
    pub vocabulary: Vec<Pattern>,
    /// Shifts for consistency evaluation are drawn from `-shift_range..=shift_range`.
    pub shift_range: usize,
    pub train_count: usize,
    pub test_count: usize,
    /// Texture amplitude range.
    pub amplitude: (f32, f32),
    /// Half-width of the uniform pixel noise.
    pub noise: f32,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        Self {
            seed: 0,
            size: 32,
            vocabulary: vec![
                Pattern::HorizontalBars { period: 4 },
                Pattern::VerticalBars { period: 4 },
                Pattern::Checkerboard { cell: 1 },
                Pattern::Blob,
            ],
            shift_range: 4,
            train_count: 512,
            test_count: 256,
            amplitude: (0.1, 0.3),
            noise: 0.05,
        }
    }
}

/// A batch of images `(n, 1, size, size)` with their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Tensor32,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor32, Vec<usize>)> {
        Ok((self.images.select_batch(indices)?, indices.iter().map(|&i| self.labels[i]).collect()))
    }
}

/// Two translations of test image `index`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShiftPair {
    pub index: usize,
    pub a: (isize, isize),
    pub b: (isize, isize),
}

impl SyntheticTask {
    pub fn classes(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::InvalidArgument { op: "SyntheticTask", detail });
        if self.size < 8 {
            return bad(format!("canvas {} is too small", self.size));
        }
        if self.vocabulary.len() < 2 {
            return bad("need at least two classes".into());
        }
        if self.train_count == 0 || self.test_count == 0 {
            return bad("empty split".into());
        }
        for p in &self.vocabulary {
            match *p {
                Pattern::HorizontalBars { period } | Pattern::VerticalBars { period } if period < 2 => {
                    return bad(format!("{p}: period must be at least 2"))
                }
                Pattern::Checkerboard { cell: 0 } => return bad("checkerboard cell must be positive".into()),
                _ => {}
            }
        }
        if !(self.amplitude.0 > 0.0 && self.amplitude.0 <= self.amplitude.1) {
            return bad(format!("amplitude range {:?}", self.amplitude));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        kv.set("task_seed", self.seed);
        kv.set("size", self.size);
        kv.set(
            "vocabulary",
            self.vocabulary.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","),
        );
        kv.set("shift_range", self.shift_range);
        kv.set("train_count", self.train_count);
        kv.set("test_count", self.test_count);
        kv.set("amplitude", format!("{},{}", self.amplitude.0, self.amplitude.1));
        kv.set("noise", self.noise);
        kv
    }

    /// Missing keys keep their defaults.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let amplitude = match kv.parse_list::<f32>("amplitude")? {
            None => d.amplitude,
            Some(v) if v.len() == 2 => (v[0], v[1]),
            Some(v) => {
                return Err(Error::Format(format!("amplitude needs two values, got {}", v.len())));
            }
        };
        let task = Self {
            seed: kv.parse_opt("task_seed")?.unwrap_or(d.seed),
            size: kv.parse_opt("size")?.unwrap_or(d.size),
            vocabulary: kv.parse_list("vocabulary")?.unwrap_or(d.vocabulary),
            shift_range: kv.parse_opt("shift_range")?.unwrap_or(d.shift_range),
            train_count: kv.parse_opt("train_count")?.unwrap_or(d.train_count),
            test_count: kv.parse_opt("test_count")?.unwrap_or(d.test_count),
            amplitude,
            noise: kv.parse_opt("noise")?.unwrap_or(d.noise),
        };
        task.validate()?;
        Ok(task)
    }

    fn rng(&self, split: Split, index: usize) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        let split_bit = match split {
            Split::Train => 0u64,
            Split::Test => 1u64 << 40,
        };
        r.set_stream(split_bit | index as u64);
        r
    }

    /// Label of sample `index`; classes cycle so every split is balanced.
    pub fn label(&self, index: usize) -> usize {
        index % self.classes()
    }

    /// Renders sample `index` of `split` as a `size x size` image in `[0, 1]`.
    pub fn render(&self, split: Split, index: usize) -> Vec<f32> {
        let s = self.size;
        let label = self.label(index);
        let mut r = self.rng(split, index);
        let tau = std::f32::consts::TAU;

        let base = r.gen_range(0.35..0.65f32);
        let bg_amp = r.gen_range(0.0..0.15f32);
        let (fy, fx) = (r.gen_range(-1.0..1.0f32), r.gen_range(-1.0..1.0f32));
        let bg_phase = r.gen_range(0.0..tau);

        let radius = r.gen_range(s as f32 * 0.2..s as f32 * 0.32);
        let margin = radius * 0.6;
        let cy = r.gen_range(margin..s as f32 - margin);
        let cx = r.gen_range(margin..s as f32 - margin);
        let amp = r.gen_range(self.amplitude.0..=self.amplitude.1);
        let sign = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
        let pattern = self.vocabulary[label];
        let (period, phase, phase_x) = match pattern {
            Pattern::HorizontalBars { period } | Pattern::VerticalBars { period } => (period, r.gen_range(0..period), 0),
            Pattern::Checkerboard { cell } => (cell, r.gen_range(0..2 * cell), r.gen_range(0..2 * cell)),
            Pattern::Blob => (0, 0, 0),
        };
        let blob_sigma = radius * r.gen_range(0.35..0.6f32);

        let mut img = Vec::with_capacity(s * s);
        for y in 0..s {
            for x in 0..s {
                let (yf, xf) = (y as f32, x as f32);
                let mut v = base + bg_amp * (tau * (fy * yf + fx * xf) / s as f32 + bg_phase).cos();
                let d2 = (yf - cy).powi(2) + (xf - cx).powi(2);
                let inside = d2 <= radius * radius;
                let texture = match pattern {
                    Pattern::HorizontalBars { .. } if inside => {
                        if (y + phase) % period < period / 2 { 1.0 } else { -1.0 }
                    }
                    Pattern::VerticalBars { .. } if inside => {
                        if (x + phase) % period < period / 2 { 1.0 } else { -1.0 }
                    }
                    Pattern::Checkerboard { cell } if inside => {
                        if ((y + phase) / cell + (x + phase_x) / cell) % 2 == 0 { 1.0 } else { -1.0 }
                    }
                    Pattern::Blob => 2.0 * sign * (-d2 / (2.0 * blob_sigma * blob_sigma)).exp(),
                    _ => 0.0,
                };
                v += amp * texture;
                if self.noise > 0.0 {
                    v += r.gen_range(-self.noise..=self.noise);
                }
                img.push(v.clamp(0.0, 1.0));
            }
        }
        img
    }

    /// Sample `index` as a centered `(1, 1, size, size)` tensor.
    pub fn sample(&self, split: Split, index: usize) -> (Tensor32, usize) {
        let s = self.size;
        let img: Vec<f32> = self.render(split, index).into_iter().map(|v| v - 0.5).collect();
        (Tensor32::from_vec([1, 1, s, s], img).expect("canvas"), self.label(index))
    }

    pub fn dataset(&self, split: Split) -> Result<Dataset> {
        self.validate()?;
        let count = match split {
            Split::Train => self.train_count,
            Split::Test => self.test_count,
        };
        let samples: Vec<(Tensor32, usize)> = (0..count).map(|i| self.sample(split, i)).collect();
        let images = Tensor32::stack_batch(&samples.iter().map(|(t, _)| t.clone()).collect::<Vec<_>>())?;
        Ok(Dataset {
            images,
            labels: samples.into_iter().map(|(_, l)| l).collect(),
        })
    }

    /// `count` random shift pairs over the test split with offsets in
    /// `-range..=range`, drawn from a stream separate from the images.
    pub fn shift_pairs(&self, count: usize, range: usize, seed: u64) -> Vec<ShiftPair> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(1 << 50);
        let range = range as isize;
        let off = |r: &mut ChaCha8Rng| (r.gen_range(-range..=range), r.gen_range(-range..=range));
        (0..count)
            .map(|i| ShiftPair {
                index: i % self.test_count,
                a: off(&mut r),
                b: off(&mut r),
            })
            .collect()
    }

    /// Pairs of test images of class `label`: the unshifted image against a
    /// one-pixel shift in one of the four directions.
    pub fn unit_shift_pairs(&self, label: usize) -> Vec<ShiftPair> {
        let dirs = [(0, 1), (1, 0), (0, -1), (-1, 0)];
        (0..self.test_count)
            .filter(|&i| self.label(i) == label)
            .enumerate()
            .map(|(j, index)| ShiftPair {
                index,
                a: (0, 0),
                b: dirs[j % 4],
            })
            .collect()
    }
}

/// Translates every plane of `x` by `(dy, dx)`, filling uncovered pixels by
/// mirroring: `y[i, j] = x[mirror(i - dy), mirror(j - dx)]`.
pub fn shift_image(x: &Tensor32, dy: isize, dx: isize) -> Tensor32 {
    let s = x.shape();
    Tensor32::from_fn(s, |n, c, i, j| {
        x.at(n, c, reflect_index(i as isize - dy, s.h), reflect_index(j as isize - dx, s.w))
    })
}
