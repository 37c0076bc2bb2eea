//! Dense rank-4 tensors in `(n, c, h, w)` row-major order.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, shape_err, Result};
use crate::scalar::Scalar;

/// Extents of a rank-4 tensor.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape4 {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub const fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    pub const fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Debug for Shape4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

impl fmt::Display for Shape4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl From<[usize; 4]> for Shape4 {
    fn from(d: [usize; 4]) -> Self {
        Self::new(d[0], d[1], d[2], d[3])
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape4,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: impl Into<Shape4>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: impl Into<Shape4>, value: T) -> Self {
        let shape = shape.into();
        Self {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn from_vec(shape: impl Into<Shape4>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        if data.len() != shape.numel() {
            return shape_err(
                "Tensor::from_vec",
                format!("{} elements for shape {}", data.len(), shape),
            );
        }
        Ok(Self { shape, data })
    }

    /// Builds a tensor from `f64` values (handy in tests and oracles).
    pub fn from_f64(shape: impl Into<Shape4>, data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&v| T::from_acc(v)).collect())
    }

    pub fn from_fn(shape: impl Into<Shape4>, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let shape = shape.into();
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Self { shape, data }
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn uniform<R: Rng + ?Sized>(shape: impl Into<Shape4>, lo: f64, hi: f64, rng: &mut R) -> Self {
        let shape = shape.into();
        let data = (0..shape.numel())
            .map(|_| T::from_acc(rng.gen_range(lo..hi)))
            .collect();
        Self { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.shape.index(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: T) {
        let i = self.shape.index(n, c, h, w);
        self.data[i] = v;
    }

    /// The `h x w` plane of sample `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &mut self.data[start..start + p]
    }

    /// All channels of sample `n`.
    pub fn sample(&self, n: usize) -> &[T] {
        let s = self.shape.c * self.shape.plane();
        &self.data[n * s..(n + 1) * s]
    }

    /// Same data viewed with a different shape of equal element count.
    pub fn reshape(self, shape: impl Into<Shape4>) -> Result<Self> {
        let shape = shape.into();
        if shape.numel() != self.shape.numel() {
            return shape_err("reshape", format!("{} -> {}", self.shape, shape));
        }
        Ok(Self {
            shape,
            data: self.data,
        })
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from_acc(v.acc())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return shape_err(op, format!("{} vs {}", self.shape, other.shape));
        }
        Ok(Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn mul_scalar(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn relu(&self) -> Self {
        self.map(|v| if v > T::zero() { v } else { T::zero() })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|v| v.acc()).sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    pub fn min(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.shape != other.shape {
            return shape_err("max_abs_diff", format!("{} vs {}", self.shape, other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.acc() - b.acc()).abs())
            .fold(0.0, f64::max))
    }

    /// Selects batch entries in the given order.
    pub fn select_batch(&self, indices: &[usize]) -> Result<Self> {
        let s = self.shape.c * self.shape.plane();
        let mut data = Vec::with_capacity(indices.len() * s);
        for &i in indices {
            if i >= self.shape.n {
                return arg_err("select_batch", format!("index {i} out of {}", self.shape.n));
            }
            data.extend_from_slice(self.sample(i));
        }
        Ok(Self {
            shape: Shape4::new(indices.len(), self.shape.c, self.shape.h, self.shape.w),
            data,
        })
    }

    /// Concatenates tensors along the batch axis.
    pub fn stack_batch(parts: &[Self]) -> Result<Self> {
        let first = match parts.first() {
            Some(p) => p.shape,
            None => return Err(crate::Error::Empty("stack_batch")),
        };
        let mut data = Vec::new();
        let mut n = 0;
        for p in parts {
            let s = p.shape;
            if (s.c, s.h, s.w) != (first.c, first.h, first.w) {
                return shape_err("stack_batch", format!("{} vs {}", s, first));
            }
            n += s.n;
            data.extend_from_slice(&p.data);
        }
        Ok(Self {
            shape: Shape4::new(n, first.c, first.h, first.w),
            data,
        })
    }
}

/// Border handling for padded windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PadMode {
    Zero,
    /// Mirror without repeating the edge sample (`-1 -> 1`).
    Reflect,
}

/// Maps a possibly out-of-range coordinate into `0..len` by mirroring.
///
/// Mirroring repeats with period `2 (len - 1)`, so any offset is valid; a
/// length-1 axis maps everything to 0.
#[inline]
pub fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m >= len as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Pads one `h x w` plane by `pad` on every side, widening to `f64`.
pub(crate) fn pad_plane<T: Scalar, U: Scalar>(src: &[T], h: usize, w: usize, pad: usize, mode: PadMode, dst: &mut Vec<U>) {
    let ph = h + 2 * pad;
    let pw = w + 2 * pad;
    dst.clear();
    dst.resize(ph * pw, U::zero());
    for y in 0..ph {
        let sy = y as isize - pad as isize;
        let row_in = sy >= 0 && (sy as usize) < h;
        if !row_in && mode == PadMode::Zero {
            continue;
        }
        let ry = if row_in { sy as usize } else { reflect_index(sy, h) };
        let src_row = &src[ry * w..(ry + 1) * w];
        let dst_row = &mut dst[y * pw..(y + 1) * pw];
        for (d, s) in dst_row[pad..pad + w].iter_mut().zip(src_row) {
            *d = U::from_acc(s.acc());
        }
        if mode == PadMode::Reflect {
            for x in 0..pad {
                dst_row[x] = U::from_acc(src_row[reflect_index(x as isize - pad as isize, w)].acc());
                dst_row[pad + w + x] = U::from_acc(src_row[reflect_index((w + x) as isize, w)].acc());
            }
        }
    }
}

/// Adjoint of [`pad_plane`]: folds a padded gradient back onto the source plane.
pub(crate) fn unpad_plane_add<U: Scalar>(padded: &[U], h: usize, w: usize, pad: usize, mode: PadMode, dst: &mut [U]) {
    let pw = w + 2 * pad;
    let ph = h + 2 * pad;
    for y in 0..ph {
        let sy = y as isize - pad as isize;
        let row_in = sy >= 0 && (sy as usize) < h;
        if !row_in && mode == PadMode::Zero {
            continue;
        }
        let ry = if row_in { sy as usize } else { reflect_index(sy, h) };
        for x in 0..pw {
            let sx = x as isize - pad as isize;
            let col_in = sx >= 0 && (sx as usize) < w;
            if !col_in && mode == PadMode::Zero {
                continue;
            }
            let rx = if col_in { sx as usize } else { reflect_index(sx, w) };
            dst[ry * w + rx] = dst[ry * w + rx] + padded[y * pw + x];
        }
    }
}
