use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};

/// Axis-aligned rectangle: origin `(y, x)`, extents `h x w`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub y: usize,
    pub x: usize,
    pub h: usize,
    pub w: usize,
}

impl Rect {
    pub const fn new(y: usize, x: usize, h: usize, w: usize) -> Self {
        Self { y, x, h, w }
    }

    pub fn is_empty(&self) -> bool {
        self.h == 0 || self.w == 0
    }

    pub fn area(&self) -> usize {
        self.h * self.w
    }

    pub fn intersect(&self, other: &Rect) -> Rect {
        let y0 = self.y.max(other.y);
        let x0 = self.x.max(other.x);
        let y1 = (self.y + self.h).min(other.y + other.h);
        let x1 = (self.x + self.w).min(other.x + other.w);
        Rect::new(y0, x0, y1.saturating_sub(y0), x1.saturating_sub(x0))
    }

    /// This rectangle expressed relative to `origin`'s top-left corner.
    pub fn relative_to(&self, origin: &Rect) -> Rect {
        Rect::new(self.y - origin.y, self.x - origin.x, self.h, self.w)
    }
}

/// Two crop windows of one source image and their common region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropPair {
    pub source_h: usize,
    pub source_w: usize,
    pub a: Rect,
    pub b: Rect,
    /// Overlap in crop A's local frame.
    pub overlap_a: Rect,
    /// Overlap in crop B's local frame; same extents as `overlap_a`.
    pub overlap_b: Rect,
}

impl CropPair {
    /// Returns `None` when the crops do not overlap.
    pub fn new(source_h: usize, source_w: usize, a: Rect, b: Rect) -> Option<Self> {
        let o = a.intersect(&b);
        if o.is_empty() {
            return None;
        }
        Some(Self {
            source_h,
            source_w,
            a,
            b,
            overlap_a: o.relative_to(&a),
            overlap_b: o.relative_to(&b),
        })
    }

    /// Overlap in source coordinates.
    pub fn overlap(&self) -> Rect {
        self.a.intersect(&self.b)
    }
}

/// Samples `count` crop pairs of size `crop_h x crop_w` uniformly inside a
/// `source_h x source_w` image, rejecting pairs without overlap.
/// Deterministic for a given seed.
pub fn make_crop_pairs(
    source_h: usize,
    source_w: usize,
    crop_h: usize,
    crop_w: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<CropPair>> {
    if crop_h == 0 || crop_w == 0 || crop_h > source_h || crop_w > source_w {
        return arg_err(
            "make_crop_pairs",
            format!("crop {crop_h}x{crop_w} does not fit image {source_h}x{source_w}"),
        );
    }
    if count == 0 {
        return arg_err("make_crop_pairs", "count must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin = |rng: &mut ChaCha8Rng| {
        Rect::new(
            rng.gen_range(0..=source_h - crop_h),
            rng.gen_range(0..=source_w - crop_w),
            crop_h,
            crop_w,
        )
    };
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let a = origin(&mut rng);
        let b = origin(&mut rng);
        if let Some(p) = CropPair::new(source_h, source_w, a, b) {
            out.push(p);
        }
    }
    Ok(out)
}
