//! Binary masks, IoU, and mean instance-segmentation consistency.

use std::cmp::Ordering;

use crate::error::{arg_err, shape_err, Error, Result};

use super::consistency::MetricValue;
use super::crop::Rect;

/// Bit-packed binary mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    h: usize,
    w: usize,
    words: Vec<u64>,
}

impl Mask {
    pub fn empty(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            words: vec![0; (h * w).div_ceil(64)],
        }
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::empty(h, w);
        for i in 0..h {
            for j in 0..w {
                if f(i, j) {
                    m.set(i, j, true);
                }
            }
        }
        m
    }

    pub fn from_bools(h: usize, w: usize, bits: &[bool]) -> Result<Self> {
        if bits.len() != h * w {
            return shape_err("Mask", format!("{} bits for {h}x{w}", bits.len()));
        }
        Ok(Self::from_fn(h, w, |i, j| bits[i * w + j]))
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        let b = i * self.w + j;
        self.words[b / 64] >> (b % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        let b = i * self.w + j;
        if v {
            self.words[b / 64] |= 1 << (b % 64);
        } else {
            self.words[b / 64] &= !(1 << (b % 64));
        }
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn crop(&self, r: Rect) -> Result<Self> {
        if r.y + r.h > self.h || r.x + r.w > self.w {
            return shape_err("Mask::crop", format!("{r:?} outside {}x{}", self.h, self.w));
        }
        Ok(Self::from_fn(r.h, r.w, |i, j| self.get(r.y + i, r.x + j)))
    }

    fn same_extent(&self, other: &Mask, op: &'static str) -> Result<()> {
        if (self.h, self.w) != (other.h, other.w) {
            return shape_err(op, format!("{}x{} vs {}x{}", self.h, self.w, other.h, other.w));
        }
        Ok(())
    }
}

/// `|a & b| / |a | b|`, defined as 0 when both masks are empty.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    a.same_extent(b, "iou")?;
    let (mut inter, mut union) = (0u64, 0u64);
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += (x & y).count_ones() as u64;
        union += (x | y).count_ones() as u64;
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub mask: Mask,
    pub class_id: u32,
    pub confidence: f64,
}

/// Predicted instances of one image region; every mask is non-empty and all
/// share the set's extents.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct InstanceSet {
    h: usize,
    w: usize,
    instances: Vec<Instance>,
}

impl InstanceSet {
    pub fn new(h: usize, w: usize, instances: Vec<Instance>) -> Result<Self> {
        for (i, inst) in instances.iter().enumerate() {
            if (inst.mask.h, inst.mask.w) != (h, w) {
                return shape_err("InstanceSet", format!("mask {i} is {}x{}, set is {h}x{w}", inst.mask.h, inst.mask.w));
            }
            if inst.mask.is_empty() {
                return arg_err("InstanceSet", format!("mask {i} is empty"));
            }
            if !inst.confidence.is_finite() {
                return arg_err("InstanceSet", format!("mask {i} has non-finite confidence"));
            }
        }
        Ok(Self { h, w, instances })
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Crops every mask to `r`, dropping instances left empty.
    pub fn restrict(&self, r: Rect) -> Result<Self> {
        let mut out = Vec::new();
        for inst in &self.instances {
            let mask = inst.mask.crop(r)?;
            if !mask.is_empty() {
                out.push(Instance { mask, ..inst.clone() });
            }
        }
        Ok(Self {
            h: r.h,
            w: r.w,
            instances: out,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaiscConfig {
    /// A counterpart is positive when its IoU is strictly greater than this.
    pub iou_threshold: f64,
    pub require_class_match: bool,
}

impl Default for MaiscConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.9,
            require_class_match: true,
        }
    }
}

/// Outcome of matching one `M(b)` against one `M(c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairMatch {
    /// For each instance of `M(b)` (original index): claimed counterpart and IoU.
    pub counterparts: Vec<Option<(usize, f64)>>,
    pub positives: usize,
}

/// Greedy one-to-one matching.
///
/// Instances of `M(b)` are visited by descending confidence (stable, so ties
/// keep input order). Each takes the unclaimed `M(c)` instance with the highest
/// IoU (lowest index on ties) as its counterpart, if that IoU is non-zero; a
/// claimed instance is never offered again.
pub fn match_instances(set_b: &InstanceSet, set_c: &InstanceSet, cfg: &MaiscConfig) -> Result<PairMatch> {
    if (set_b.h, set_b.w) != (set_c.h, set_c.w) {
        return shape_err("maisc", format!("{}x{} vs {}x{}", set_b.h, set_b.w, set_c.h, set_c.w));
    }
    let mut order: Vec<usize> = (0..set_b.len()).collect();
    order.sort_by(|&i, &j| {
        set_b.instances[j]
            .confidence
            .partial_cmp(&set_b.instances[i].confidence)
            .unwrap_or(Ordering::Equal)
    });
    let mut claimed = vec![false; set_c.len()];
    let mut counterparts = vec![None; set_b.len()];
    let mut positives = 0;
    for bi in order {
        let mb = &set_b.instances[bi];
        let mut best: Option<(usize, f64)> = None;
        for (ci, mc) in set_c.instances.iter().enumerate() {
            if claimed[ci] || (cfg.require_class_match && mc.class_id != mb.class_id) {
                continue;
            }
            let v = iou(&mb.mask, &mc.mask)?;
            if v > 0.0 && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((ci, v));
            }
        }
        if let Some((ci, v)) = best {
            assert!(!claimed[ci], "counterpart {ci} claimed twice");
            claimed[ci] = true;
            counterparts[bi] = Some((ci, v));
            if v > cfg.iou_threshold {
                positives += 1;
            }
        }
    }
    Ok(PairMatch { counterparts, positives })
}

/// Mean instance-segmentation consistency over crop pairs.
///
/// Each pair holds `(M(b), M(c))` already restricted to the overlap. The
/// per-pair score is positives / |M(b)|; pairs with empty `M(b)` are skipped.
pub fn maisc(pairs: &[(InstanceSet, InstanceSet)], cfg: &MaiscConfig) -> Result<MetricValue> {
    let mut total = 0.0;
    let mut used = 0;
    let mut skipped = 0;
    for (b, c) in pairs {
        if b.is_empty() {
            skipped += 1;
            continue;
        }
        let m = match_instances(b, c, cfg)?;
        total += m.positives as f64 / b.len() as f64;
        used += 1;
    }
    if used == 0 {
        return Err(Error::Empty("maisc"));
    }
    Ok(MetricValue {
        value: total / used as f64,
        pairs_used: used,
        pairs_skipped: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_mask(h: usize, w: usize, r: Rect) -> Mask {
        Mask::from_fn(h, w, |i, j| i >= r.y && i < r.y + r.h && j >= r.x && j < r.x + r.w)
    }

    fn inst(mask: Mask, class_id: u32, confidence: f64) -> Instance {
        Instance {
            mask,
            class_id,
            confidence,
        }
    }

    #[test]
    fn iou_basics() {
        let a = rect_mask(8, 8, Rect::new(0, 0, 4, 4));
        let b = rect_mask(8, 8, Rect::new(4, 4, 4, 4));
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
        assert_eq!(iou(&Mask::empty(8, 8), &Mask::empty(8, 8)).unwrap(), 0.0);
        let c = rect_mask(8, 8, Rect::new(0, 0, 4, 2));
        assert_eq!(iou(&a, &c).unwrap(), 0.5);
        assert!(iou(&a, &Mask::empty(8, 7)).is_err());
    }

    #[test]
    fn empty_masks_rejected() {
        assert!(InstanceSet::new(4, 4, vec![inst(Mask::empty(4, 4), 0, 1.0)]).is_err());
    }

    #[test]
    fn class_match_flag() {
        let m = rect_mask(6, 6, Rect::new(1, 1, 3, 3));
        let b = InstanceSet::new(6, 6, vec![inst(m.clone(), 1, 0.9)]).unwrap();
        let c = InstanceSet::new(6, 6, vec![inst(m, 2, 0.9)]).unwrap();
        let strict = MaiscConfig::default();
        assert_eq!(maisc(&[(b.clone(), c.clone())], &strict).unwrap().value, 0.0);
        let loose = MaiscConfig {
            require_class_match: false,
            ..strict
        };
        assert_eq!(maisc(&[(b, c)], &loose).unwrap().value, 1.0);
    }

    #[test]
    fn threshold_is_strict() {
        // IoU exactly 0.9: 9 of 10 pixels
        let a = rect_mask(1, 10, Rect::new(0, 0, 1, 10));
        let b = rect_mask(1, 10, Rect::new(0, 0, 1, 9));
        let sb = InstanceSet::new(1, 10, vec![inst(a, 0, 1.0)]).unwrap();
        let sc = InstanceSet::new(1, 10, vec![inst(b, 0, 1.0)]).unwrap();
        let m = match_instances(&sb, &sc, &MaiscConfig::default()).unwrap();
        assert_eq!(m.positives, 0);
        assert!((m.counterparts[0].unwrap().1 - 0.9).abs() < 1e-12);
    }

    #[test]
    fn confidence_order_decides_claims() {
        // Both b-instances overlap the single c-instance; the more confident one claims it.
        let c_mask = rect_mask(4, 10, Rect::new(0, 0, 4, 10));
        let b_hi = rect_mask(4, 10, Rect::new(0, 0, 4, 5));
        let b_lo = rect_mask(4, 10, Rect::new(0, 0, 4, 10));
        let sb = InstanceSet::new(4, 10, vec![inst(b_lo, 0, 0.2), inst(b_hi, 0, 0.8)]).unwrap();
        let sc = InstanceSet::new(4, 10, vec![inst(c_mask, 0, 1.0)]).unwrap();
        let m = match_instances(&sb, &sc, &MaiscConfig::default()).unwrap();
        assert_eq!(m.counterparts[1], Some((0, 0.5)));
        assert_eq!(m.counterparts[0], None);
        assert_eq!(m.positives, 0);
    }

    #[test]
    fn all_empty_pairs_is_error() {
        let e = InstanceSet::new(2, 2, vec![]).unwrap();
        assert!(matches!(maisc(&[(e.clone(), e)], &MaiscConfig::default()), Err(Error::Empty(_))));
    }
}
