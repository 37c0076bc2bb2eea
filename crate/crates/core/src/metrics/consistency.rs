//! Top-1 classification consistency and semantic-segmentation consistency.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

use super::crop::Rect;

/// Aggregated metric value with the number of units it was computed from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    pub pairs_used: usize,
    pub pairs_skipped: usize,
}

/// Fraction of pairs whose two top-1 predictions agree.
pub fn classification_consistency(pairs: &[(usize, usize)]) -> Result<MetricValue> {
    if pairs.is_empty() {
        return Err(Error::Empty("classification_consistency"));
    }
    let agree = pairs.iter().filter(|(a, b)| a == b).count();
    Ok(MetricValue {
        value: agree as f64 / pairs.len() as f64,
        pairs_used: pairs.len(),
        pairs_skipped: 0,
    })
}

/// Per-pixel class ids of one prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    h: usize,
    w: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(h: usize, w: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != h * w {
            return shape_err("LabelMap", format!("{} labels for {h}x{w}", labels.len()));
        }
        Ok(Self { h, w, labels })
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> u32) -> Self {
        let labels = (0..h).flat_map(|i| (0..w).map(move |j| (i, j))).map(|(i, j)| f(i, j)).collect();
        Self { h, w, labels }
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.labels[i * self.w + j]
    }

    pub fn crop(&self, r: Rect) -> Result<Self> {
        if r.y + r.h > self.h || r.x + r.w > self.w {
            return shape_err("LabelMap::crop", format!("{r:?} outside {}x{}", self.h, self.w));
        }
        Ok(Self::from_fn(r.h, r.w, |i, j| self.get(r.y + i, r.x + j)))
    }
}

/// Mean pixel agreement of two label maps over the same region.
pub fn pixel_agreement(a: &LabelMap, b: &LabelMap) -> Result<f64> {
    if (a.h, a.w) != (b.h, b.w) {
        return shape_err("pixel_agreement", format!("{}x{} vs {}x{}", a.h, a.w, b.h, b.w));
    }
    if a.labels.is_empty() {
        return Err(Error::Empty("pixel_agreement"));
    }
    let same = a.labels.iter().zip(&b.labels).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.labels.len() as f64)
}

/// Mean semantic-segmentation consistency.
///
/// `images[i]` lists the overlap label-map pairs of image `i`. Pair scores are
/// averaged within each image, then image scores are averaged. Images without
/// pairs are skipped.
pub fn massc(images: &[Vec<(LabelMap, LabelMap)>]) -> Result<MetricValue> {
    let mut image_scores = Vec::new();
    let mut used = 0;
    let mut skipped = 0;
    for pairs in images {
        if pairs.is_empty() {
            skipped += 1;
            continue;
        }
        let mut s = 0.0;
        for (a, b) in pairs {
            s += pixel_agreement(a, b)?;
        }
        used += pairs.len();
        image_scores.push(s / pairs.len() as f64);
    }
    if image_scores.is_empty() {
        return Err(Error::Empty("massc"));
    }
    Ok(MetricValue {
        value: image_scores.iter().sum::<f64>() / image_scores.len() as f64,
        pairs_used: used,
        pairs_skipped: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_examples() {
        let same: Vec<_> = (0..10).map(|i| (i, i)).collect();
        assert_eq!(classification_consistency(&same).unwrap().value, 1.0);
        let half: Vec<_> = (0..100).map(|i| (i % 7, if i % 2 == 0 { i % 7 } else { 99 })).collect();
        assert_eq!(classification_consistency(&half).unwrap().value, 0.5);
        assert!(matches!(classification_consistency(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn quarter_disagreement() {
        let a = LabelMap::from_fn(10, 10, |i, j| ((i + j) % 3) as u32);
        let b = LabelMap::from_fn(10, 10, |i, j| if i < 5 && j < 5 { 7 } else { ((i + j) % 3) as u32 });
        assert_eq!(pixel_agreement(&a, &b).unwrap(), 0.75);
        assert_eq!(pixel_agreement(&a, &a).unwrap(), 1.0);
        let m = massc(&[vec![(a.clone(), b)]]).unwrap();
        assert_eq!(m.value, 0.75);
        let c = LabelMap::from_fn(10, 9, |_, _| 0);
        assert!(pixel_agreement(&a, &c).is_err());
    }

    #[test]
    fn label_map_crop() {
        let a = LabelMap::from_fn(4, 5, |i, j| (i * 10 + j) as u32);
        let c = a.crop(Rect::new(1, 2, 2, 3)).unwrap();
        assert_eq!(c.labels(), &[12, 13, 14, 22, 23, 24]);
        assert!(a.crop(Rect::new(3, 0, 2, 1)).is_err());
    }
}
