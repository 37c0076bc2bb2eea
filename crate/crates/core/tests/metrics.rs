mod common;

use adablur_core::metrics::{
    classification_consistency, iou, maisc, make_crop_pairs, massc, match_instances, pixel_agreement, Instance,
    InstanceSet, LabelMap, MaiscConfig, Mask, Rect,
};
use common::rng;
use proptest::prelude::*;
use rand::Rng;

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
fn classification_examples() {
    let preds: Vec<(usize, usize)> = (0..50).map(|i| (i % 7, i % 7)).collect();
    assert_eq!(classification_consistency(&preds).unwrap().value, 1.0);
    let half: Vec<(usize, usize)> = (0..100).map(|i| (1, if i % 2 == 0 { 1 } else { 2 })).collect();
    assert_eq!(classification_consistency(&half).unwrap().value, 0.5);
    assert!(classification_consistency(&[]).is_err());
}

#[test]
fn classification_matches_recount() {
    let mut r = rng(1);
    for _ in 0..50 {
        let len = r.gen_range(1..200);
        let pairs: Vec<(usize, usize)> = (0..len).map(|_| (r.gen_range(0..3), r.gen_range(0..3))).collect();
        let mut same = 0usize;
        for i in 0..pairs.len() {
            if pairs[i].0 == pairs[i].1 {
                same += 1;
            }
        }
        let m = classification_consistency(&pairs).unwrap();
        assert_eq!(m.value, same as f64 / len as f64);
        assert_eq!(m.pairs_used, len);
    }
}

#[test]
fn massc_quarter_disagreement() {
    let a = LabelMap::from_fn(10, 10, |i, j| ((i + j) % 3) as u32);
    let b = LabelMap::from_fn(10, 10, |i, j| if i < 5 && j < 5 { 9 } else { a.get(i, j) });
    assert_eq!(pixel_agreement(&a, &b).unwrap(), 0.75);
    assert_eq!(massc(&[vec![(a.clone(), b.clone())]]).unwrap().value, 0.75);
    assert_eq!(massc(&[vec![(a.clone(), a.clone())]]).unwrap().value, 1.0);
    let small = LabelMap::from_fn(9, 10, |_, _| 0);
    assert!(pixel_agreement(&a, &small).is_err());
}

#[test]
fn massc_two_level_mean() {
    let mut r = rng(2);
    let mut images = Vec::new();
    let mut image_means = Vec::new();
    for _ in 0..3 {
        let mut pairs = Vec::new();
        let mut scores = Vec::new();
        for _ in 0..4 {
            let (h, w) = (r.gen_range(2..8), r.gen_range(2..8));
            let a = LabelMap::from_fn(h, w, |_, _| r.gen_range(0..3));
            let b = LabelMap::from_fn(h, w, |_, _| r.gen_range(0..3));
            let mut same = 0;
            for i in 0..h {
                for j in 0..w {
                    if a.get(i, j) == b.get(i, j) {
                        same += 1;
                    }
                }
            }
            scores.push(same as f64 / (h * w) as f64);
            pairs.push((a, b));
        }
        image_means.push(scores.iter().sum::<f64>() / 4.0);
        images.push(pairs);
    }
    let want = image_means.iter().sum::<f64>() / 3.0;
    let got = massc(&images).unwrap();
    assert!((got.value - want).abs() < 1e-12);
    assert_eq!(got.pairs_used, 12);
}

#[test]
fn maisc_two_instance_case() {
    let (h, w) = (20, 20);
    let a0 = rect_mask(h, w, Rect::new(0, 0, 10, 10));
    let b0 = Mask::from_fn(h, w, |i, j| a0.get(i, j) && !(i == 9 && j >= 5));
    assert!((iou(&a0, &b0).unwrap() - 0.95).abs() < 1e-12);
    let a1 = rect_mask(h, w, Rect::new(12, 12, 5, 5));
    let set_b = InstanceSet::new(h, w, vec![inst(a0, 1, 0.9), inst(a1, 1, 0.8)]).unwrap();
    let set_c = InstanceSet::new(h, w, vec![inst(b0, 1, 0.7)]).unwrap();
    let cfg = MaiscConfig::default();
    assert_eq!(cfg.iou_threshold, 0.9);
    assert_eq!(maisc(&[(set_b.clone(), set_c.clone())], &cfg).unwrap().value, 0.5);
    assert_eq!(max_positive_assignment(&set_b, &set_c, &cfg), 1);
    assert_eq!(maisc(&[(set_b.clone(), set_b.clone())], &cfg).unwrap().value, 1.0);
    // Normalized by |M(b)|, so swapping the roles changes the score.
    assert_eq!(maisc(&[(set_c, set_b)], &cfg).unwrap().value, 1.0);
}

#[test]
fn maisc_skips_empty_and_requires_class() {
    let m = rect_mask(4, 4, Rect::new(0, 0, 2, 2));
    let full = InstanceSet::new(4, 4, vec![inst(m.clone(), 0, 1.0)]).unwrap();
    let other = InstanceSet::new(4, 4, vec![inst(m, 1, 1.0)]).unwrap();
    let empty = InstanceSet::new(4, 4, vec![]).unwrap();
    let v = maisc(&[(empty.clone(), full.clone()), (full.clone(), full.clone())], &MaiscConfig::default()).unwrap();
    assert_eq!((v.value, v.pairs_used, v.pairs_skipped), (1.0, 1, 1));
    assert_eq!(maisc(&[(full.clone(), other.clone())], &MaiscConfig::default()).unwrap().value, 0.0);
    let loose = MaiscConfig {
        require_class_match: false,
        ..MaiscConfig::default()
    };
    assert_eq!(maisc(&[(full, other)], &loose).unwrap().value, 1.0);
    assert!(maisc(&[(empty.clone(), empty)], &MaiscConfig::default()).is_err());
}

/// Every injective partial map from `0..nb` into `0..nc`.
fn assignments(nb: usize, nc: usize) -> Vec<Vec<Option<usize>>> {
    fn rec(i: usize, nb: usize, nc: usize, used: &mut Vec<bool>, cur: &mut Vec<Option<usize>>, out: &mut Vec<Vec<Option<usize>>>) {
        if i == nb {
            out.push(cur.clone());
            return;
        }
        cur.push(None);
        rec(i + 1, nb, nc, used, cur, out);
        cur.pop();
        for c in 0..nc {
            if !used[c] {
                used[c] = true;
                cur.push(Some(c));
                rec(i + 1, nb, nc, used, cur, out);
                cur.pop();
                used[c] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(0, nb, nc, &mut vec![false; nc], &mut Vec::new(), &mut out);
    out
}

fn popcount_iou(a: &Mask, b: &Mask) -> f64 {
    let (mut inter, mut uni) = (0, 0);
    for i in 0..a.height() {
        for j in 0..a.width() {
            inter += (a.get(i, j) && b.get(i, j)) as usize;
            uni += (a.get(i, j) || b.get(i, j)) as usize;
        }
    }
    if uni == 0 {
        0.0
    } else {
        inter as f64 / uni as f64
    }
}

fn allowed(b: &Instance, c: &Instance, cfg: &MaiscConfig) -> bool {
    !cfg.require_class_match || b.class_id == c.class_id
}

/// Largest number of positive pairs any one-to-one assignment achieves.
fn max_positive_assignment(set_b: &InstanceSet, set_c: &InstanceSet, cfg: &MaiscConfig) -> usize {
    let (bs, cs) = (set_b.instances(), set_c.instances());
    assignments(bs.len(), cs.len())
        .iter()
        .map(|a| {
            a.iter()
                .enumerate()
                .filter(|(bi, c)| {
                    c.is_some_and(|ci| allowed(&bs[*bi], &cs[ci], cfg) && popcount_iou(&bs[*bi].mask, &cs[ci].mask) > cfg.iou_threshold)
                })
                .count()
        })
        .max()
        .unwrap()
}

/// The claim rule as a ranking over all assignments: visiting `M(b)` by
/// descending confidence (stable), prefer the larger IoU, then no counterpart
/// over a zero-overlap one, then the lower index. The best-ranked assignment
/// is the one the rule produces.
fn claim_rule_oracle(set_b: &InstanceSet, set_c: &InstanceSet, cfg: &MaiscConfig) -> (Vec<Option<usize>>, usize) {
    let (bs, cs) = (set_b.instances(), set_c.instances());
    let mut order: Vec<usize> = (0..bs.len()).collect();
    order.sort_by(|&i, &j| bs[j].confidence.partial_cmp(&bs[i].confidence).unwrap());
    let key = |a: &Vec<Option<usize>>| -> Option<Vec<(f64, i64)>> {
        let mut k = Vec::new();
        for &bi in &order {
            match a[bi] {
                None => k.push((0.0, 1)),
                Some(ci) => {
                    let v = popcount_iou(&bs[bi].mask, &cs[ci].mask);
                    if !allowed(&bs[bi], &cs[ci], cfg) || v == 0.0 {
                        return None;
                    }
                    k.push((v, -(ci as i64) - 1));
                }
            }
        }
        Some(k)
    };
    let mut best: Option<(Vec<(f64, i64)>, Vec<Option<usize>>)> = None;
    for a in assignments(bs.len(), cs.len()) {
        if let Some(k) = key(&a) {
            let better = match &best {
                None => true,
                Some((bk, _)) => k.partial_cmp(bk) == Some(std::cmp::Ordering::Greater),
            };
            if better {
                best = Some((k, a));
            }
        }
    }
    let (_, a) = best.unwrap();
    let pos = a
        .iter()
        .enumerate()
        .filter(|(bi, c)| c.is_some_and(|ci| popcount_iou(&bs[*bi].mask, &cs[ci].mask) > cfg.iou_threshold))
        .count();
    (a, pos)
}

fn random_blob(r: &mut impl Rng, h: usize, w: usize) -> Mask {
    loop {
        let y = r.gen_range(0..h);
        let x = r.gen_range(0..w);
        let rh = r.gen_range(1..=h - y);
        let rw = r.gen_range(1..=w - x);
        let m = Mask::from_fn(h, w, |i, j| i >= y && i < y + rh && j >= x && j < x + rw && r.gen_bool(0.97));
        if !m.is_empty() {
            return m;
        }
    }
}

#[test]
fn greedy_matches_exhaustive_claim_oracle() {
    let mut r = rng(3);
    let (h, w) = (8, 8);
    for trial in 0..300 {
        let nb = r.gen_range(1..=5);
        let nc = r.gen_range(0..=5);
        let classes = if trial % 2 == 0 { 1 } else { 2 };
        let mk = |n: usize, r: &mut rand_chacha::ChaCha8Rng| -> InstanceSet {
            let v = (0..n).map(|_| inst(random_blob(r, h, w), r.gen_range(0..classes), (r.gen_range(0..4) as f64) / 4.0)).collect();
            InstanceSet::new(h, w, v).unwrap()
        };
        let b = mk(nb, &mut r);
        let mut c = mk(nc, &mut r);
        // Near-copies of some M(b) masks so the threshold is actually crossed.
        let mut extra: Vec<Instance> = c.instances().to_vec();
        for ib in b.instances().iter().filter(|_| r.gen_bool(0.5)).take(5 - nc.min(5)) {
            extra.push(ib.clone());
        }
        c = InstanceSet::new(h, w, extra).unwrap();
        let cfg = MaiscConfig {
            iou_threshold: 0.9,
            require_class_match: trial % 3 != 0,
        };
        let got = match_instances(&b, &c, &cfg).unwrap();
        let (want, pos) = claim_rule_oracle(&b, &c, &cfg);
        assert_eq!(got.counterparts.iter().map(|o| o.map(|(ci, _)| ci)).collect::<Vec<_>>(), want, "trial {trial}");
        assert_eq!(got.positives, pos);
        assert!(pos <= max_positive_assignment(&b, &c, &cfg));
    }
}

#[test]
fn crop_pairs_are_deterministic_and_overlapping() {
    let a = make_crop_pairs(32, 40, 24, 24, 50, 7).unwrap();
    let b = make_crop_pairs(32, 40, 24, 24, 50, 7).unwrap();
    assert_eq!(a, b);
    for p in &a {
        assert!(!p.overlap_a.is_empty());
        assert_eq!((p.overlap_a.h, p.overlap_a.w), (p.overlap_b.h, p.overlap_b.w));
        assert!(p.a.y + p.a.h <= 32 && p.b.x + p.b.w <= 40);
    }
    assert!(make_crop_pairs(10, 10, 11, 5, 1, 0).is_err());
    assert!(make_crop_pairs(10, 10, 5, 5, 0, 0).is_err());
}

proptest! {
    #[test]
    fn iou_matches_popcount(seed in any::<u64>(), h in 1usize..20, w in 1usize..80, pa in 0.0f64..1.0, pb in 0.0f64..1.0) {
        let mut r = rng(seed);
        let a = Mask::from_fn(h, w, |_, _| r.gen_bool(pa));
        let b = Mask::from_fn(h, w, |_, _| r.gen_bool(pb));
        let v = iou(&a, &b).unwrap();
        prop_assert_eq!(v, popcount_iou(&a, &b));
        prop_assert_eq!(v, iou(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&v));
        if !a.is_empty() {
            prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
        }
        // Growing the intersection (adding a's pixels to b) never lowers IoU.
        let grown = Mask::from_fn(h, w, |i, j| b.get(i, j) || (a.get(i, j) && r.gen_bool(0.5)));
        prop_assert!(iou(&a, &grown).unwrap() >= v - 1e-15);
    }

    #[test]
    fn label_metrics_bounded_and_symmetric(seed in any::<u64>(), h in 1usize..12, w in 1usize..12) {
        let mut r = rng(seed);
        let a = LabelMap::from_fn(h, w, |_, _| r.gen_range(0..3));
        let b = LabelMap::from_fn(h, w, |_, _| r.gen_range(0..3));
        let ab = massc(&[vec![(a.clone(), b.clone())]]).unwrap().value;
        let ba = massc(&[vec![(b, a)]]).unwrap().value;
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
    }
}
