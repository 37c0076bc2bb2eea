mod common;

use adablur_core::analysis::{filter_variance, group_similarity, variance_by_gradient};
use adablur_core::{FilterField64, Tensor64};
use common::*;
use rand::Rng;

/// Correlation from raw moments over an explicit double loop of channels.
fn corr_oracle(x: &[f64], dims: [usize; 4], a: usize, b: usize) -> f64 {
    let [n, _, h, w] = dims;
    let m = (n * h * w) as f64;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for s in 0..n {
        for i in 0..h {
            for j in 0..w {
                let va = x[idx(dims, s, a, i, j)];
                let vb = x[idx(dims, s, b, i, j)];
                sa += va;
                sb += vb;
                saa += va * va;
                sbb += vb * vb;
                sab += va * vb;
            }
        }
    }
    let cov = sab / m - sa * sb / (m * m);
    let va = saa / m - sa * sa / (m * m);
    let vb = sbb / m - sb * sb / (m * m);
    cov / (va * vb).sqrt()
}

#[test]
fn similarity_matches_double_loop() {
    let mut r = rng(1);
    let dims = [2, 8, 5, 6];
    let x = rand_vec(&mut r, dims.iter().product(), -1.0, 1.0);
    let t = Tensor64::from_f64(dims, &x).unwrap();
    for g in [1, 2, 4] {
        let rep = group_similarity(&t, g).unwrap();
        let per = 8 / g;
        for ga in 0..g {
            for gb in 0..g {
                let mut sum = 0.0;
                let mut cnt = 0;
                for a in ga * per..(ga + 1) * per {
                    for b in gb * per..(gb + 1) * per {
                        if a != b {
                            sum += corr_oracle(&x, dims, a, b);
                            cnt += 1;
                        }
                    }
                }
                assert!((rep.get(ga, gb) - sum / cnt as f64).abs() < 1e-5);
                assert_eq!(rep.get(ga, gb), rep.get(gb, ga));
            }
        }
    }
}

#[test]
fn duplicated_within_orthogonal_across() {
    // Group 0 channels copy a horizontal cosine, group 1 a vertical one; on a
    // full period the two are uncorrelated.
    let (h, w) = (8, 8);
    let tau = std::f64::consts::TAU;
    let t = Tensor64::from_fn([1, 4, h, w], |_, c, i, j| {
        if c < 2 {
            (tau * j as f64 / w as f64).cos()
        } else {
            (tau * i as f64 / h as f64).cos()
        }
    });
    let rep = group_similarity(&t, 2).unwrap();
    assert!((rep.get(0, 0) - 1.0).abs() < 1e-9 && (rep.get(1, 1) - 1.0).abs() < 1e-9);
    assert!(rep.get(0, 1).abs() < 1e-9);
    assert!(rep.contrast() > 0.99);
    let one = group_similarity(&t, 1).unwrap();
    // Pairs: (0,1)=1, (2,3)=1, four cross pairs = 0, each counted twice.
    assert!((one.get(0, 0) - 1.0 / 3.0).abs() < 1e-9);
    assert!(group_similarity(&t, 3).is_err());
}

#[test]
fn constant_channel_correlates_as_zero() {
    let t = Tensor64::from_fn([1, 2, 3, 3], |_, c, i, j| if c == 0 { 2.0 } else { (i + j) as f64 });
    assert_eq!(group_similarity(&t, 1).unwrap().get(0, 0), 0.0);
}

#[test]
fn gradient_split_is_finite() {
    let mut r = rng(2);
    let (h, w) = (8, 8);
    let sig = Tensor64::from_fn([1, 1, h, w], |_, _, _, j| if j < 4 { 0.0 } else { 1.0 });
    let f = FilterField64::from_fn(1, 1, 3, h, w, |_, _, t, _, j| {
        let near_edge = j == 3 || j == 4;
        if near_edge {
            if t == 4 {
                0.9
            } else {
                0.0125
            }
        } else {
            1.0 / 9.0 + if t == 4 { r.gen_range(0.0..1e-3) } else { 0.0 }
        }
    })
    .unwrap();
    let stat = variance_by_gradient(&sig, &filter_variance(&f)).unwrap();
    assert!(stat.high_gradient_mean_variance.is_finite() && stat.low_gradient_mean_variance.is_finite());
    assert!(stat.high_gradient_mean_variance > stat.low_gradient_mean_variance);
    assert_eq!(stat.locations, 64);
}
