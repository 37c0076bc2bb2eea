//! Independent reference implementations used only by tests.
//!
//! Everything here works on plain `f64` vectors with explicit index
//! arithmetic and shares no code with the library kernels.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec(rng: &mut impl Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(lo..hi)).collect()
}

#[inline]
pub fn idx(dims: [usize; 4], n: usize, c: usize, h: usize, w: usize) -> usize {
    ((n * dims[1] + c) * dims[2] + h) * dims[3] + w
}

/// Mirror a coordinate without repeating the edge, handling any overshoot by
/// repeated bouncing.
pub fn mirror(mut i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let last = len as isize - 1;
    loop {
        if i < 0 {
            i = -i;
        } else if i > last {
            i = 2 * last - i;
        } else {
            return i as usize;
        }
    }
}

/// Direct summation cross-correlation. `reflect` selects mirrored padding,
/// otherwise out-of-range taps read zero.
pub fn conv_oracle(
    x: &[f64],
    xd: [usize; 4],
    w: &[f64],
    wd: [usize; 4],
    b: Option<&[f64]>,
    stride: usize,
    pad: usize,
    reflect: bool,
) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, ww] = xd;
    let [oc, ic, k, k2] = wd;
    assert_eq!(ic, c);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (ww + 2 * pad - k2) / stride + 1;
    let od = [n, oc, oh, ow];
    let mut out = vec![0.0; n * oc * oh * ow];
    for b_ in 0..n {
        for o in 0..oc {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut s = b.map_or(0.0, |b| b[o]);
                    for i in 0..c {
                        for ky in 0..k {
                            for kx in 0..k2 {
                                let sy = (y * stride + ky) as isize - pad as isize;
                                let sx = (xo * stride + kx) as isize - pad as isize;
                                let inside = sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < ww;
                                let v = if inside {
                                    x[idx(xd, b_, i, sy as usize, sx as usize)]
                                } else if reflect {
                                    x[idx(xd, b_, i, mirror(sy, h), mirror(sx, ww))]
                                } else {
                                    0.0
                                };
                                s += w[idx(wd, o, i, ky, kx)] * v;
                            }
                        }
                    }
                    out[idx(od, b_, o, y, xo)] = s;
                }
            }
        }
    }
    (out, od)
}

pub fn max_pool_oracle(x: &[f64], xd: [usize; 4], kh: usize, kw: usize, stride: usize) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, w] = xd;
    let od = [n, c, (h - kh) / stride + 1, (w - kw) / stride + 1];
    let mut out = Vec::new();
    for b in 0..n {
        for ch in 0..c {
            for y in 0..od[2] {
                for xx in 0..od[3] {
                    let mut m = f64::NEG_INFINITY;
                    for dy in 0..kh {
                        for dx in 0..kw {
                            m = m.max(x[idx(xd, b, ch, y * stride + dy, xx * stride + dx)]);
                        }
                    }
                    out.push(m);
                }
            }
        }
    }
    (out, od)
}

pub fn avg_pool_oracle(x: &[f64], xd: [usize; 4], kh: usize, kw: usize, stride: usize) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, w] = xd;
    let od = [n, c, (h - kh) / stride + 1, (w - kw) / stride + 1];
    let mut out = Vec::new();
    for b in 0..n {
        for ch in 0..c {
            for y in 0..od[2] {
                for xx in 0..od[3] {
                    let mut s = 0.0;
                    for dy in 0..kh {
                        for dx in 0..kw {
                            s += x[idx(xd, b, ch, y * stride + dy, xx * stride + dx)];
                        }
                    }
                    out.push(s / (kh * kw) as f64);
                }
            }
        }
    }
    (out, od)
}

pub fn subsample_oracle(x: &[f64], xd: [usize; 4], stride: usize) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, w] = xd;
    let ys: Vec<usize> = (0..h).step_by(stride).collect();
    let xs: Vec<usize> = (0..w).step_by(stride).collect();
    let mut out = Vec::new();
    for b in 0..n {
        for ch in 0..c {
            for &y in &ys {
                for &xx in &xs {
                    out.push(x[idx(xd, b, ch, y, xx)]);
                }
            }
        }
    }
    (out, [n, c, ys.len(), xs.len()])
}

/// Grouped adaptive filtering evaluated literally:
/// `Y[c,i,j] = sum_{p,q in -r..=r} w[g(c), (p+r)k + (q+r), i, j] * X[c, mirror(i+p), mirror(j+q)]`.
/// `field` has layout `(n, g, k*k, h, w)`.
pub fn adaptive_oracle(x: &[f64], xd: [usize; 4], field: &[f64], groups: usize, k: usize) -> Vec<f64> {
    let [n, c, h, w] = xd;
    let r = (k / 2) as isize;
    let per = c / groups;
    let fd = [n, groups * k * k, h, w];
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for ch in 0..c {
            let g = ch / per;
            for i in 0..h {
                for j in 0..w {
                    let mut s = 0.0;
                    for p in -r..=r {
                        for q in -r..=r {
                            let tap = ((p + r) as usize) * k + (q + r) as usize;
                            let wv = field[idx(fd, b, g * k * k + tap, i, j)];
                            let xv = x[idx(xd, b, ch, mirror(i as isize + p, h), mirror(j as isize + q, w))];
                            s += wv * xv;
                        }
                    }
                    out[idx(xd, b, ch, i, j)] = s;
                }
            }
        }
    }
    out
}

/// Softmax of every slice of `m` consecutive channels, computed naively in
/// `f64` (inputs are kept small enough not to overflow).
pub fn softmax_oracle(x: &[f64], xd: [usize; 4], m: usize) -> Vec<f64> {
    let [n, c, h, w] = xd;
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for s in 0..c / m {
            for i in 0..h {
                for j in 0..w {
                    let denom: f64 = (0..m).map(|t| x[idx(xd, b, s * m + t, i, j)].exp()).sum();
                    for t in 0..m {
                        let k = idx(xd, b, s * m + t, i, j);
                        out[k] = x[k].exp() / denom;
                    }
                }
            }
        }
    }
    out
}

pub fn bn_eval_oracle(x: &[f64], xd: [usize; 4], mean: &[f64], var: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (k, o) in out.iter_mut().enumerate() {
        let c = (k / (xd[2] * xd[3])) % xd[1];
        *o = gamma[c] * (x[k] - mean[c]) / (var[c] + eps).sqrt() + beta[c];
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn total_variation(x: &[f64], xd: [usize; 4]) -> f64 {
    let [n, c, h, w] = xd;
    let mut tv = 0.0;
    for b in 0..n {
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    let v = x[idx(xd, b, ch, i, j)];
                    if i + 1 < h {
                        tv += (x[idx(xd, b, ch, i + 1, j)] - v).abs();
                    }
                    if j + 1 < w {
                        tv += (x[idx(xd, b, ch, i, j + 1)] - v).abs();
                    }
                }
            }
        }
    }
    tv
}

/// A random valid low-pass field `(n, g, k*k, h, w)`: positive weights with
/// unit sum per filter.
pub fn random_field(rng: &mut impl Rng, n: usize, g: usize, k: usize, h: usize, w: usize) -> Vec<f64> {
    let taps = k * k;
    let fd = [n, g * taps, h, w];
    let mut f = vec![0.0; n * g * taps * h * w];
    for b in 0..n {
        for gi in 0..g {
            for i in 0..h {
                for j in 0..w {
                    let raw: Vec<f64> = (0..taps).map(|_| rng.gen_range(0.01..1.0)).collect();
                    let s: f64 = raw.iter().sum();
                    for (t, v) in raw.iter().enumerate() {
                        f[idx(fd, b, gi * taps + t, i, j)] = v / s;
                    }
                }
            }
        }
    }
    f
}
