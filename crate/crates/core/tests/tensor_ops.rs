mod common;

use adablur_core::conv::conv2d_raw;
use adablur_core::norm::{batchnorm, BatchNorm};
use adablur_core::ops::{avg_pool2d, max_pool2d, softmax_over_axis, strided_subsample};
use adablur_core::{conv2d, ConvParams, PadMode, Tensor32, Tensor64};
use common::*;
use proptest::prelude::*;

fn to_f64(t: &Tensor32) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

#[test]
fn shifted_step_through_padded_kernel() {
    // Two-tap difference [1, -1] embedded in a 3x3 kernel; zero padding.
    let x = Tensor32::from_vec([1, 1, 1, 4], vec![0.0, 0.0, 1.0, 1.0]).unwrap();
    let mut w = vec![0.0f32; 9];
    w[4] = 1.0;
    w[5] = -1.0;
    let wt = Tensor32::from_vec([1, 1, 3, 3], w.clone()).unwrap();
    let y = conv2d_raw(&x, &wt, None, 1, 1, PadMode::Zero).unwrap();
    let (oracle, od) = conv_oracle(
        &to_f64(&x),
        [1, 1, 1, 4],
        &w.iter().map(|&v| v as f64).collect::<Vec<_>>(),
        [1, 1, 3, 3],
        None,
        1,
        1,
        false,
    );
    assert_eq!(y.shape().dims(), od);
    assert_eq!(to_f64(&y), oracle);
    assert_eq!(oracle, vec![0.0, -1.0, 0.0, 1.0]);
}

#[test]
fn softmax_stays_positive_for_wide_logit_spread() {
    let x = Tensor32::from_vec([1, 3, 1, 1], vec![200.0, 0.0, -200.0]).unwrap();
    let y = softmax_over_axis(&x, 3).unwrap();
    assert!(y.data().iter().all(|&v| v > 0.0));
    assert_eq!(y.data()[0], 1.0);
    let y64 = softmax_over_axis(&Tensor64::from_f64([1, 2, 1, 1], &[0.0, -2000.0]).unwrap(), 2).unwrap();
    assert_eq!(y64.data()[1], f64::MIN_POSITIVE);
}

#[test]
fn random_conv_matches_oracle() {
    let mut r = rng(42);
    let x = rand_vec(&mut r, 2 * 3 * 5 * 5, -1.0, 1.0);
    let w = rand_vec(&mut r, 4 * 3 * 3 * 3, -1.0, 1.0);
    let b = rand_vec(&mut r, 4, -1.0, 1.0);
    let p = ConvParams::new(
        Tensor32::from_f64([4, 3, 3, 3], &w).unwrap(),
        Tensor32::from_f64([1, 4, 1, 1], &b).unwrap(),
        1,
        1,
        PadMode::Zero,
    )
    .unwrap();
    let xt = Tensor32::from_f64([2, 3, 5, 5], &x).unwrap();
    let y = conv2d(&xt, &p).unwrap();
    let (o, _) = conv_oracle(&to_f64(&xt), [2, 3, 5, 5], &to_f64(&p.weight), [4, 3, 3, 3], Some(&to_f64(&p.bias)), 1, 1, false);
    assert!(max_abs_diff(&to_f64(&y), &o) < 1e-5);
}

#[test]
fn batchnorm_matches_formula() {
    let mut r = rng(9);
    let x = rand_vec(&mut r, 3 * 4 * 2 * 5, -3.0, 3.0);
    let mean = rand_vec(&mut r, 4, -1.0, 1.0);
    let var = rand_vec(&mut r, 4, 0.1, 2.0);
    let gamma = rand_vec(&mut r, 4, 0.5, 1.5);
    let beta = rand_vec(&mut r, 4, -1.0, 1.0);
    let xt = Tensor64::from_f64([3, 4, 2, 5], &x).unwrap();
    let y = batchnorm(
        &xt,
        &mean,
        &var,
        &Tensor64::from_f64([1, 4, 1, 1], &gamma).unwrap(),
        &Tensor64::from_f64([1, 4, 1, 1], &beta).unwrap(),
        1e-5,
    )
    .unwrap();
    let o = bn_eval_oracle(&x, [3, 4, 2, 5], &mean, &var, &gamma, &beta, 1e-5);
    assert!(max_abs_diff(y.data(), &o) < 1e-12);
    let bn = BatchNorm::<f64>::identity(3);
    assert!(bn.forward_eval(&xt).is_err());
}

#[test]
fn ops_are_deterministic() {
    let mut r = rng(5);
    let x = Tensor32::uniform([3, 4, 9, 9], -1.0, 1.0, &mut r);
    let p = ConvParams::<f32>::init_uniform(6, 4, 3, PadMode::Reflect, &mut r).unwrap();
    let a = conv2d(&x, &p).unwrap();
    let b = conv2d(&x, &p).unwrap();
    assert_eq!(
        a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let c = pool.install(|| conv2d(&x, &p).unwrap());
    assert_eq!(a, c);
}

fn shape_strategy() -> impl Strategy<Value = ([usize; 4], u64)> {
    (1usize..=3, 1usize..=4, 3usize..=9, 3usize..=9, any::<u64>()).prop_map(|(n, c, h, w, s)| ([n, c, h, w], s))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn conv_agrees_with_oracle((dims, seed) in shape_strategy(), out_c in 1usize..=4, k in prop::sample::select(vec![1usize, 3, 5]),
                               stride in 1usize..=3, reflect in any::<bool>()) {
        let mut r = rng(seed);
        let pad = k / 2;
        prop_assume!(!reflect || (dims[2] > pad && dims[3] > pad));
        let x = rand_vec(&mut r, dims.iter().product(), -1.0, 1.0);
        let wd = [out_c, dims[1], k, k];
        let w = rand_vec(&mut r, wd.iter().product(), -1.0, 1.0);
        let b = rand_vec(&mut r, out_c, -1.0, 1.0);
        let mode = if reflect { PadMode::Reflect } else { PadMode::Zero };
        let xt = Tensor32::from_f64(dims, &x).unwrap();
        let wt = Tensor32::from_f64(wd, &w).unwrap();
        let bt = Tensor32::from_f64([1, out_c, 1, 1], &b).unwrap();
        let y = conv2d_raw(&xt, &wt, Some(&bt), stride, pad, mode).unwrap();
        let (o, od) = conv_oracle(&to_f64(&xt), dims, &to_f64(&wt), wd, Some(&to_f64(&bt)), stride, pad, reflect);
        prop_assert_eq!(y.shape().dims(), od);
        prop_assert!(max_abs_diff(&to_f64(&y), &o) < 1e-5);
    }

    #[test]
    fn pools_and_subsample_agree((dims, seed) in shape_strategy(), kh in 1usize..=3, kw in 1usize..=3, stride in 1usize..=3) {
        let mut r = rng(seed);
        let x = rand_vec(&mut r, dims.iter().product(), -1.0, 1.0);
        let xt = Tensor32::from_f64(dims, &x).unwrap();
        let xs = to_f64(&xt);
        let (mo, md) = max_pool_oracle(&xs, dims, kh, kw, stride);
        let m = max_pool2d(&xt, (kh, kw), stride).unwrap();
        prop_assert_eq!(m.shape().dims(), md);
        prop_assert!(max_abs_diff(&to_f64(&m), &mo) < 1e-5);
        let (ao, _) = avg_pool_oracle(&xs, dims, kh, kw, stride);
        prop_assert!(max_abs_diff(&to_f64(&avg_pool2d(&xt, (kh, kw), stride).unwrap()), &ao) < 1e-5);
        let (so, sd) = subsample_oracle(&xs, dims, stride);
        let s = strided_subsample(&xt, stride).unwrap();
        prop_assert_eq!(s.shape().dims(), sd);
        prop_assert_eq!(to_f64(&s), so);
    }

    #[test]
    fn softmax_slices_are_distributions(seed in any::<u64>(), groups in 1usize..=4, m in 1usize..=9, scale in 0.1f64..50.0) {
        let mut r = rng(seed);
        let dims = [2, groups * m, 3, 3];
        let x = rand_vec(&mut r, dims.iter().product(), -scale, scale);
        let y = softmax_over_axis(&Tensor32::from_f64(dims, &x).unwrap(), m).unwrap();
        for n in 0..2 {
            for g in 0..groups {
                for i in 0..3 {
                    for j in 0..3 {
                        let vals: Vec<f64> = (0..m).map(|t| y.at(n, g * m + t, i, j) as f64).collect();
                        let s: f64 = vals.iter().sum();
                        prop_assert!((s - 1.0).abs() <= 1e-6, "sum {}", s);
                        prop_assert!(vals.iter().cloned().fold(f64::INFINITY, f64::min) > 0.0);
                    }
                }
            }
        }
        if scale < 20.0 {
            let o = softmax_oracle(&x, dims, m);
            prop_assert!(max_abs_diff(&to_f64(&y), &o) < 1e-6);
        }
    }
}
