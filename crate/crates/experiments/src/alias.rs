//! The one-dimensional aliasing example: a period-4 binary signal and its
//! one-step shift, max-pooled with a `1 x 2` window and stride 2.

use adablur_core::adaptive::DEFAULT_SIGMA;
use adablur_core::ops::{max_pool2d, strided_subsample};
use adablur_core::{BlurKind, BlurProvider, PredictorConfig, PredictorParams, Result, Tensor32};

/// The signal and the same signal shifted by one position.
pub const SIGNALS: [&str; 2] = ["001100110011", "011001100110"];

/// `"0110"` as a `(1, 1, 1, len)` tensor.
pub fn bits_to_tensor(bits: &str) -> Tensor32 {
    let v: Vec<f32> = bits.bytes().map(|b| if b == b'1' { 1.0 } else { 0.0 }).collect();
    let len = v.len();
    Tensor32::from_vec([1, 1, 1, len], v).expect("row tensor")
}

/// Rounds each value to the nearest bit.
pub fn to_bits(values: &[f32]) -> String {
    values.iter().map(|&v| if v >= 0.5 { '1' } else { '0' }).collect()
}

/// Plain max pooling, window `1 x 2`, stride 2.
pub fn maxpool_bits(bits: &str) -> Result<String> {
    let y = max_pool2d(&bits_to_tensor(bits), (1, 2), 2)?;
    Ok(to_bits(y.data()))
}

/// Max pooling with the blur inserted between the dense max and the
/// subsampling: `max (stride 1) -> blur -> subsample (2)`.
pub fn antialiased_maxpool(bits: &str, provider: &BlurProvider<f32>) -> Result<Vec<f32>> {
    let dense = max_pool2d(&bits_to_tensor(bits), (1, 2), 1)?;
    let y = strided_subsample(&provider.blur(&dense)?, 2)?;
    Ok(y.into_vec())
}

/// Providers shown by the demo. Adaptive kinds use all-zero predictors, which
/// predict the `k x k` average filter until trained.
pub fn demo_providers(k: usize) -> Result<Vec<BlurProvider<f32>>> {
    let zero = || PredictorParams::zeros(PredictorConfig::new(1, k, 1)?);
    Ok(vec![
        BlurProvider::none(),
        BlurProvider::gaussian(k, DEFAULT_SIGMA)?,
        BlurProvider::boxed(k)?,
        BlurProvider::adaptive(BlurKind::ImageAdaptive, zero()?)?,
        BlurProvider::adaptive(BlurKind::SpatialAdaptive, zero()?)?,
        BlurProvider::adaptive(BlurKind::SpatialChannelAdaptive, zero()?)?,
    ])
}

#[derive(Clone, Debug, PartialEq)]
pub struct AliasRow {
    pub provider: String,
    /// Downsampled values for each of [`SIGNALS`].
    pub outputs: [Vec<f32>; 2],
    pub bits: [String; 2],
    /// Positions where the rounded outputs differ.
    pub disagreement: usize,
    /// Sum of absolute differences between the two outputs.
    pub gap: f64,
}

pub fn alias_row(provider: &BlurProvider<f32>) -> Result<AliasRow> {
    let a = antialiased_maxpool(SIGNALS[0], provider)?;
    let b = antialiased_maxpool(SIGNALS[1], provider)?;
    let bits = [to_bits(&a), to_bits(&b)];
    let disagreement = bits[0].chars().zip(bits[1].chars()).filter(|(x, y)| x != y).count();
    let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs() as f64).sum();
    Ok(AliasRow {
        provider: provider.kind.name().to_string(),
        outputs: [a, b],
        bits,
        disagreement,
        gap,
    })
}

/// One row per provider, in the order given.
pub fn alias_demo(providers: &[BlurProvider<f32>]) -> Result<Vec<AliasRow>> {
    providers.iter().map(alias_row).collect()
}

pub fn render(rows: &[AliasRow]) -> Result<String> {
    let mut s = String::new();
    s.push_str("maxpool k=1x2 stride=2\n");
    for sig in SIGNALS {
        s.push_str(&format!("  {sig} -> {}\n", maxpool_bits(sig)?));
    }
    s.push_str("\nmax(stride 1) -> blur -> subsample(2)\n");
    s.push_str(&format!(
        "{:<10} {:<8} {:<8} {:>12} {:>8}  values\n",
        "blur", "out[0]", "out[1]", "disagreement", "gap"
    ));
    for r in rows {
        let fmt = |v: &[f32]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
        s.push_str(&format!(
            "{:<10} {:<8} {:<8} {:>12} {:>8.3}  [{}] / [{}]\n",
            r.provider,
            r.bits[0],
            r.bits[1],
            r.disagreement,
            r.gap,
            fmt(&r.outputs[0]),
            fmt(&r.outputs[1])
        ));
    }
    Ok(s)
}
