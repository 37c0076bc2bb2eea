//! Central-difference verification of tape gradients.

use crate::error::Result;
use crate::tensor::Tensor;

use super::tape::{Tape, Var};

/// Step used for central differences.
pub const DEFAULT_STEP: f64 = 1e-3;

/// `|a - f| / max(|a|, |f|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// `(parameter name, max relative error over its elements)`
    pub per_param: Vec<(String, f64)>,
    pub step: f64,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.per_param.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }
}

/// Compares tape gradients of `build` against central differences.
///
/// `build` receives a fresh tape and one learnable leaf per entry of
/// `params` and must return a scalar loss. It is re-run twice per element.
pub fn check_gradients<F>(params: &[(String, Tensor<f64>)], step: f64, mut build: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|(_, t)| tape.param(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = values.iter().map(|v| t.param(v.clone())).collect();
        let l = build(&mut t, &vs)?;
        Ok(t.value(l).data()[0])
    };

    let mut values: Vec<Tensor<f64>> = params.iter().map(|(_, t)| t.clone()).collect();
    let mut per_param = Vec::with_capacity(params.len());
    for (pi, (name, t)) in params.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[pi], t.shape());
        let mut worst = 0.0f64;
        for e in 0..t.len() {
            let orig = values[pi].data()[e];
            values[pi].data_mut()[e] = orig + step;
            let up = eval(&values)?;
            values[pi].data_mut()[e] = orig - step;
            let down = eval(&values)?;
            values[pi].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * step);
            worst = worst.max(relative_error(analytic.data()[e], numeric));
        }
        per_param.push((name.clone(), worst));
    }
    Ok(GradCheckReport { per_param, step })
}
