//! Tape-recorded versions of the filter predictor and blur providers.

use crate::adaptive::{BlurKind, BlurProvider};
use crate::error::{arg_err, Result};
use crate::predictor::{FilterField, PredictorParams};
use crate::scalar::Scalar;

use super::tape::{Tape, Var};

/// Whether batchnorm uses batch statistics (and updates running ones).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Tape handles for one predictor's parameters, in checkpoint order.
#[derive(Clone, Copy, Debug)]
pub struct PredictorVars {
    pub conv_weight: Var,
    pub conv_bias: Var,
    pub bn_gamma: Var,
    pub bn_beta: Var,
}

impl PredictorVars {
    pub fn as_array(&self) -> [Var; 4] {
        [self.conv_weight, self.conv_bias, self.bn_gamma, self.bn_beta]
    }
}

/// Records the predictor's parameters as leaves. Frozen predictors are
/// recorded as constants.
pub fn bind_predictor<T: Scalar>(tape: &mut Tape<T>, p: &PredictorParams<T>, learnable: bool) -> PredictorVars {
    let mut leaf = |t: &crate::tensor::Tensor<T>| {
        if learnable {
            tape.param(t.clone())
        } else {
            tape.constant(t.clone())
        }
    };
    PredictorVars {
        conv_weight: leaf(&p.conv.weight),
        conv_bias: leaf(&p.conv.bias),
        bn_gamma: leaf(&p.bn.gamma),
        bn_beta: leaf(&p.bn.beta),
    }
}

/// Conv + batchnorm logits, `(n, g k^2, h, w)`.
pub fn predictor_logits<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    p: &mut PredictorParams<T>,
    vars: &PredictorVars,
    mode: Mode,
) -> Result<Var> {
    p.check()?;
    let y = tape.conv2d(x, vars.conv_weight, Some(vars.conv_bias), 1, p.conv.padding, p.conv.pad_mode)?;
    match mode {
        Mode::Train => tape.batchnorm_train(y, vars.bn_gamma, vars.bn_beta, &mut p.bn),
        Mode::Eval => tape.batchnorm_eval(y, vars.bn_gamma, vars.bn_beta, &p.bn),
    }
}

/// Predicted filter field (softmax over each block of `k^2` logits).
pub fn predictor_field<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    p: &mut PredictorParams<T>,
    vars: &PredictorVars,
    mode: Mode,
) -> Result<Var> {
    let logits = predictor_logits(tape, x, p, vars, mode)?;
    tape.softmax(logits, p.cfg.taps())
}

/// Records `provider.blur(x)` on the tape. Adaptive providers need `vars`
/// from [`bind_predictor`].
pub fn blur_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    provider: &mut BlurProvider<T>,
    vars: Option<&PredictorVars>,
    mode: Mode,
) -> Result<Var> {
    let kind = provider.kind;
    let k = provider.k;
    match kind {
        BlurKind::None => Ok(x),
        BlurKind::Gaussian { .. } | BlurKind::Box => {
            let field = provider
                .field(tape.value(x))?
                .map(FilterField::into_weights)
                .expect("fixed providers always produce a field");
            let f = tape.constant(field);
            tape.adaptive_blur(x, f, 1, k)
        }
        BlurKind::ImageAdaptive | BlurKind::SpatialAdaptive | BlurKind::SpatialChannelAdaptive => {
            let Some(vars) = vars else {
                return arg_err("blur_on_tape", format!("{kind} provider needs predictor handles"));
            };
            let p = provider.predictor.as_mut().ok_or(crate::Error::InvalidArgument {
                op: "blur_on_tape",
                detail: format!("{kind} provider has no predictor"),
            })?;
            let groups = p.cfg.groups;
            let taps = p.cfg.taps();
            let field = if kind == BlurKind::ImageAdaptive {
                let s = tape.value(x).shape();
                let logits = predictor_logits(tape, x, p, vars, mode)?;
                let pooled = tape.global_avg_pool(logits);
                let filt = tape.softmax(pooled, taps)?;
                tape.broadcast(filt, s.h, s.w)?
            } else {
                predictor_field(tape, x, p, vars, mode)?
            };
            tape.adaptive_blur(x, field, groups, k)
        }
    }
}
