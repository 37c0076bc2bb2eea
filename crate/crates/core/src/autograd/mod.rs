//! Reverse-mode differentiation for the predictor + blur + subsample
//! pipeline, SGD, and finite-difference checking.

mod gradcheck;
mod layers;
mod sgd;
mod tape;

pub use gradcheck::{check_gradients, relative_error, GradCheckReport, DEFAULT_STEP};
pub use layers::{bind_predictor, blur_on_tape, predictor_field, predictor_logits, Mode, PredictorVars};
pub use sgd::{sgd_step, Sgd, SgdConfig};
pub use tape::{Gradients, Tape, TapeNode, Var};
