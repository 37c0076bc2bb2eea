//! Minibatch SGD training and shift-consistency evaluation.

use std::fmt;
use std::str::FromStr;

use adablur_core::autograd::{Mode, Sgd, SgdConfig, Tape};
use adablur_core::metrics::{classification_consistency, MetricValue};
use adablur_core::{Error, Result, Tensor, Tensor32};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::Classifier;
use crate::task::{shift_image, Dataset, ShiftPair, Split, SyntheticTask};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// Multiply by `gamma` every `every` epochs.
    Step { every: usize, gamma: f64 },
    /// Half-cosine from the base rate down to zero over all epochs.
    Cosine,
}

impl LrSchedule {
    /// Learning rate for `epoch` (0-based) of `epochs`.
    pub fn rate(&self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::Step { every, gamma } => base * gamma.powi((epoch / every.max(1)) as i32),
            LrSchedule::Cosine => 0.5 * base * (1.0 + (std::f64::consts::PI * epoch as f64 / epochs.max(1) as f64).cos()),
        }
    }
}

impl fmt::Display for LrSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LrSchedule::Constant => f.write_str("constant"),
            LrSchedule::Step { every, gamma } => write!(f, "step:{every}:{gamma}"),
            LrSchedule::Cosine => f.write_str("cosine"),
        }
    }
}

impl FromStr for LrSchedule {
    type Err = Error;

    /// `constant`, `cosine`, or `step:<every>:<gamma>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument {
            op: "LrSchedule",
            detail: format!("cannot parse {s:?}"),
        };
        match s {
            "constant" => Ok(LrSchedule::Constant),
            "cosine" => Ok(LrSchedule::Cosine),
            _ => {
                let parts: Vec<&str> = s.split(':').collect();
                if parts.len() != 3 || parts[0] != "step" {
                    return Err(bad());
                }
                Ok(LrSchedule::Step {
                    every: parts[1].parse().map_err(|_| bad())?,
                    gamma: parts[2].parse().map_err(|_| bad())?,
                })
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Base learning rate, momentum and weight decay.
    pub sgd: SgdConfig,
    pub schedule: LrSchedule,
    /// Keep predictor parameters fixed (inference-mode batchnorm inside them).
    pub freeze_predictor: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 6,
            batch_size: 32,
            sgd: SgdConfig::default(),
            schedule: LrSchedule::Cosine,
            freeze_predictor: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean minibatch loss over the epoch.
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochLog>,
    /// Epoch in which the loss became non-finite; training stops there.
    pub diverged_at: Option<usize>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

/// One optimizer step on a minibatch; returns the loss.
pub fn train_step(
    model: &mut Classifier<f32>,
    opt: &mut Sgd<f32>,
    images: Tensor32,
    labels: &[usize],
    freeze_predictor: bool,
) -> Result<f64> {
    let learn_predictor = !freeze_predictor;
    let pmode = if freeze_predictor { Mode::Eval } else { Mode::Train };
    let mut tape = Tape::new();
    let x = tape.constant(images);
    let vars = model.bind(&mut tape, learn_predictor);
    let logits = model.forward_tape(&mut tape, x, &vars, Mode::Train, pmode)?;
    let loss = tape.softmax_cross_entropy(logits, labels)?;
    let value = tape.value(loss).data()[0] as f64;
    if !value.is_finite() {
        return Ok(value);
    }
    let grads = tape.backward(loss)?;
    let handles = vars.learnable();
    let mut params = model.params_mut(learn_predictor);
    let g: Vec<Tensor<f32>> = handles
        .iter()
        .zip(params.iter())
        .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
        .collect();
    let grefs: Vec<&Tensor<f32>> = g.iter().collect();
    opt.step(&mut params, &grefs)?;
    Ok(value)
}

/// Trains `model` on `data`. Minibatch order is a deterministic function of
/// `seed` and the epoch.
pub fn train(model: &mut Classifier<f32>, data: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    if cfg.batch_size == 0 || data.is_empty() {
        return Err(Error::InvalidArgument {
            op: "train",
            detail: "empty data or zero batch size".into(),
        });
    }
    let mut opt = Sgd::new(cfg.sgd);
    let mut outcome = TrainOutcome::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(2 << 50 | epoch as u64);
        order.shuffle(&mut r);
        let lr = cfg.schedule.rate(cfg.sgd.lr, epoch, cfg.epochs);
        opt.cfg.lr = lr;
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let (x, y) = data.batch(chunk)?;
            let loss = train_step(model, &mut opt, x, &y, cfg.freeze_predictor)?;
            if !loss.is_finite() {
                outcome.diverged_at = Some(epoch);
                outcome.epochs.push(EpochLog { epoch, lr, loss });
                return Ok(outcome);
            }
            total += loss;
            batches += 1;
        }
        outcome.epochs.push(EpochLog {
            epoch,
            lr,
            loss: total / batches.max(1) as f64,
        });
    }
    Ok(outcome)
}

/// Batched inference-mode predictions.
pub fn predict_all(model: &Classifier<f32>, images: &Tensor32, batch: usize) -> Result<Vec<usize>> {
    let n = images.shape().n;
    let mut out = Vec::with_capacity(n);
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(batch.max(1)) {
        out.extend(model.predict(&images.select_batch(chunk)?)?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub accuracy: f64,
    /// Top-1 agreement over random shift pairs in `-shift_range..=shift_range`.
    pub consistency: MetricValue,
    /// Agreement between each image of the probed class and its one-pixel
    /// shift; `None` when no class is probed.
    pub unit_shift_consistency: Option<MetricValue>,
}

/// Predictions for both views of every pair.
pub fn pair_predictions(model: &Classifier<f32>, test: &Dataset, pairs: &[ShiftPair], batch: usize) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(batch.max(1)) {
        let mut a = Vec::with_capacity(chunk.len());
        let mut b = Vec::with_capacity(chunk.len());
        for p in chunk {
            let img = test.images.select_batch(&[p.index])?;
            a.push(shift_image(&img, p.a.0, p.a.1));
            b.push(shift_image(&img, p.b.0, p.b.1));
        }
        let pa = model.predict(&Tensor::stack_batch(&a)?)?;
        let pb = model.predict(&Tensor::stack_batch(&b)?)?;
        out.extend(pa.into_iter().zip(pb));
    }
    Ok(out)
}

/// Accuracy on the unshifted test split plus shift consistency.
/// `probe_class` selects the class whose one-pixel-shift consistency is
/// reported separately.
pub fn evaluate(
    model: &Classifier<f32>,
    task: &SyntheticTask,
    test: &Dataset,
    pair_count: usize,
    pair_seed: u64,
    probe_class: Option<usize>,
) -> Result<EvalResult> {
    const BATCH: usize = 64;
    let preds = predict_all(model, &test.images, BATCH)?;
    let correct = preds.iter().zip(&test.labels).filter(|(p, l)| p == l).count();
    let pairs = task.shift_pairs(pair_count, task.shift_range, pair_seed);
    let consistency = classification_consistency(&pair_predictions(model, test, &pairs, BATCH)?)?;
    let unit_shift_consistency = match probe_class {
        Some(c) => {
            let unit = task.unit_shift_pairs(c);
            Some(classification_consistency(&pair_predictions(model, test, &unit, BATCH)?)?)
        }
        None => None,
    };
    Ok(EvalResult {
        accuracy: correct as f64 / test.len() as f64,
        consistency,
        unit_shift_consistency,
    })
}

/// Convenience: test split of `task`.
pub fn test_set(task: &SyntheticTask) -> Result<Dataset> {
    task.dataset(Split::Test)
}
