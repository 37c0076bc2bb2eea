//! A small classifier with a blur provider before each downsampling step.
//!
//! Each stage is `conv 3x3 (stride 1) -> batchnorm -> ReLU -> blur ->
//! subsample (2)`; the predictor of an adaptive blur sees the post-ReLU
//! features it filters. The head is global average pooling followed by a
//! `1 x 1` linear layer.

use std::path::Path;

use adablur_core::adaptive::DEFAULT_SIGMA;
use adablur_core::autograd::{bind_predictor, blur_on_tape, Mode, PredictorVars, Tape, Var};
use adablur_core::io::{Checkpoint, KvConfig};
use adablur_core::norm::BatchNorm;
use adablur_core::ops::{global_avg_pool, strided_subsample};
use adablur_core::{
    conv2d, BlurKind, BlurProvider, ConvParams, Error, PadMode, PredictorConfig, PredictorParams, Result, Scalar,
    Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub in_channels: usize,
    /// Output channels of each stage; one downsampling per stage.
    pub widths: Vec<usize>,
    pub classes: usize,
    pub blur: BlurKind,
    /// Blur filter side.
    pub k: usize,
    /// Filter groups for `grouped`; other kinds use one filter for all channels.
    pub groups: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            widths: vec![8, 16, 16],
            classes: 4,
            blur: BlurKind::None,
            k: 3,
            groups: 8,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) || self.in_channels == 0 || self.classes < 2 {
            return Err(Error::InvalidArgument {
                op: "ClassifierConfig",
                detail: format!("widths {:?}, {} classes", self.widths, self.classes),
            });
        }
        if self.blur == BlurKind::SpatialChannelAdaptive {
            for &w in &self.widths {
                if w % self.groups.max(1) != 0 || self.groups == 0 {
                    return Err(Error::GroupMismatch {
                        groups: self.groups,
                        channels: w,
                    });
                }
            }
        }
        if self.blur != BlurKind::None && (self.k == 0 || self.k % 2 == 0) {
            return Err(Error::EvenKernel(self.k));
        }
        Ok(())
    }

    fn provider<T: Scalar, R: Rng + ?Sized>(&self, width: usize, rng: &mut R) -> Result<BlurProvider<T>> {
        Ok(match self.blur {
            BlurKind::None => BlurProvider::none(),
            BlurKind::Gaussian { sigma } => BlurProvider::gaussian(self.k, sigma)?,
            BlurKind::Box => BlurProvider::boxed(self.k)?,
            kind => {
                let g = if kind == BlurKind::SpatialChannelAdaptive { self.groups } else { 1 };
                BlurProvider::adaptive(kind, PredictorParams::init(PredictorConfig::new(width, self.k, g)?, rng)?)?
            }
        })
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        kv.set("in_channels", self.in_channels);
        kv.set(
            "widths",
            self.widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","),
        );
        kv.set("classes", self.classes);
        kv.set("blur", self.blur.name());
        if let BlurKind::Gaussian { sigma } = self.blur {
            kv.set("sigma", sigma);
        }
        kv.set("k", self.k);
        kv.set("groups", self.groups);
        kv
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let mut blur: BlurKind = kv.parse_opt("blur")?.unwrap_or(d.blur);
        if let BlurKind::Gaussian { .. } = blur {
            blur = BlurKind::Gaussian {
                sigma: kv.parse_opt("sigma")?.unwrap_or(DEFAULT_SIGMA),
            };
        }
        let cfg = Self {
            in_channels: kv.parse_opt("in_channels")?.unwrap_or(d.in_channels),
            widths: kv.parse_list("widths")?.unwrap_or(d.widths),
            classes: kv.parse_opt("classes")?.unwrap_or(d.classes),
            blur,
            k: kv.parse_opt("k")?.unwrap_or(d.k),
            groups: kv.parse_opt("groups")?.unwrap_or(d.groups),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage<T> {
    pub conv: ConvParams<T>,
    pub bn: BatchNorm<T>,
    pub blur: BlurProvider<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classifier<T> {
    pub cfg: ClassifierConfig,
    pub stages: Vec<Stage<T>>,
    /// `(classes, last width, 1, 1)` linear layer.
    pub head: ConvParams<T>,
}

/// Tape handles of one stage's parameters.
#[derive(Clone, Debug)]
pub struct StageVars {
    pub conv_weight: Var,
    pub conv_bias: Var,
    pub bn_gamma: Var,
    pub bn_beta: Var,
    pub predictor: Option<PredictorVars>,
}

#[derive(Clone, Debug)]
pub struct ModelVars {
    pub stages: Vec<StageVars>,
    pub head_weight: Var,
    pub head_bias: Var,
    learn_predictor: bool,
}

impl ModelVars {
    /// Learnable handles in [`Classifier::params_mut`] order.
    pub fn learnable(&self) -> Vec<Var> {
        let mut v = Vec::new();
        for s in &self.stages {
            v.extend([s.conv_weight, s.conv_bias, s.bn_gamma, s.bn_beta]);
            if self.learn_predictor {
                if let Some(p) = &s.predictor {
                    v.extend(p.as_array());
                }
            }
        }
        v.extend([self.head_weight, self.head_bias]);
        v
    }
}

impl<T: Scalar> Classifier<T> {
    /// Backbone weights come from `backbone_rng` and predictors from
    /// `predictor_rng`, so models that differ only in blur kind share their
    /// backbone initialization.
    pub fn init<R: Rng + ?Sized>(cfg: ClassifierConfig, backbone_rng: &mut R, predictor_rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut stages = Vec::with_capacity(cfg.widths.len());
        let mut c_in = cfg.in_channels;
        for &w in &cfg.widths {
            stages.push(Stage {
                conv: ConvParams::init_uniform(w, c_in, 3, PadMode::Zero, backbone_rng)?,
                bn: BatchNorm::identity(w),
                blur: cfg.provider(w, predictor_rng)?,
            });
            c_in = w;
        }
        let head = ConvParams::init_uniform(cfg.classes, c_in, 1, PadMode::Zero, backbone_rng)?;
        Ok(Self { cfg, stages, head })
    }

    /// Replaces every adaptive predictor with an all-zero one, so each
    /// predicts the `k x k` average filter.
    pub fn zero_predictors(&mut self) -> Result<()> {
        for s in &mut self.stages {
            if let Some(p) = &mut s.blur.predictor {
                *p = PredictorParams::zeros(p.cfg)?;
            }
        }
        Ok(())
    }

    /// Same weights with every stage's blur swapped for a fixed provider.
    pub fn with_fixed_blur(&self, kind: BlurKind) -> Result<Self> {
        let mut m = self.clone();
        m.cfg.blur = kind;
        for s in &mut m.stages {
            s.blur = match kind {
                BlurKind::None => BlurProvider::none(),
                BlurKind::Gaussian { sigma } => BlurProvider::gaussian(self.cfg.k, sigma)?,
                BlurKind::Box => BlurProvider::boxed(self.cfg.k)?,
                other => {
                    return Err(Error::InvalidArgument {
                        op: "with_fixed_blur",
                        detail: format!("{other} is adaptive"),
                    })
                }
            };
        }
        Ok(m)
    }

    pub fn has_predictors(&self) -> bool {
        self.stages.iter().any(|s| s.blur.predictor.is_some())
    }

    /// Parameters updated by the optimizer, in [`ModelVars::learnable`] order.
    pub fn params_mut(&mut self, learn_predictor: bool) -> Vec<&mut Tensor<T>> {
        let mut v: Vec<&mut Tensor<T>> = Vec::new();
        for s in &mut self.stages {
            v.push(&mut s.conv.weight);
            v.push(&mut s.conv.bias);
            v.push(&mut s.bn.gamma);
            v.push(&mut s.bn.beta);
            if learn_predictor {
                if let Some(p) = &mut s.blur.predictor {
                    v.push(&mut p.conv.weight);
                    v.push(&mut p.conv.bias);
                    v.push(&mut p.bn.gamma);
                    v.push(&mut p.bn.beta);
                }
            }
        }
        v.push(&mut self.head.weight);
        v.push(&mut self.head.bias);
        v
    }

    /// Number of learnable scalars, and how many of them belong to predictors.
    pub fn param_count(&self) -> (usize, usize) {
        let mut total = self.head.weight.len() + self.head.bias.len();
        let mut pred = 0;
        for s in &self.stages {
            total += s.conv.weight.len() + s.conv.bias.len() + s.bn.gamma.len() + s.bn.beta.len();
            if let Some(p) = &s.blur.predictor {
                pred += p.conv.weight.len() + p.conv.bias.len() + p.bn.gamma.len() + p.bn.beta.len();
            }
        }
        (total + pred, pred)
    }

    pub fn bind(&self, tape: &mut Tape<T>, learn_predictor: bool) -> ModelVars {
        let stages = self
            .stages
            .iter()
            .map(|s| StageVars {
                conv_weight: tape.param(s.conv.weight.clone()),
                conv_bias: tape.param(s.conv.bias.clone()),
                bn_gamma: tape.param(s.bn.gamma.clone()),
                bn_beta: tape.param(s.bn.beta.clone()),
                predictor: s.blur.predictor.as_ref().map(|p| bind_predictor(tape, p, learn_predictor)),
            })
            .collect();
        ModelVars {
            stages,
            head_weight: tape.param(self.head.weight.clone()),
            head_bias: tape.param(self.head.bias.clone()),
            learn_predictor,
        }
    }

    /// Records the forward pass and returns `(n, classes, 1, 1)` logits.
    /// `predictor_mode` selects batchnorm statistics inside the predictors.
    pub fn forward_tape(
        &mut self,
        tape: &mut Tape<T>,
        x: Var,
        vars: &ModelVars,
        mode: Mode,
        predictor_mode: Mode,
    ) -> Result<Var> {
        let mut h = x;
        for (s, v) in self.stages.iter_mut().zip(&vars.stages) {
            let y = tape.conv2d(h, v.conv_weight, Some(v.conv_bias), 1, s.conv.padding, s.conv.pad_mode)?;
            let y = match mode {
                Mode::Train => tape.batchnorm_train(y, v.bn_gamma, v.bn_beta, &mut s.bn)?,
                Mode::Eval => tape.batchnorm_eval(y, v.bn_gamma, v.bn_beta, &s.bn)?,
            };
            let y = tape.relu(y);
            let y = blur_on_tape(tape, y, &mut s.blur, v.predictor.as_ref(), predictor_mode)?;
            h = tape.subsample(y, 2)?;
        }
        let pooled = tape.global_avg_pool(h);
        tape.conv2d(pooled, vars.head_weight, Some(vars.head_bias), 1, 0, PadMode::Zero)
    }

    /// Inference-mode logits `(n, classes, 1, 1)` without recording a tape.
    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for s in &self.stages {
            let y = s.bn.forward_eval(&conv2d(&h, &s.conv)?)?.relu();
            h = strided_subsample(&s.blur.blur(&y)?, 2)?;
        }
        conv2d(&global_avg_pool(&h), &self.head)
    }

    /// Top-1 class of every sample (lowest index on ties).
    pub fn predict(&self, x: &Tensor<T>) -> Result<Vec<usize>> {
        let z = self.logits(x)?;
        let c = self.cfg.classes;
        Ok(z.data()
            .chunks(c)
            .map(|row| {
                let mut best = 0;
                for (i, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect())
    }

    /// Stage inputs to each blur (post-ReLU features), inference mode.
    pub fn blur_inputs(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let mut h = x.clone();
        let mut out = Vec::new();
        for s in &self.stages {
            let y = s.bn.forward_eval(&conv2d(&h, &s.conv)?)?.relu();
            h = strided_subsample(&s.blur.blur(&y)?, 2)?;
            out.push(y);
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint<T> {
        let mut ck = Checkpoint::new();
        for (i, s) in self.stages.iter().enumerate() {
            ck.insert(format!("stage{i}.conv.weight"), s.conv.weight.clone());
            ck.insert(format!("stage{i}.conv.bias"), s.conv.bias.clone());
            ck.insert(format!("stage{i}.bn.gamma"), s.bn.gamma.clone());
            ck.insert(format!("stage{i}.bn.beta"), s.bn.beta.clone());
            ck.insert(format!("stage{i}.bn.mean"), s.bn.running_mean.clone());
            ck.insert(format!("stage{i}.bn.var"), s.bn.running_var.clone());
            if let Some(p) = &s.blur.predictor {
                ck.insert_predictor(&format!("stage{i}."), p);
            }
        }
        ck.insert("head.weight", self.head.weight.clone());
        ck.insert("head.bias", self.head.bias.clone());
        ck
    }

    pub fn from_checkpoint(cfg: ClassifierConfig, ck: &Checkpoint<T>) -> Result<Self> {
        // Shapes and providers come from a throwaway init; all values are replaced.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        let mut m = Self::init(cfg, &mut rng, &mut rng2)?;
        for (i, s) in m.stages.iter_mut().enumerate() {
            let c = |name: &str| format!("stage{i}.{name}");
            s.conv.weight = ck.require(&c("conv.weight"), s.conv.weight.shape())?;
            s.conv.bias = ck.require(&c("conv.bias"), s.conv.bias.shape())?;
            s.bn.gamma = ck.require(&c("bn.gamma"), s.bn.gamma.shape())?;
            s.bn.beta = ck.require(&c("bn.beta"), s.bn.beta.shape())?;
            s.bn.running_mean = ck.require(&c("bn.mean"), s.bn.running_mean.shape())?;
            s.bn.running_var = ck.require(&c("bn.var"), s.bn.running_var.shape())?;
            if let Some(p) = &mut s.blur.predictor {
                *p = ck.predictor(&format!("stage{i}."), p.cfg)?;
            }
        }
        m.head.weight = ck.require("head.weight", m.head.weight.shape())?;
        m.head.bias = ck.require("head.bias", m.head.bias.shape())?;
        Ok(m)
    }

    /// Writes `model.cfg` and the checkpoint tensors into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(MODEL_CONFIG), self.cfg.to_kv().to_text())?;
        self.to_checkpoint().save(dir)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let cfg = ClassifierConfig::from_kv(&KvConfig::read(dir.join(MODEL_CONFIG))?)?;
        Self::from_checkpoint(cfg, &Checkpoint::load(dir)?)
    }
}

/// Name of the model configuration file inside a saved model directory.
pub const MODEL_CONFIG: &str = "model.cfg";
