//! Provider ablation and group-count sweep on the synthetic task.
//!
//! Every provider trains the same classifier from the same backbone
//! initialization, data order and evaluation pairs; only the blur before
//! each downsampling differs.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use adablur_core::io::{KvConfig, MetricRecord, MetricReport};
use adablur_core::{BlurKind, Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{Classifier, ClassifierConfig};
use crate::task::{Dataset, Pattern, Split, SyntheticTask};
use crate::train::{evaluate, train, LrSchedule, TrainConfig, TrainOutcome};

/// Blur kind plus group count (only meaningful for `grouped`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProviderSpec {
    pub blur: BlurKind,
    pub groups: usize,
}

impl ProviderSpec {
    pub fn new(blur: BlurKind) -> Self {
        Self { blur, groups: 1 }
    }

    pub fn grouped(groups: usize) -> Self {
        Self {
            blur: BlurKind::SpatialChannelAdaptive,
            groups,
        }
    }

    /// `grouped_g8` for grouped providers, the kind name otherwise.
    pub fn label(&self) -> String {
        match self.blur {
            BlurKind::SpatialChannelAdaptive => format!("{}_g{}", self.blur.name(), self.groups),
            b => b.name().to_string(),
        }
    }
}

impl fmt::Display for ProviderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.blur {
            BlurKind::SpatialChannelAdaptive => write!(f, "{}:{}", self.blur.name(), self.groups),
            b => f.write_str(b.name()),
        }
    }
}

/// `gaussian`, `spatial`, `grouped:8`, ...
impl FromStr for ProviderSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, groups) = match s.split_once(':') {
            Some((k, g)) => (
                k,
                Some(g.parse::<usize>().map_err(|_| Error::InvalidArgument {
                    op: "ProviderSpec",
                    detail: format!("bad group count in {s:?}"),
                })?),
            ),
            None => (s, None),
        };
        let blur: BlurKind = kind.parse()?;
        match (blur, groups) {
            (BlurKind::SpatialChannelAdaptive, g) => Ok(Self::grouped(g.unwrap_or(8))),
            (b, None) => Ok(Self::new(b)),
            (b, Some(_)) => Err(Error::InvalidArgument {
                op: "ProviderSpec",
                detail: format!("{} takes no group count", b.name()),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationSpec {
    /// Compared in this order.
    pub providers: Vec<ProviderSpec>,
    /// Group counts for [`run_group_sweep`].
    pub groups: Vec<usize>,
    /// Stage widths and blur filter side; blur, groups and class count are
    /// filled in per run.
    pub widths: Vec<usize>,
    pub k: usize,
    pub train: TrainConfig,
    /// Seeds initialization, data order and evaluation pairs.
    pub seed: u64,
    /// Random shift pairs for consistency.
    pub pair_count: usize,
}

impl Default for AblationSpec {
    fn default() -> Self {
        Self {
            providers: vec![
                ProviderSpec::new(BlurKind::None),
                ProviderSpec::new(BlurKind::Gaussian {
                    sigma: adablur_core::adaptive::DEFAULT_SIGMA,
                }),
                ProviderSpec::new(BlurKind::SpatialAdaptive),
                ProviderSpec::grouped(8),
            ],
            groups: vec![1, 2, 4, 8, 16],
            widths: vec![16, 16, 16],
            k: 3,
            train: TrainConfig::default(),
            seed: 0,
            pair_count: 512,
        }
    }
}

impl AblationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.providers.len() < 2 {
            return Err(Error::InvalidArgument {
                op: "AblationSpec",
                detail: format!("need at least two providers, got {}", self.providers.len()),
            });
        }
        if self.pair_count == 0 || self.train.epochs == 0 {
            return Err(Error::InvalidArgument {
                op: "AblationSpec",
                detail: "pair_count and epochs must be positive".into(),
            });
        }
        for p in &self.providers {
            self.model_config(*p, 2).validate()?;
        }
        Ok(())
    }

    pub fn model_config(&self, p: ProviderSpec, classes: usize) -> ClassifierConfig {
        ClassifierConfig {
            in_channels: 1,
            widths: self.widths.clone(),
            classes,
            blur: p.blur,
            k: self.k,
            groups: p.groups,
        }
    }

    pub fn to_kv(&self) -> KvConfig {
        let join = |v: Vec<String>| v.join(",");
        let mut kv = KvConfig::default();
        kv.set("providers", join(self.providers.iter().map(|p| p.to_string()).collect()));
        kv.set("groups", join(self.groups.iter().map(|g| g.to_string()).collect()));
        kv.set("widths", join(self.widths.iter().map(|w| w.to_string()).collect()));
        kv.set("k", self.k);
        kv.set("epochs", self.train.epochs);
        kv.set("batch_size", self.train.batch_size);
        kv.set("lr", self.train.sgd.lr);
        kv.set("momentum", self.train.sgd.momentum);
        kv.set("weight_decay", self.train.sgd.weight_decay);
        kv.set("schedule", self.train.schedule);
        kv.set("freeze_predictor", self.train.freeze_predictor);
        kv.set("seed", self.seed);
        kv.set("pair_count", self.pair_count);
        kv
    }

    /// Missing keys keep their defaults. Not validated: [`run_ablation`] and
    /// [`run_group_sweep`] check what they need.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let t = d.train;
        Ok(Self {
            providers: kv.parse_list("providers")?.unwrap_or(d.providers),
            groups: kv.parse_list("groups")?.unwrap_or(d.groups),
            widths: kv.parse_list("widths")?.unwrap_or(d.widths),
            k: kv.parse_opt("k")?.unwrap_or(d.k),
            train: TrainConfig {
                epochs: kv.parse_opt("epochs")?.unwrap_or(t.epochs),
                batch_size: kv.parse_opt("batch_size")?.unwrap_or(t.batch_size),
                sgd: adablur_core::autograd::SgdConfig {
                    lr: kv.parse_opt("lr")?.unwrap_or(t.sgd.lr),
                    momentum: kv.parse_opt("momentum")?.unwrap_or(t.sgd.momentum),
                    weight_decay: kv.parse_opt("weight_decay")?.unwrap_or(t.sgd.weight_decay),
                },
                schedule: kv.parse_opt::<LrSchedule>("schedule")?.unwrap_or(t.schedule),
                freeze_predictor: kv.parse_opt("freeze_predictor")?.unwrap_or(t.freeze_predictor),
            },
            seed: kv.parse_opt("seed")?.unwrap_or(d.seed),
            pair_count: kv.parse_opt("pair_count")?.unwrap_or(d.pair_count),
        })
    }
}

/// Outcome of one provider.
#[derive(Clone, Debug, PartialEq)]
pub struct ProviderResult {
    pub provider: ProviderSpec,
    pub report: MetricReport,
    pub outcome: TrainOutcome,
    pub model: Classifier<f32>,
}

impl ProviderResult {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.report.get(name).map(|r| r.value)
    }

    pub fn diverged(&self) -> bool {
        self.outcome.diverged_at.is_some()
    }
}

/// Class whose one-pixel-shift consistency is reported: the finest
/// checkerboard in the vocabulary, if any.
pub fn probe_class(task: &SyntheticTask) -> Option<usize> {
    task.vocabulary
        .iter()
        .enumerate()
        .filter_map(|(i, p)| match p {
            Pattern::Checkerboard { cell } => Some((*cell, i)),
            _ => None,
        })
        .min()
        .map(|(_, i)| i)
}

/// Metric name of the one-pixel-shift consistency of the probed class.
pub fn shift1_metric(task: &SyntheticTask) -> Option<String> {
    probe_class(task).map(|c| format!("consistency_shift1_{}", task.vocabulary[c]))
}

/// Separate streams for backbone and predictor initialization so every
/// provider starts from the same backbone weights.
pub fn init_model(cfg: ClassifierConfig, seed: u64) -> Result<Classifier<f32>> {
    let mut backbone = ChaCha8Rng::seed_from_u64(seed);
    let mut predictor = ChaCha8Rng::seed_from_u64(seed);
    predictor.set_stream(1);
    Classifier::init(cfg, &mut backbone, &mut predictor)
}

fn train_and_report(
    task: &SyntheticTask,
    train_set: &Dataset,
    test_set: &Dataset,
    spec: &AblationSpec,
    provider: ProviderSpec,
) -> Result<ProviderResult> {
    let cfg = spec.model_config(provider, task.classes());
    let mut model = init_model(cfg, spec.seed)?;
    let outcome = train(&mut model, train_set, &spec.train, spec.seed)?;
    let (total, predictor) = model.param_count();
    let seed = spec.seed;
    let mut report = MetricReport::default();
    if outcome.diverged_at.is_none() {
        let probe = probe_class(task);
        let ev = evaluate(&model, task, test_set, spec.pair_count, seed, probe)?;
        report.push(MetricRecord::scalar("accuracy", ev.accuracy, seed));
        report.push(MetricRecord::new("consistency", ev.consistency, seed));
        if let (Some(v), Some(name)) = (ev.unit_shift_consistency, shift1_metric(task)) {
            report.push(MetricRecord::new(name, v, seed));
        }
        if let Some(l) = outcome.final_loss() {
            report.push(MetricRecord::scalar("final_loss", l, seed));
        }
    }
    report.push(MetricRecord::scalar("diverged", outcome.diverged_at.is_some() as u8 as f64, seed));
    report.push(MetricRecord::scalar("epochs_completed", outcome.epochs.len() as f64, seed));
    report.push(MetricRecord::scalar("param_count", total as f64, seed));
    report.push(MetricRecord::scalar("predictor_param_count", predictor as f64, seed));
    Ok(ProviderResult {
        provider,
        report,
        outcome,
        model,
    })
}

fn datasets(task: &SyntheticTask) -> Result<(Dataset, Dataset)> {
    Ok((task.dataset(Split::Train)?, task.dataset(Split::Test)?))
}

/// Trains one classifier per provider, in order. A provider whose loss turns
/// NaN is reported with `diverged = 1` and no accuracy or consistency; the
/// remaining providers still run. With `out`, each provider writes
/// `<out>/<label>/report.txt` and its checkpoint under `<out>/<label>/model`,
/// and a summary table goes to `<out>/ablation.tsv`.
pub fn run_ablation(task: &SyntheticTask, spec: &AblationSpec, out: Option<&Path>) -> Result<Vec<ProviderResult>> {
    spec.validate()?;
    task.validate()?;
    let (train_set, test_set) = datasets(task)?;
    let mut results = Vec::with_capacity(spec.providers.len());
    for &p in &spec.providers {
        results.push(train_and_report(task, &train_set, &test_set, spec, p)?);
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("ablation.cfg"), spec.to_kv().to_text())?;
        fs::write(dir.join("task.cfg"), task.to_kv().to_text())?;
        for r in &results {
            let sub = dir.join(r.provider.label());
            fs::create_dir_all(&sub)?;
            r.report.write(sub.join("report.txt"))?;
            if !r.diverged() {
                r.model.save(sub.join("model"))?;
            }
        }
        fs::write(dir.join("ablation.tsv"), summary_tsv(task, &results))?;
    }
    Ok(results)
}

/// Tab-separated summary, one row per provider; missing values are empty.
pub fn summary_tsv(task: &SyntheticTask, results: &[ProviderResult]) -> String {
    let shift1 = shift1_metric(task).unwrap_or_else(|| "consistency_shift1".into());
    let cols = ["accuracy", "consistency", shift1.as_str(), "final_loss", "diverged", "param_count", "predictor_param_count"];
    let mut s = format!("provider\t{}\n", cols.join("\t"));
    for r in results {
        s.push_str(&r.provider.label());
        for c in cols {
            s.push('\t');
            if let Some(v) = r.metric(c) {
                s.push_str(&v.to_string());
            }
        }
        s.push('\n');
    }
    s
}

/// One point of the group sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub groups: usize,
    pub accuracy: Option<f64>,
    pub consistency: Option<f64>,
    pub final_loss: Option<f64>,
    pub diverged: bool,
}

/// Trains the grouped provider once per group count in `spec.groups`. Every
/// count must divide every stage width. With `out`, per-point reports go to
/// `<out>/g<groups>/report.txt` and the curve to `<out>/sweep.tsv`.
pub fn run_group_sweep(task: &SyntheticTask, spec: &AblationSpec, out: Option<&Path>) -> Result<Vec<SweepPoint>> {
    task.validate()?;
    if spec.groups.is_empty() {
        return Err(Error::InvalidArgument {
            op: "run_group_sweep",
            detail: "empty group list".into(),
        });
    }
    for &g in &spec.groups {
        spec.model_config(ProviderSpec::grouped(g), task.classes()).validate()?;
    }
    let (train_set, test_set) = datasets(task)?;
    let mut points = Vec::with_capacity(spec.groups.len());
    for &g in &spec.groups {
        let r = train_and_report(task, &train_set, &test_set, spec, ProviderSpec::grouped(g))?;
        if let Some(dir) = out {
            let sub = dir.join(format!("g{g}"));
            fs::create_dir_all(&sub)?;
            r.report.write(sub.join("report.txt"))?;
        }
        points.push(SweepPoint {
            groups: g,
            accuracy: r.metric("accuracy"),
            consistency: r.metric("consistency"),
            final_loss: r.metric("final_loss"),
            diverged: r.diverged(),
        });
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("sweep.tsv"), sweep_tsv(&points))?;
    }
    Ok(points)
}

pub fn sweep_tsv(points: &[SweepPoint]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = String::from("groups\taccuracy\tconsistency\tfinal_loss\tdiverged\n");
    for p in points {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            p.groups,
            opt(p.accuracy),
            opt(p.consistency),
            opt(p.final_loss),
            p.diverged as u8
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn provider_spec_parsing() {
        assert_eq!("grouped:4".parse::<ProviderSpec>().unwrap(), ProviderSpec::grouped(4));
        assert_eq!("grouped".parse::<ProviderSpec>().unwrap().groups, 8);
        assert_eq!("spatial".parse::<ProviderSpec>().unwrap().label(), "spatial");
        assert_eq!(ProviderSpec::grouped(16).label(), "grouped_g16");
        assert!("box:2".parse::<ProviderSpec>().is_err());
        assert!("grouped:x".parse::<ProviderSpec>().is_err());
    }

    #[test]
    fn spec_round_trips_through_kv() {
        let mut s = AblationSpec::default();
        s.train.schedule = LrSchedule::Step { every: 2, gamma: 0.5 };
        s.seed = 9;
        let back = AblationSpec::from_kv(&KvConfig::parse(&s.to_kv().to_text()).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn spec_validation() {
        let mut s = AblationSpec::default();
        s.providers.truncate(1);
        assert!(s.validate().is_err());
        let mut s = AblationSpec::default();
        s.widths = vec![8, 12];
        assert!(s.validate().is_err());
    }

    #[test]
    fn probe_class_is_finest_checkerboard() {
        let mut t = SyntheticTask::default();
        assert_eq!(probe_class(&t), Some(2));
        assert_eq!(shift1_metric(&t).unwrap(), "consistency_shift1_checker1");
        t.vocabulary = vec![Pattern::Checkerboard { cell: 2 }, Pattern::Blob, Pattern::Checkerboard { cell: 1 }];
        assert_eq!(probe_class(&t), Some(2));
        t.vocabulary = vec![Pattern::Blob, Pattern::HorizontalBars { period: 2 }];
        assert_eq!(probe_class(&t), None);
    }
}
