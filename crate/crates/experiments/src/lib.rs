//! Desk-scale experiments for content-aware anti-aliased downsampling:
//! the aliasing demo, a synthetic shifted-pattern task, a small classifier
//! with pluggable blur before each downsampling, and the provider ablation
//! and group sweep built on them.

pub mod ablation;
pub mod alias;
pub mod model;
pub mod segment;
pub mod task;
pub mod train;

pub use ablation::{run_ablation, run_group_sweep, AblationSpec, ProviderResult, ProviderSpec, SweepPoint};
pub use model::{Classifier, ClassifierConfig};
pub use segment::{segmentation_consistency, SegmentationTask};
pub use task::{Dataset, Pattern, ShiftPair, Split, SyntheticTask};
pub use train::{evaluate, train, EvalResult, LrSchedule, TrainConfig, TrainOutcome};
