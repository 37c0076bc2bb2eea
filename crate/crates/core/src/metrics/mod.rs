//! Shift-consistency metrics for classification, semantic segmentation and
//! instance segmentation.

mod consistency;
mod crop;
mod instance;

pub use consistency::{classification_consistency, massc, pixel_agreement, LabelMap, MetricValue};
pub use crop::{make_crop_pairs, CropPair, Rect};
pub use instance::{iou, maisc, match_instances, Instance, InstanceSet, MaiscConfig, Mask, PairMatch};
