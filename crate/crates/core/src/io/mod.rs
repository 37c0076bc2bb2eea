//! On-disk formats: T4F tensors, checkpoints, Netpbm images, prediction
//! dumps, configs and reports.

mod checkpoint;
mod instances;
mod kv;
mod netpbm;
mod report;
mod t4f;

pub use checkpoint::{Checkpoint, MANIFEST};
pub use instances::{read_instance_set, read_label_map, read_mask, write_instance_set, write_label_map, write_mask};
pub use kv::KvConfig;
pub use netpbm::Image;
pub use report::{MetricRecord, MetricReport, REPORT_SEPARATOR};
pub use t4f::{decode_t4f, encode_t4f, read_t4f, write_t4f, T4F_MAGIC};
