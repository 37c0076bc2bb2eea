//! Metric reports: one `key=value` line per record in fixed field order,
//! followed by a `---` separator and the same content as JSON.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricValue;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub value: f64,
    pub pairs_used: usize,
    pub pairs_skipped: usize,
    pub seed: u64,
}

impl MetricRecord {
    pub fn new(metric: impl Into<String>, v: MetricValue, seed: u64) -> Self {
        Self {
            metric: metric.into(),
            value: v.value,
            pairs_used: v.pairs_used,
            pairs_skipped: v.pairs_skipped,
            seed,
        }
    }

    /// A plain scalar (accuracy, loss, counts) with no pair bookkeeping.
    pub fn scalar(metric: impl Into<String>, value: f64, seed: u64) -> Self {
        Self {
            metric: metric.into(),
            value,
            pairs_used: 0,
            pairs_skipped: 0,
            seed,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub records: Vec<MetricRecord>,
}

pub const REPORT_SEPARATOR: &str = "---";

impl MetricReport {
    pub fn push(&mut self, r: MetricRecord) {
        self.records.push(r);
    }

    pub fn get(&self, metric: &str) -> Option<&MetricRecord> {
        self.records.iter().find(|r| r.metric == metric)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&format!(
                "metric={} value={} pairs_used={} pairs_skipped={} seed={}\n",
                r.metric, r.value, r.pairs_used, r.pairs_skipped, r.seed
            ));
        }
        s.push_str(REPORT_SEPARATOR);
        s.push('\n');
        s.push_str(&serde_json::to_string_pretty(self).expect("report serializes"));
        s.push('\n');
        s
    }

    /// Reads the JSON block of a report produced by [`Self::to_text`].
    pub fn parse(text: &str) -> Result<Self> {
        let json = text
            .split_once(&format!("\n{REPORT_SEPARATOR}\n"))
            .map(|(_, j)| j)
            .or_else(|| text.strip_prefix(&format!("{REPORT_SEPARATOR}\n")))
            .ok_or_else(|| Error::Format("report has no machine-readable block".into()))?;
        serde_json::from_str(json).map_err(|e| Error::Format(format!("report json: {e}")))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_layout_and_parse() {
        let mut r = MetricReport::default();
        r.push(MetricRecord::new(
            "maisc",
            MetricValue {
                value: 0.5,
                pairs_used: 2,
                pairs_skipped: 1,
            },
            7,
        ));
        let text = r.to_text();
        assert!(text.starts_with("metric=maisc value=0.5 pairs_used=2 pairs_skipped=1 seed=7\n---\n{"));
        assert_eq!(MetricReport::parse(&text).unwrap(), r);
        assert!(MetricReport::parse("metric=x").is_err());
    }

    #[test]
    fn empty_report_round_trips() {
        let r = MetricReport::default();
        assert_eq!(MetricReport::parse(&r.to_text()).unwrap(), r);
    }
}
