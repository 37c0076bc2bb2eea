//! Named-tensor checkpoints: a directory holding one T4F file per tensor and
//! a `manifest` listing `name n c h w file` per line.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::predictor::{PredictorConfig, PredictorParams};
use crate::scalar::Scalar;
use crate::tensor::{Shape4, Tensor};

use super::t4f::{read_t4f, write_t4f};

pub const MANIFEST: &str = "manifest";

/// Ordered collection of named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint<T> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    /// Inserts or replaces `name`.
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = t,
            None => self.entries.push((name, t)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str, shape: Shape4) -> Result<Tensor<T>> {
        let t = self
            .get(name)
            .ok_or_else(|| Error::Format(format!("checkpoint has no tensor {name:?}")))?;
        if t.shape() != shape {
            return Err(Error::Format(format!("{name}: shape {} expected {}", t.shape(), shape)));
        }
        Ok(t.clone())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut manifest = String::new();
        for (name, t) in &self.entries {
            if name.is_empty() || name.contains(char::is_whitespace) || name.contains('/') {
                return Err(Error::Format(format!("invalid tensor name {name:?}")));
            }
            let file = format!("{name}.t4f");
            write_t4f(dir.join(&file), t)?;
            let s = t.shape();
            manifest.push_str(&format!("{name} {} {} {} {} {file}\n", s.n, s.c, s.h, s.w));
        }
        fs::write(dir.join(MANIFEST), manifest)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join(MANIFEST))?;
        let mut ck = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 6 {
                return Err(Error::Format(format!("manifest line {}: expected 6 fields", lineno + 1)));
            }
            let dims: Vec<usize> = parts[1..5]
                .iter()
                .map(|p| p.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("manifest line {}: {e}", lineno + 1)))?;
            let t: Tensor<T> = read_t4f(dir.join(parts[5]))?;
            let expect = Shape4::new(dims[0], dims[1], dims[2], dims[3]);
            if t.shape() != expect {
                return Err(Error::Format(format!("{}: file shape {} manifest {}", parts[0], t.shape(), expect)));
            }
            ck.insert(parts[0], t);
        }
        Ok(ck)
    }

    /// Stores a predictor under `{prefix}predictor.{conv.weight, conv.bias,
    /// bn.gamma, bn.beta, bn.mean, bn.var}`.
    pub fn insert_predictor(&mut self, prefix: &str, p: &PredictorParams<T>) {
        self.insert(format!("{prefix}predictor.conv.weight"), p.conv.weight.clone());
        self.insert(format!("{prefix}predictor.conv.bias"), p.conv.bias.clone());
        self.insert(format!("{prefix}predictor.bn.gamma"), p.bn.gamma.clone());
        self.insert(format!("{prefix}predictor.bn.beta"), p.bn.beta.clone());
        self.insert(format!("{prefix}predictor.bn.mean"), p.bn.running_mean.clone());
        self.insert(format!("{prefix}predictor.bn.var"), p.bn.running_var.clone());
    }

    pub fn predictor(&self, prefix: &str, cfg: PredictorConfig) -> Result<PredictorParams<T>> {
        let mut p = PredictorParams::zeros(cfg)?;
        let oc = cfg.out_channels();
        let vec_shape = Shape4::new(1, oc, 1, 1);
        p.conv.weight = self.require(
            &format!("{prefix}predictor.conv.weight"),
            Shape4::new(oc, cfg.in_channels, cfg.conv_kernel, cfg.conv_kernel),
        )?;
        p.conv.bias = self.require(&format!("{prefix}predictor.conv.bias"), vec_shape)?;
        p.bn.gamma = self.require(&format!("{prefix}predictor.bn.gamma"), vec_shape)?;
        p.bn.beta = self.require(&format!("{prefix}predictor.bn.beta"), vec_shape)?;
        p.bn.running_mean = self.require(&format!("{prefix}predictor.bn.mean"), vec_shape)?;
        p.bn.running_var = self.require(&format!("{prefix}predictor.bn.var"), vec_shape)?;
        Ok(p)
    }
}
