//! Prediction dumps: 16-bit PGM label maps and instance-set directories.
//!
//! An instance-set directory holds binary PGM masks (any non-zero sample is
//! foreground) and a `manifest` with one `file class_id confidence` line per
//! instance.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{Instance, InstanceSet, LabelMap, Mask};

use super::checkpoint::MANIFEST;
use super::netpbm::Image;

pub fn read_label_map(path: impl AsRef<Path>) -> Result<LabelMap> {
    let img = Image::read(path)?;
    if img.channels != 1 {
        return Err(Error::Format("label maps must be single-channel PGM".into()));
    }
    LabelMap::new(img.height, img.width, img.samples.iter().map(|&s| s as u32).collect())
}

/// Writes a 16-bit binary PGM (maxval 65535).
pub fn write_label_map(path: impl AsRef<Path>, map: &LabelMap) -> Result<()> {
    let samples = map
        .labels()
        .iter()
        .map(|&l| u16::try_from(l).map_err(|_| Error::Format(format!("label {l} exceeds 16 bits"))))
        .collect::<Result<Vec<_>>>()?;
    Image::gray(map.width(), map.height(), u16::MAX, samples)?.write(path)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let img = Image::read(path)?;
    if img.channels != 1 {
        return Err(Error::Format("masks must be single-channel PGM".into()));
    }
    let bits: Vec<bool> = img.samples.iter().map(|&s| s != 0).collect();
    Mask::from_bools(img.height, img.width, &bits)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    let (h, w) = (mask.height(), mask.width());
    let samples = (0..h).flat_map(|i| (0..w).map(move |j| (i, j))).map(|(i, j)| if mask.get(i, j) { 255 } else { 0 }).collect();
    Image::gray(w, h, 255, samples)?.write(path)
}

pub fn read_instance_set(dir: impl AsRef<Path>) -> Result<InstanceSet> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let mut instances = Vec::new();
    let mut extent = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Format(format!("{}: line {} must be `file class_id confidence`", dir.display(), lineno + 1));
        if parts.len() != 3 {
            return Err(bad());
        }
        let class_id: u32 = parts[1].parse().map_err(|_| bad())?;
        let confidence: f64 = parts[2].parse().map_err(|_| bad())?;
        let mask = read_mask(dir.join(parts[0]))?;
        extent.get_or_insert((mask.height(), mask.width()));
        instances.push(Instance {
            mask,
            class_id,
            confidence,
        });
    }
    let (h, w) = extent.unwrap_or((0, 0));
    InstanceSet::new(h, w, instances)
}

/// Writes `mask_<i>.pgm` files and the manifest.
pub fn write_instance_set(dir: impl AsRef<Path>, set: &InstanceSet) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    for (i, inst) in set.instances().iter().enumerate() {
        let file = format!("mask_{i}.pgm");
        write_mask(dir.join(&file), &inst.mask)?;
        manifest.push_str(&format!("{file} {} {}\n", inst.class_id, inst.confidence));
    }
    fs::write(dir.join(MANIFEST), manifest)?;
    Ok(())
}
