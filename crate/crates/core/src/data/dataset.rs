use std::collections::{BTreeMap, HashSet};
use std::path::{Component, Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::io::{create_dir_all, read_json, write_json};
use crate::seed;

use super::{lst, synth_range, Normalization, Sample, SynthConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub month: u8,
    /// Path of the `LST1` image, relative to the dataset directory.
    pub image: String,
    pub labels: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub channel_min: [f32; 3],
    pub channel_max: [f32; 3],
    pub samples: Vec<ManifestEntry>,
    pub split: SplitTag,
}

impl DatasetManifest {
    /// Manifest for `samples` with the conventional `images/` and `labels/` layout.
    pub fn describe(samples: &[Sample], num_classes: usize, norm: &Normalization, split: SplitTag) -> Result<Self> {
        let first = samples.first().ok_or_else(|| arg_err!("a dataset needs at least one sample"))?;
        let (height, width) = (first.height(), first.width());
        let entries = samples
            .iter()
            .map(|s| ManifestEntry {
                id: s.id.clone(),
                month: s.month,
                image: format!("images/{}.lst", s.id),
                labels: format!("labels/{}.lst", s.id),
            })
            .collect();
        let manifest = Self {
            version: MANIFEST_VERSION,
            count: samples.len(),
            height,
            width,
            num_classes,
            channel_min: norm.channel_min,
            channel_max: norm.channel_max,
            samples: entries,
            split,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn normalization(&self) -> Normalization {
        Normalization { channel_min: self.channel_min, channel_max: self.channel_max }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if self.version != MANIFEST_VERSION {
            return fail(format!("unsupported manifest version {}", self.version));
        }
        if self.count != self.samples.len() {
            return fail(format!("manifest count {} but {} sample entries", self.count, self.samples.len()));
        }
        if self.height == 0 || self.width == 0 || !(2..=256).contains(&self.num_classes) {
            return fail(format!("bad dataset geometry {}×{} with {} classes", self.height, self.width, self.num_classes));
        }
        let mut ids = HashSet::new();
        for e in &self.samples {
            if !ids.insert(e.id.as_str()) {
                return fail(format!("duplicate sample id {}", e.id));
            }
            if !(1..=12).contains(&e.month) {
                return fail(format!("sample {} has month {}", e.id, e.month));
            }
            for p in [&e.image, &e.labels] {
                if !Path::new(p).components().all(|c| matches!(c, Component::Normal(_))) {
                    return fail(format!("sample {} path {p} must be relative and inside the dataset", e.id));
                }
            }
        }
        Ok(())
    }
}

/// A dataset directory whose manifest and file headers have been checked.
/// Sample payloads are read on demand.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.manifest.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.samples.is_empty()
    }

    pub fn load(&self, index: usize) -> Result<Sample> {
        let m = &self.manifest;
        let e = m.samples.get(index).ok_or_else(|| arg_err!("sample index {index} out of range"))?;
        let image_path = self.dir.join(&e.image);
        let labels_path = self.dir.join(&e.labels);
        let image = lst::read::<f32>(&image_path)?;
        let labels = lst::read::<u8>(&labels_path)?;
        if image.shape() != [m.height, m.width, 3] {
            return Err(Error::format(&image_path, format!("shape {:?} does not match the manifest", image.shape())));
        }
        if labels.shape() != [m.height, m.width] {
            return Err(Error::format(&labels_path, format!("shape {:?} does not match the manifest", labels.shape())));
        }
        if labels.data().iter().any(|&l| usize::from(l) >= m.num_classes) {
            return Err(Error::format(&labels_path, format!("label outside 0..{}", m.num_classes)));
        }
        Ok(Sample { id: e.id.clone(), month: e.month, image, labels })
    }

    pub fn load_all(&self) -> Result<Vec<Sample>> {
        (0..self.len()).map(|i| self.load(i)).collect()
    }
}

/// Writes the tensors of `samples` and then the manifest into `dir`.
pub fn dataset_write(samples: &[Sample], manifest: &DatasetManifest, dir: &Path) -> Result<()> {
    manifest.validate()?;
    if samples.len() != manifest.samples.len() {
        return Err(Error::Validation("manifest entries do not match the samples".into()));
    }
    for (s, e) in samples.iter().zip(&manifest.samples) {
        if s.id != e.id || s.month != e.month {
            return Err(Error::Validation(format!("sample {} does not match manifest entry {}", s.id, e.id)));
        }
        s.validate(manifest.num_classes)?;
        for rel in [&e.image, &e.labels] {
            if let Some(parent) = dir.join(rel).parent() {
                create_dir_all(parent)?;
            }
        }
        lst::write(&dir.join(&e.image), &s.image)?;
        lst::write(&dir.join(&e.labels), &s.labels)?;
    }
    write_json(&dir.join(MANIFEST_FILE), manifest)
}

/// Opens a dataset directory, validating the manifest and the header and
/// length of every referenced tensor file.
pub fn dataset_read(dir: &Path) -> Result<Dataset> {
    let manifest: DatasetManifest = read_json(&dir.join(MANIFEST_FILE))?;
    manifest.validate()?;
    for e in &manifest.samples {
        let img = lst::probe(&dir.join(&e.image))?;
        if img.dtype != 0 || img.shape != [manifest.height, manifest.width, 3] {
            return Err(Error::format(dir.join(&e.image), "expected an f32 H×W×3 image"));
        }
        let lab = lst::probe(&dir.join(&e.labels))?;
        if lab.dtype != 1 || lab.shape != [manifest.height, manifest.width] {
            return Err(Error::format(dir.join(&e.labels), "expected a u8 H×W label mask"));
        }
    }
    Ok(Dataset { dir: dir.to_path_buf(), manifest })
}

/// Stratified split of sample positions into (train, validation).
///
/// The validation size `round(n · fraction)` is shared out across months by
/// largest remainder; within a month the chosen samples come from a shuffle
/// seeded by `(seed, month)`. Both lists keep the input order.
pub fn split_indices(months: &[u8], val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(arg_err!("val_fraction must lie strictly between 0 and 1, got {val_fraction}"));
    }
    let n = months.len();
    if n < 2 {
        return Err(arg_err!("{n} samples cannot fill both splits"));
    }
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let mut by_month: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, &m) in months.iter().enumerate() {
        by_month.entry(m).or_default().push(i);
    }
    let mut alloc: Vec<(u8, usize, f64)> = by_month
        .iter()
        .map(|(&m, idx)| {
            let quota = idx.len() as f64 * n_val as f64 / n as f64;
            let base = (quota + 1e-9).floor() as usize;
            (m, base, quota - base as f64)
        })
        .collect();
    let assigned: usize = alloc.iter().map(|a| a.1).sum();
    let mut order: Vec<usize> = (0..alloc.len()).collect();
    order.sort_by(|&a, &b| alloc[b].2.total_cmp(&alloc[a].2).then(a.cmp(&b)));
    for &k in order.iter().take(n_val.saturating_sub(assigned)) {
        alloc[k].1 += 1;
    }

    let mut val = Vec::with_capacity(n_val);
    for (m, take, _) in alloc {
        let mut idx = by_month[&m].clone();
        idx.shuffle(&mut seed::rng(&[seed, u64::from(m)]));
        val.extend_from_slice(&idx[..take]);
    }
    val.sort_unstable();
    let in_val: HashSet<usize> = val.iter().copied().collect();
    let train = (0..n).filter(|i| !in_val.contains(i)).collect();
    Ok((train, val))
}

/// Splits a manifest's entries into train and validation manifests that
/// reference the same files.
pub fn split_dataset(manifest: &DatasetManifest, val_fraction: f64, seed: u64) -> Result<(DatasetManifest, DatasetManifest)> {
    let months: Vec<u8> = manifest.samples.iter().map(|e| e.month).collect();
    let (train, val) = split_indices(&months, val_fraction, seed)?;
    let pick = |idx: &[usize], split| DatasetManifest {
        count: idx.len(),
        samples: idx.iter().map(|&i| manifest.samples[i].clone()).collect(),
        split,
        ..manifest.clone()
    };
    Ok((pick(&train, SplitTag::Train), pick(&val, SplitTag::Val)))
}

/// Normalized train, validation and test samples drawn from one synthetic configuration.
#[derive(Clone, Debug)]
pub struct SynthSplits {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
    pub normalization: Normalization,
}

/// Repetitions `0..train_per_month` are split by month into train and
/// validation with the generator seed; the next `test_per_month`
/// repetitions form the test split. Normalization is fitted on train only.
pub fn synth_splits(config: &SynthConfig, train_per_month: usize, test_per_month: usize, val_fraction: f64) -> Result<SynthSplits> {
    let pool = synth_range(config, 0..train_per_month)?;
    let mut test = synth_range(config, train_per_month..train_per_month + test_per_month)?;
    let months: Vec<u8> = pool.iter().map(|s| s.month).collect();
    let (ti, vi) = split_indices(&months, val_fraction, config.seed)?;
    let mut train: Vec<Sample> = ti.iter().map(|&i| pool[i].clone()).collect();
    let mut val: Vec<Sample> = vi.iter().map(|&i| pool[i].clone()).collect();
    let normalization = Normalization::fit(&train);
    for s in train.iter_mut().chain(&mut val).chain(&mut test) {
        normalization.apply(&mut s.image);
    }
    Ok(SynthSplits { train, val, test, normalization })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_120_by_month() {
        let months: Vec<u8> = (0..120).map(|i| (i % 12) as u8 + 1).collect();
        let (train, val) = split_indices(&months, 0.1, 5).unwrap();
        assert_eq!((train.len(), val.len()), (108, 12));
        let val_months: HashSet<u8> = val.iter().map(|&i| months[i]).collect();
        assert_eq!(val_months.len(), 12);
        assert_eq!(split_indices(&months, 0.1, 5).unwrap(), (train.clone(), val.clone()));
        let mut all: Vec<usize> = train.into_iter().chain(val).collect();
        all.sort_unstable();
        assert_eq!(all, (0..120).collect::<Vec<_>>());
    }

    #[test]
    fn split_edge_cases() {
        assert_eq!(split_indices(&[3, 3], 0.5, 1).unwrap().0.len(), 1);
        assert!(split_indices(&[3], 0.5, 1).is_err());
        assert!(split_indices(&[3, 4], 0.0, 1).is_err());
        assert!(split_indices(&[3, 4], 1.0, 1).is_err());
    }
}
