use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::nn::Rng;

pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "pgm", "ppm"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn dir_name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "val",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub path: PathBuf,
    pub label: usize,
}

/// Ordered list of samples for one split; classes are alphabetical and
/// samples sorted by path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetIndex {
    pub classes: Vec<String>,
    pub samples: Vec<Sample>,
    pub split: Split,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        paths.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    paths.sort();
    Ok(paths)
}

/// Indexes `root/<class>/*.{png,pgm,ppm}`. Files with other extensions are
/// ignored; a class directory without images is an error.
pub fn scan_dataset(root: &Path, split: Split) -> Result<DatasetIndex> {
    if !root.is_dir() {
        return Err(Error::Ingest {
            message: "dataset directory not found".into(),
            paths: vec![root.to_path_buf()],
        });
    }
    let class_dirs: Vec<PathBuf> = read_dir_sorted(root)?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    if class_dirs.is_empty() {
        return Err(Error::Ingest {
            message: "no class directories".into(),
            paths: vec![root.to_path_buf()],
        });
    }
    let mut classes = Vec::new();
    let mut samples = Vec::new();
    let mut empty = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        let name = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Ingest {
                message: "class directory name is not valid UTF-8".into(),
                paths: vec![dir.clone()],
            })?;
        classes.push(name.to_string());
        let files: Vec<PathBuf> = read_dir_sorted(dir)?
            .into_iter()
            .filter(|p| p.is_file() && is_image(p))
            .collect();
        if files.is_empty() {
            empty.push(dir.clone());
        }
        samples.extend(files.into_iter().map(|path| Sample { path, label }));
    }
    if !empty.is_empty() {
        return Err(Error::Ingest {
            message: "class directories without images".into(),
            paths: empty,
        });
    }
    Ok(DatasetIndex {
        classes,
        samples,
        split,
    })
}

/// Seeded per-class split; each class keeps at least one training sample and
/// gets `round(n * fraction)` validation samples.
pub fn stratified_split(index: &DatasetIndex, val_fraction: f64, seed: u64) -> Result<(DatasetIndex, DatasetIndex)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Argument(format!("validation fraction {val_fraction} outside [0, 1)")));
    }
    let mut rng = Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for label in 0..index.classes.len() {
        let mut members: Vec<&Sample> = index.samples.iter().filter(|s| s.label == label).collect();
        members.shuffle(&mut rng);
        let n = members.len();
        let n_val = ((n as f64 * val_fraction).round() as usize).min(n.saturating_sub(1));
        val.extend(members[..n_val].iter().map(|s| (*s).clone()));
        train.extend(members[n_val..].iter().map(|s| (*s).clone()));
    }
    train.sort_by(|a, b| a.path.cmp(&b.path));
    val.sort_by(|a, b| a.path.cmp(&b.path));
    Ok((
        DatasetIndex {
            classes: index.classes.clone(),
            samples: train,
            split: Split::Train,
        },
        DatasetIndex {
            classes: index.classes.clone(),
            samples: val,
            split: Split::Validation,
        },
    ))
}

/// Train and validation indexes for a dataset root. A `train/` directory
/// (with optional `val/`) is used as-is; otherwise the root is treated as a
/// flat class tree and split with [`stratified_split`].
pub fn load_splits(root: &Path, val_fraction: f64, seed: u64) -> Result<(DatasetIndex, DatasetIndex)> {
    let train_dir = root.join(Split::Train.dir_name());
    if !train_dir.is_dir() {
        let all = scan_dataset(root, Split::Train)?;
        return stratified_split(&all, val_fraction, seed);
    }
    let train = scan_dataset(&train_dir, Split::Train)?;
    let val_dir = root.join(Split::Validation.dir_name());
    if !val_dir.is_dir() {
        return stratified_split(&train, val_fraction, seed);
    }
    let val = scan_dataset(&val_dir, Split::Validation)?;
    if val.classes != train.classes {
        return Err(Error::Ingest {
            message: format!(
                "validation classes {:?} differ from training classes {:?}",
                val.classes, train.classes
            ),
            paths: vec![train_dir, val_dir],
        });
    }
    Ok((train, val))
}
