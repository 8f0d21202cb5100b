use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::{load_cifar10_bin, load_mnist_idx, synthetic_correlated, LabeledDataset, SplitSpec};
use crate::error::{Result, SnrError};
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetId {
    Mnist,
    Cifar10,
    /// Generated by [`synthetic_correlated`] with the layout below; needs no
    /// files.
    Synthetic,
}

/// Feature layout of the generated dataset: groups of perfectly correlated
/// latent drivers observed through independent noise.
pub const SYNTHETIC_GROUPS: usize = 4;
pub const SYNTHETIC_GROUP_SIZE: usize = 4;
pub const SYNTHETIC_NOISE: f64 = 0.1;

impl DatasetId {
    pub fn name(self) -> &'static str {
        match self {
            DatasetId::Mnist => "mnist",
            DatasetId::Cifar10 => "cifar10",
            DatasetId::Synthetic => "synthetic",
        }
    }
}

fn existing(dir: &Path, names: &[&str]) -> Option<PathBuf> {
    names.iter().map(|n| dir.join(n)).find(|p| p.is_file())
}

fn idx_pairs(dir: &Path) -> Vec<(PathBuf, PathBuf)> {
    let stems = [("images", "labels"), ("train-images", "train-labels"), ("t10k-images", "t10k-labels")];
    stems
        .iter()
        .filter_map(|(img, lbl)| {
            let i = existing(
                dir,
                &[&format!("{img}-idx3-ubyte"), &format!("{img}-idx3-ubyte.gz"), &format!("{img}.idx3-ubyte")],
            )?;
            let l = existing(
                dir,
                &[&format!("{lbl}-idx1-ubyte"), &format!("{lbl}-idx1-ubyte.gz"), &format!("{lbl}.idx1-ubyte")],
            )?;
            Some((i, l))
        })
        .collect()
}

/// Every MNIST IDX image/label pair found in `dir` (plain or gzipped;
/// `images-*`, `train-*` and `t10k-*` names), concatenated in that order.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<LabeledDataset> {
    let dir = dir.as_ref();
    let pairs = idx_pairs(dir);
    if pairs.is_empty() {
        return Err(SnrError::Data(format!("no MNIST IDX files in {}", dir.display())));
    }
    let parts = pairs
        .iter()
        .map(|(i, l)| load_mnist_idx(i, l))
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::concat(&parts)
}

/// Every CIFAR-10 binary batch in `dir` (`data_batch_*.bin`, then
/// `test_batch.bin`), concatenated.
pub fn load_cifar10_dir(dir: impl AsRef<Path>) -> Result<LabeledDataset> {
    let dir = dir.as_ref();
    let read = std::fs::read_dir(dir).map_err(|e| SnrError::io(dir, e))?;
    let mut batches: Vec<PathBuf> = read
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("data_batch_") && n.ends_with(".bin"))
        })
        .collect();
    batches.sort();
    if let Some(t) = existing(dir, &["test_batch.bin"]) {
        batches.push(t);
    }
    if batches.is_empty() {
        return Err(SnrError::Data(format!("no CIFAR-10 batches in {}", dir.display())));
    }
    load_cifar10_bin(&batches)
}

/// Load `id` from `dir` and draw a seeded disjoint train/test split.
pub fn load_split(id: DatasetId, dir: &Path, split: SplitSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    let pool = match id {
        DatasetId::Mnist => load_mnist_dir(dir)?,
        DatasetId::Cifar10 => load_cifar10_dir(dir)?,
        DatasetId::Synthetic => synthetic_correlated(
            SYNTHETIC_GROUPS,
            SYNTHETIC_GROUP_SIZE,
            split.train_count + split.test_count,
            SYNTHETIC_NOISE,
            &mut SeededRng::new(split.seed),
        )?,
    };
    split.split(&pool)
}
