//! Image-classification dataset carrier: MNIST IDX files when available,
//! otherwise a deterministic synthetic stand-in emitted through the same
//! IDX machinery.
//!
//! The dataset directory comes from the `OTAFL_DATA_DIR` environment
//! variable (no downloading happens here; fetching the real files is a
//! documented manual step). Desk-scale runs train on a fixed 6,000-image
//! subset and evaluate on a 1,000-image subset selected by a seeded
//! shuffle.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::idx::{encode_idx, read_idx, IdxTensor};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seed::derive_rng;

pub const DATA_DIR_ENV: &str = "OTAFL_DATA_DIR";

pub const TRAIN_IMAGES_FILE: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS_FILE: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES_FILE: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS_FILE: &str = "t10k-labels-idx1-ubyte";

/// Where dataset files are looked up.
#[derive(Debug, Clone, Default)]
pub struct DataEnv {
    pub data_dir: Option<PathBuf>,
}

impl DataEnv {
    /// Environment-derived lookup (reads `OTAFL_DATA_DIR`).
    pub fn from_env() -> Self {
        DataEnv {
            data_dir: std::env::var_os(DATA_DIR_ENV).map(PathBuf::from),
        }
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        DataEnv {
            data_dir: Some(dir.into()),
        }
    }
}

/// Which image dataset backs an MLP run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DatasetChoice {
    /// MNIST if the IDX files are present, synthetic stand-in otherwise.
    #[default]
    Auto,
    Mnist,
    Synthetic,
}

/// What actually backed the run; recorded in output metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Mnist,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    /// One row per example, pixels scaled to [0, 1].
    pub images: Matrix,
    pub labels: Vec<u8>,
}

impl ImageDataset {
    fn from_tensors(images: &IdxTensor, labels: &IdxTensor) -> Result<Self> {
        let (n, rows, cols, pixels) = images.as_images()?;
        let labels = labels.as_labels()?.to_vec();
        if labels.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} images but {} labels",
                n,
                labels.len()
            )));
        }
        Ok(ImageDataset {
            images: Matrix::from_rows(n, rows * cols, pixels)?,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Keep `count` examples chosen by a seeded shuffle.
    pub fn subset(&self, count: usize, seed: u64) -> Result<ImageDataset> {
        if count > self.len() {
            return Err(Error::Config(format!(
                "subset of {} examples from a dataset of {}",
                count,
                self.len()
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        let mut rng = derive_rng(seed, &["dataset-subset"]);
        // Fisher-Yates; only the first `count` positions matter.
        for i in 0..count.min(self.len().saturating_sub(1)) {
            let j = i + rng.random_range(0..self.len() - i);
            order.swap(i, j);
        }
        let dim = self.images.cols();
        let mut pixels = Vec::with_capacity(count * dim);
        let mut labels = Vec::with_capacity(count);
        for &i in order.iter().take(count) {
            pixels.extend_from_slice(self.images.row(i));
            labels.push(self.labels[i]);
        }
        Ok(ImageDataset {
            images: Matrix::from_rows(count, dim, pixels)?,
            labels,
        })
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn mnist_files_present(dir: &Path) -> bool {
    [
        TRAIN_IMAGES_FILE,
        TRAIN_LABELS_FILE,
        TEST_IMAGES_FILE,
        TEST_LABELS_FILE,
    ]
    .iter()
    .all(|f| dir.join(f).is_file())
}

/// Load the four MNIST IDX files from `dir`.
pub fn load_mnist(dir: &Path) -> Result<(ImageDataset, ImageDataset)> {
    let load_pair = |images: &str, labels: &str| -> Result<ImageDataset> {
        let images = read_idx(&read_file(&dir.join(images))?)?;
        let labels = read_idx(&read_file(&dir.join(labels))?)?;
        ImageDataset::from_tensors(&images, &labels)
    };
    Ok((
        load_pair(TRAIN_IMAGES_FILE, TRAIN_LABELS_FILE)?,
        load_pair(TEST_IMAGES_FILE, TEST_LABELS_FILE)?,
    ))
}

/// Deterministic MNIST-shaped stand-in: 28x28 unsigned-byte images in 10
/// classes, built from seeded per-class prototypes plus pixel noise, and
/// round-tripped through the IDX encoder/parser so it exercises the same
/// loading path as the real files.
pub fn synthesize_images(train_n: usize, test_n: usize, seed: u64) -> Result<(ImageDataset, ImageDataset)> {
    let mut rng = derive_rng(seed, &["synthetic-images"]);
    let side = 28;
    let dim = side * side;
    let prototypes: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();

    let mut build = |n: usize| -> Result<(IdxTensor, IdxTensor)> {
        let mut pixels = Vec::with_capacity(n * dim);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = (i % 10) as u8;
            labels.push(class);
            let proto = &prototypes[class as usize];
            for p in proto {
                let v = 0.7 * p + 0.3 * rng.random::<f64>();
                pixels.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
        Ok((
            IdxTensor::unsigned(vec![n, side, side], pixels)?,
            IdxTensor::unsigned(vec![n], labels)?,
        ))
    };

    let (train_images, train_labels) = build(train_n)?;
    let (test_images, test_labels) = build(test_n)?;
    // Round-trip through the binary format.
    let parse = |t: &IdxTensor| read_idx(&encode_idx(t));
    Ok((
        ImageDataset::from_tensors(&parse(&train_images)?, &parse(&train_labels)?)?,
        ImageDataset::from_tensors(&parse(&test_images)?, &parse(&test_labels)?)?,
    ))
}

/// Resolve a dataset choice to concrete train/test subsets.
pub fn resolve_images(
    choice: DatasetChoice,
    env: &DataEnv,
    train_n: usize,
    test_n: usize,
    subset_seed: u64,
) -> Result<(ImageDataset, ImageDataset, DatasetSource)> {
    let use_mnist = match choice {
        DatasetChoice::Mnist => true,
        DatasetChoice::Synthetic => false,
        DatasetChoice::Auto => env
            .data_dir
            .as_deref()
            .map(mnist_files_present)
            .unwrap_or(false),
    };
    if use_mnist {
        let dir = env.data_dir.as_deref().ok_or_else(|| {
            Error::Config(format!(
                "MNIST requested but no dataset directory set ({} unset)",
                DATA_DIR_ENV
            ))
        })?;
        let (train, test) = load_mnist(dir)?;
        Ok((
            train.subset(train_n, subset_seed)?,
            test.subset(test_n, subset_seed.wrapping_add(1))?,
            DatasetSource::Mnist,
        ))
    } else {
        let (train, test) = synthesize_images(train_n, test_n, subset_seed)?;
        Ok((train, test, DatasetSource::Synthetic))
    }
}
