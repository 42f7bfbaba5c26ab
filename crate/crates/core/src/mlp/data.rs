use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mlp::network::{CIFAR_CLASSES, CIFAR_INPUT_DIM};
use crate::rng::{derived_rng, StreamPurpose};

/// Bytes per CIFAR-10 binary record: one label plus 32x32x3 pixels.
pub const CIFAR_RECORD_LEN: usize = 1 + CIFAR_INPUT_DIM;

/// Held-out share of every split.
pub const TEST_FRACTION: f64 = 0.2;

/// Per-feature noise of the synthetic clusters. Large enough that neither a
/// linear model nor an MLP reaches 100%.
pub const CLUSTER_STD: f64 = 0.4;

/// Labelled samples, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Shape {
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Domain(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    /// Rows in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// A seeded random subset of `n` rows (all rows if `n >= len`).
    pub fn subset(&self, n: usize, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut derived_rng(seed, 1, StreamPurpose::DataSplit));
        order.truncate(n.min(self.len()));
        self.select(&order)
    }

    /// Deterministic 80:20 shuffle-split.
    pub fn split(&self, seed: u64) -> Result<SplitDataset> {
        if self.len() < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 samples to split, got {}",
                self.len()
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut derived_rng(seed, 0, StreamPurpose::DataSplit));
        let n_test =
            ((self.len() as f64 * TEST_FRACTION).round() as usize).clamp(1, self.len() - 1);
        let (test, train) = order.split_at(n_test);
        Ok(SplitDataset {
            train: self.select(train),
            test: self.select(test),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Dataset,
    pub test: Dataset,
}

impl SplitDataset {
    pub fn n_features(&self) -> usize {
        self.train.n_features()
    }

    pub fn n_classes(&self) -> usize {
        self.train.n_classes
    }
}

/// Parses CIFAR-10 binary records from raw bytes.
pub fn parse_cifar10_records(bytes: &[u8], source: &Path) -> Result<Dataset> {
    if bytes.len() % CIFAR_RECORD_LEN != 0 {
        return Err(Error::Data {
            path: source.to_path_buf(),
            reason: format!(
                "length {} is not a multiple of the {CIFAR_RECORD_LEN}-byte record",
                bytes.len()
            ),
        });
    }
    let n = bytes.len() / CIFAR_RECORD_LEN;
    let mut labels = Vec::with_capacity(n);
    let mut features = Array2::zeros((n, CIFAR_INPUT_DIM));
    for (i, (record, mut row)) in bytes
        .chunks_exact(CIFAR_RECORD_LEN)
        .zip(features.rows_mut())
        .enumerate()
    {
        let label = record[0] as usize;
        if label >= CIFAR_CLASSES {
            return Err(Error::Data {
                path: source.to_path_buf(),
                reason: format!("record {i} has label {label}, expected 0-9"),
            });
        }
        labels.push(label);
        for (f, &b) in row.iter_mut().zip(&record[1..]) {
            *f = b as f64 / 255.0;
        }
    }
    Dataset::new(features, labels, CIFAR_CLASSES)
}

fn batch_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("data_batch_") && n.ends_with(".bin"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data {
            path: path.to_path_buf(),
            reason: "no data_batch_*.bin files found".into(),
        });
    }
    Ok(files)
}

/// Loads a CIFAR-10 binary batch file, or every `data_batch_*.bin` in a
/// directory, optionally down-samples to `subset` rows, and splits 80:20.
pub fn load_cifar10_binary(path: &Path, subset: Option<usize>, seed: u64) -> Result<SplitDataset> {
    let mut parts = Vec::new();
    for file in batch_files(path)? {
        let bytes = fs::read(&file)?;
        parts.push(parse_cifar10_records(&bytes, &file)?);
    }
    let views: Vec<_> = parts.iter().map(|d| d.features.view()).collect();
    let features = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let labels = parts
        .iter()
        .flat_map(|d| d.labels.iter().copied())
        .collect();
    let mut all = Dataset::new(features, labels, CIFAR_CLASSES)?;
    if let Some(n) = subset {
        all = all.subset(n, seed);
    }
    all.split(seed)
}

/// Gaussian class clusters in `[0, 1]^n_features`.
///
/// Class centres are uniform in `[0.2, 0.8]`; samples add isotropic noise of
/// std [`CLUSTER_STD`] and are clipped to the unit cube. Labels cycle through the
/// classes before shuffling, so every class appears once `n >= n_classes`.
pub fn synthetic_dataset(
    n_samples: usize,
    n_features: usize,
    n_classes: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_samples == 0 || n_features == 0 || n_classes == 0 {
        return Err(Error::invalid("synthetic dataset sizes must be positive"));
    }
    let mut rng = derived_rng(seed, 0, StreamPurpose::Synthetic);
    let centres = Array2::from_shape_fn((n_classes, n_features), |_| rng.random_range(0.2..0.8));
    let mut labels: Vec<usize> = (0..n_samples).map(|i| i % n_classes).collect();
    labels.shuffle(&mut rng);
    let mut features = Array2::zeros((n_samples, n_features));
    for (mut row, &label) in features.rows_mut().into_iter().zip(&labels) {
        for (f, &c) in row.iter_mut().zip(centres.row(label)) {
            let z: f64 = rng.sample(StandardNormal);
            *f = (c + CLUSTER_STD * z).clamp(0.0, 1.0);
        }
    }
    Dataset::new(features, labels, n_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, pixel: u8) -> Vec<u8> {
        let mut r = vec![pixel; CIFAR_RECORD_LEN];
        r[0] = label;
        r
    }

    #[test]
    fn cifar_record_parsing() {
        let mut bytes = record(9, 255);
        bytes.extend(record(0, 0));
        bytes.extend(record(3, 51));
        let ds = parse_cifar10_records(&bytes, Path::new("mem")).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.labels, vec![9, 0, 3]);
        assert!(ds.features.row(0).iter().all(|&v| v == 1.0));
        assert!(ds.features.row(1).iter().all(|&v| v == 0.0));
        assert!(ds.features.row(2).iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn cifar_rejects_bad_input() {
        let mut bytes = record(1, 0);
        bytes.pop();
        assert!(matches!(
            parse_cifar10_records(&bytes, Path::new("x")),
            Err(Error::Data { .. })
        ));
        let bytes = record(10, 0);
        assert!(matches!(
            parse_cifar10_records(&bytes, Path::new("x")),
            Err(Error::Data { .. })
        ));
    }

    #[test]
    fn cifar_directory_load_and_split() {
        let dir = tempfile::tempdir().unwrap();
        for (b, n) in [(1u8, 6usize), (2, 4)] {
            let bytes: Vec<u8> = (0..n).flat_map(|i| record((i % 10) as u8, b)).collect();
            fs::write(dir.path().join(format!("data_batch_{b}.bin")), bytes).unwrap();
        }
        fs::write(dir.path().join("test_batch.bin"), record(0, 0)).unwrap();
        let split = load_cifar10_binary(dir.path(), None, 42).unwrap();
        assert_eq!(split.train.len(), 8);
        assert_eq!(split.test.len(), 2);
        assert_eq!(split, load_cifar10_binary(dir.path(), None, 42).unwrap());
        let small = load_cifar10_binary(dir.path(), Some(5), 42).unwrap();
        assert_eq!(small.train.len() + small.test.len(), 5);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let ds = synthetic_dataset(100, 3, 4, 5).unwrap();
        let a = ds.split(42).unwrap();
        assert_eq!(a.train.len(), 80);
        assert_eq!(a.test.len(), 20);
        assert_eq!(a, ds.split(42).unwrap());
        assert_ne!(a, ds.split(43).unwrap());
    }

    #[test]
    fn synthetic_properties() {
        let a = synthetic_dataset(200, 8, 5, 1).unwrap();
        assert_eq!(a, synthetic_dataset(200, 8, 5, 1).unwrap());
        assert_ne!(a, synthetic_dataset(200, 8, 5, 2).unwrap());
        for c in 0..5 {
            assert!(a.labels.contains(&c));
        }
        assert!(a.features.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(synthetic_dataset(0, 8, 5, 1).is_err());
    }
}
