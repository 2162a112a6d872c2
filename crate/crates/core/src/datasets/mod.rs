//! Dataset loading, validation and preparation.

mod idx;
mod scaler;
mod split;
mod tabular;

pub use idx::{load_mnist, mnist_from_bytes, parse_idx, IdxTensor};
pub use scaler::ScalerParams;
pub use split::{kfold, stratified_subsample, train_test_split, FoldAssignment, SplitIndices};
pub use tabular::{load_csv_regression, parse_csv_regression};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Real(Vec<f64>),
    /// Class labels in `0..n_classes`. `n_classes` is kept when rows are selected so
    /// that every subset of a dataset shares one output width.
    Class {
        labels: Vec<usize>,
        n_classes: usize,
    },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Real(v) => v.len(),
            Targets::Class { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Targets::Real(_) => Task::Regression,
            Targets::Class { .. } => Task::Classification,
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match self {
            Targets::Class { labels, .. } => Some(labels),
            Targets::Real(_) => None,
        }
    }

    /// Target values as reals; class labels are cast.
    pub fn as_reals(&self) -> Vec<f64> {
        match self {
            Targets::Real(v) => v.clone(),
            Targets::Class { labels, .. } => labels.iter().map(|&l| l as f64).collect(),
        }
    }

    fn select(&self, rows: &[usize]) -> Targets {
        match self {
            Targets::Real(v) => Targets::Real(rows.iter().map(|&i| v[i]).collect()),
            Targets::Class { labels, n_classes } => Targets::Class {
                labels: rows.iter().map(|&i| labels[i]).collect(),
                n_classes: *n_classes,
            },
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("bad IDX magic number {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("IDX header truncated: need {needed} bytes, got {actual}")]
    TruncatedHeader { needed: usize, actual: usize },
    #[error("IDX payload has {actual} bytes, header declares {expected}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("IDX dimension {0} has size zero")]
    EmptyDimension(usize),
    #[error("expected a rank-{expected} IDX tensor, got rank {actual}")]
    UnexpectedRank { expected: usize, actual: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("cell at row {row}, column {col} is not a finite number: `{value}`")]
    NonNumericCell { row: usize, col: usize, value: String },
    #[error("file has no data rows")]
    EmptyFile,
    #[error("{rows} feature rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("non-finite value at row {row}")]
    NonFinite { row: usize },
    #[error("class labels must span at least two classes, found {0}")]
    TooFewClasses(usize),
    #[error("label {label} outside 0..{n_classes}")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("split of {n} samples with test fraction {fraction} leaves one side empty")]
    DegenerateSplit { n: usize, fraction: f64 },
    #[error("cannot build {k} folds from {n} samples")]
    TooFewSamples { n: usize, k: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Feature matrix plus targets. Rows are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    targets: Targets,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, targets: Targets, feature_names: Option<Vec<String>>) -> Result<Self, DataError> {
        if features.nrows() != targets.len() {
            return Err(DataError::LengthMismatch {
                rows: features.nrows(),
                targets: targets.len(),
            });
        }
        for (row, r) in features.axis_iter(Axis(0)).enumerate() {
            if r.iter().any(|v| !v.is_finite()) {
                return Err(DataError::NonFinite { row });
            }
        }
        match &targets {
            Targets::Real(v) => {
                if let Some(row) = v.iter().position(|t| !t.is_finite()) {
                    return Err(DataError::NonFinite { row });
                }
            }
            Targets::Class { labels, n_classes } => {
                if *n_classes < 2 {
                    return Err(DataError::TooFewClasses(*n_classes));
                }
                if let Some(&label) = labels.iter().find(|&&l| l >= *n_classes) {
                    return Err(DataError::LabelOutOfRange {
                        label,
                        n_classes: *n_classes,
                    });
                }
            }
        }
        Ok(Self {
            features,
            targets,
            feature_names,
        })
    }

    /// Classification targets with `n_classes = max(label) + 1`.
    pub fn classification(features: Array2<f64>, labels: Vec<usize>) -> Result<Self, DataError> {
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(features, Targets::Class { labels, n_classes }, None)
    }

    pub fn regression(features: Array2<f64>, targets: Vec<f64>) -> Result<Self, DataError> {
        Self::new(features, Targets::Real(targets), None)
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn task(&self) -> Task {
        self.targets.task()
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Output width a model needs: 1 for regression, the class count otherwise.
    pub fn n_outputs(&self) -> usize {
        match &self.targets {
            Targets::Real(_) => 1,
            Targets::Class { n_classes, .. } => *n_classes,
        }
    }

    /// Rows `rows`, in the given order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            targets: self.targets.select(rows),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Same targets, new features (used after standardization).
    pub fn with_features(&self, features: Array2<f64>) -> Dataset {
        assert_eq!(features.nrows(), self.n_samples());
        Dataset {
            features,
            targets: self.targets.clone(),
            feature_names: self.feature_names.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_length_mismatch() {
        let err = Dataset::regression(array![[1.0], [2.0]], vec![1.0]).unwrap_err();
        assert!(matches!(err, DataError::LengthMismatch { rows: 2, targets: 1 }));
    }

    #[test]
    fn rejects_non_finite() {
        let err = Dataset::regression(array![[1.0], [f64::NAN]], vec![1.0, 2.0]).unwrap_err();
        assert!(matches!(err, DataError::NonFinite { row: 1 }));
        let err = Dataset::regression(array![[1.0], [2.0]], vec![1.0, f64::INFINITY]).unwrap_err();
        assert!(matches!(err, DataError::NonFinite { row: 1 }));
    }

    #[test]
    fn classification_needs_two_classes() {
        let err = Dataset::classification(array![[1.0], [2.0]], vec![0, 0]).unwrap_err();
        assert!(matches!(err, DataError::TooFewClasses(1)));
    }

    #[test]
    fn select_keeps_class_count() {
        let d = Dataset::classification(array![[1.0], [2.0], [3.0]], vec![0, 1, 2]).unwrap();
        let s = d.select(&[0]);
        assert_eq!(s.n_outputs(), 3);
        assert_eq!(s.targets().labels().unwrap(), &[0]);
    }
}
