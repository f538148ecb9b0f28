//! Regression trees, histogram gradient boosting and random forests.
//!
//! Inputs are [`FeatureMatrix`] values: sparse rows with implicit zeros, which
//! keeps one-hot and path encodings cheap. Features are quantile-binned once per
//! fit; each bin boundary becomes a raw `x <= threshold` test in the fitted
//! trees, so prediction never needs the bins.

mod binning;
mod boost;
mod forest;
mod tree;

pub use binning::{BinnedMatrix, ColumnBins};
pub use boost::{fit_boosted, fit_boosted_traced, BoostParams, FitTrace};
pub use forest::{fit_forest, ForestParams};
pub use tree::{best_split, GrowParams, SplitInfo, Tree, TreeNode};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GbtError {
    #[error("need at least two training rows with matching targets")]
    EmptyData,
    #[error("non-finite value in features or targets")]
    NonFiniteInput,
    #[error("feature width {found} does not match model width {expected}")]
    LayoutMismatch { expected: usize, found: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Rows of sparse `(column, value)` entries sorted by column; absent
/// entries are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    n_cols: usize,
    rows: Vec<Vec<(u32, f64)>>,
}

impl FeatureMatrix {
    pub fn from_dense(n_cols: usize, rows: &[Vec<f64>]) -> Self {
        let rows = rows
            .iter()
            .map(|r| {
                assert_eq!(r.len(), n_cols, "dense row width mismatch");
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(c, &v)| (c as u32, v))
                    .collect()
            })
            .collect();
        FeatureMatrix { n_cols, rows }
    }

    pub fn from_sparse(n_cols: usize, mut rows: Vec<Vec<(u32, f64)>>) -> Self {
        for r in &mut rows {
            r.sort_by_key(|e| e.0);
            r.retain(|e| e.1 != 0.0);
            assert!(r.iter().all(|e| (e.0 as usize) < n_cols), "column out of range");
        }
        FeatureMatrix { n_cols, rows }
    }

    /// A single column.
    pub fn from_column(values: &[f64]) -> Self {
        Self::from_dense(1, &values.iter().map(|&v| vec![v]).collect::<Vec<_>>())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[(u32, f64)] {
        &self.rows[i]
    }

    pub fn value(&self, i: usize, col: u32) -> f64 {
        sparse_value(&self.rows[i], col)
    }

    pub fn select(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            n_cols: self.n_cols,
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    fn all_finite(&self) -> bool {
        self.rows.iter().flatten().all(|e| e.1.is_finite())
    }
}

pub(crate) fn sparse_value(row: &[(u32, f64)], col: u32) -> f64 {
    match row.binary_search_by_key(&col, |e| e.0) {
        Ok(k) => row[k].1,
        Err(_) => 0.0,
    }
}

/// Additive tree model: `base_score + shrinkage · Σ trees`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub base_score: f64,
    pub shrinkage: f64,
    pub n_features: usize,
    #[serde(default)]
    pub feature_layout_version: String,
    pub trees: Vec<Tree>,
}

impl TreeEnsemble {
    pub fn constant(value: f64, n_features: usize) -> Self {
        TreeEnsemble {
            base_score: value,
            shrinkage: 1.0,
            n_features,
            feature_layout_version: String::new(),
            trees: Vec::new(),
        }
    }

    pub fn predict_sparse_row(&self, row: &[(u32, f64)]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_with(|c| sparse_value(row, c))).sum();
        self.base_score + self.shrinkage * sum
    }

    pub fn predict_dense_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_with(|c| row[c as usize])).sum();
        self.base_score + self.shrinkage * sum
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>, GbtError> {
        if x.n_cols() != self.n_features {
            return Err(GbtError::LayoutMismatch {
                expected: self.n_features,
                found: x.n_cols(),
            });
        }
        Ok((0..x.n_rows()).map(|i| self.predict_sparse_row(x.row(i))).collect())
    }

    pub fn n_leaves(&self) -> usize {
        self.trees.iter().map(|t| t.n_leaves()).sum()
    }
}

/// Mean squared error.
pub fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64
}

pub(crate) fn check_inputs(x: &FeatureMatrix, y: &[f64]) -> Result<(), GbtError> {
    if x.n_rows() != y.len() || y.len() < 2 {
        return Err(GbtError::EmptyData);
    }
    if !x.all_finite() || !y.iter().all(|v| v.is_finite()) {
        return Err(GbtError::NonFiniteInput);
    }
    Ok(())
}
