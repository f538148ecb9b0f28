use rand::Rng;
use serde::{Deserialize, Serialize};

use super::binning::BinnedMatrix;
use super::tree::{GrowParams, Grower};
use super::{check_inputs, FeatureMatrix, GbtError, TreeEnsemble};
use crate::rng::substream;

/// Bagged variance-reduction trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    /// Fraction of columns examined at each split.
    pub max_features: f64,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    /// `None` grows until the leaf constraints stop it.
    pub max_depth: Option<usize>,
    pub max_bin: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_estimators: 116,
            max_features: 0.1706,
            min_samples_split: 2,
            min_samples_leaf: 2,
            bootstrap: false,
            max_depth: None,
            max_bin: 255,
            seed: 0,
        }
    }
}

/// Fits a random forest; the result predicts the average of its trees.
pub fn fit_forest(x: &FeatureMatrix, y: &[f64], p: &ForestParams) -> Result<TreeEnsemble, GbtError> {
    check_inputs(x, y)?;
    if p.n_estimators == 0 || !(p.max_features > 0.0 && p.max_features <= 1.0) {
        return Err(GbtError::InvalidParams(
            "need n_estimators >= 1 and max_features in (0, 1]".into(),
        ));
    }
    let n = y.len();
    let data = BinnedMatrix::new(x, p.max_bin);
    let grow = GrowParams {
        max_depth: p.max_depth.unwrap_or(usize::MAX),
        max_leaves: usize::MAX,
        min_child_weight: p.min_samples_leaf as f64,
        min_split_weight: p.min_samples_split as f64,
        lambda_l1: 0.0,
        lambda_l2: 0.0,
        split_feature_fraction: p.max_features,
    };
    let cols: Vec<u32> = (0..x.n_cols() as u32).collect();
    let trees = (0..p.n_estimators)
        .map(|t| {
            let mut rng = substream(p.seed, "forest-tree", t as u64);
            let mut weights = vec![0.0; n];
            if p.bootstrap {
                for _ in 0..n {
                    weights[rng.gen_range(0..n)] += 1.0;
                }
            } else {
                weights.fill(1.0);
            }
            let rows: Vec<u32> = (0..n as u32).filter(|&r| weights[r as usize] > 0.0).collect();
            let mut grower = Grower::new(&data, y, &weights, &grow, &cols);
            grower.grow(rows, &mut rng).0
        })
        .collect();
    Ok(TreeEnsemble {
        base_score: 0.0,
        shrinkage: 1.0 / p.n_estimators as f64,
        n_features: x.n_cols(),
        feature_layout_version: String::new(),
        trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_tree_interpolates_distinct_points() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x * 1.7).sin() + 0.1 * x).collect();
        let x = FeatureMatrix::from_column(&xs);
        let p = ForestParams {
            n_estimators: 1,
            max_features: 1.0,
            min_samples_split: 2,
            min_samples_leaf: 1,
            bootstrap: false,
            max_depth: None,
            max_bin: 255,
            seed: 3,
        };
        let m = fit_forest(&x, &ys, &p).unwrap();
        for (p, t) in m.predict(&x).unwrap().iter().zip(&ys) {
            assert!((p - t).abs() < 1e-12, "{p} vs {t}");
        }
    }

    #[test]
    fn constant_target_gives_constant_forest() {
        let x = FeatureMatrix::from_dense(2, &[vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0], vec![3.0, 1.0]]);
        let m = fit_forest(&x, &[0.5; 4], &ForestParams { bootstrap: true, ..ForestParams::default() }).unwrap();
        for p in m.predict(&x).unwrap() {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }
}
