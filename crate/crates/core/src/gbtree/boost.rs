use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::binning::BinnedMatrix;
use super::tree::{GrowParams, Grower};
use super::{check_inputs, mse, FeatureMatrix, GbtError, TreeEnsemble};
use crate::rng::seeded;

/// Squared-error gradient boosting parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub max_leaves: usize,
    pub max_bin: usize,
    /// Fraction of columns drawn for each tree.
    pub feature_fraction: f64,
    pub min_child_weight: f64,
    pub lambda_l1: f64,
    pub lambda_l2: f64,
    /// Stop after this many rounds without validation improvement; 0 disables.
    pub early_stopping_rounds: usize,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self::lgb_profile()
    }
}

impl BoostParams {
    /// Leaf-bounded profile with the tuned LightGBM-style defaults.
    pub fn lgb_profile() -> Self {
        BoostParams {
            n_rounds: 2000,
            learning_rate: 0.0218,
            max_depth: 18,
            max_leaves: 40,
            max_bin: 336,
            feature_fraction: 0.1532,
            min_child_weight: 0.5822,
            lambda_l1: 0.0115,
            lambda_l2: 134.5075,
            early_stopping_rounds: 100,
            seed: 0,
        }
    }

    /// Depth-bounded profile with the tuned XGBoost-style defaults. Column
    /// sampling by tree (0.2545) and by level (0.6909) are folded into one
    /// per-tree fraction.
    pub fn xgb_profile() -> Self {
        BoostParams {
            n_rounds: 2000,
            learning_rate: 0.00824,
            max_depth: 13,
            max_leaves: usize::MAX,
            max_bin: 256,
            feature_fraction: 0.2545 * 0.6909,
            min_child_weight: 39.0,
            lambda_l1: 0.2417,
            lambda_l2: 31.3933,
            early_stopping_rounds: 100,
            seed: 0,
        }
    }

    pub fn check(&self) -> Result<(), GbtError> {
        let bad = |m: &str| Err(GbtError::InvalidParams(m.to_owned()));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1");
        }
        if self.max_leaves < 2 {
            return bad("max_leaves must be at least 2");
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return bad("feature_fraction must lie in (0, 1]");
        }
        if self.lambda_l1 < 0.0 || self.lambda_l2 < 0.0 || self.min_child_weight < 0.0 {
            return bad("regularization terms must be non-negative");
        }
        if self.max_bin < 2 {
            return bad("max_bin must be at least 2");
        }
        Ok(())
    }

    fn grow_params(&self) -> GrowParams {
        GrowParams {
            max_depth: self.max_depth,
            max_leaves: self.max_leaves,
            min_child_weight: self.min_child_weight,
            min_split_weight: 0.0,
            lambda_l1: self.lambda_l1,
            lambda_l2: self.lambda_l2,
            split_feature_fraction: 1.0,
        }
    }
}

/// Per-round losses of a boosting run. Index 0 is the base-score model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Number of trees kept.
    pub best_round: usize,
}

pub fn fit_boosted(
    x: &FeatureMatrix,
    y: &[f64],
    val: Option<(&FeatureMatrix, &[f64])>,
    p: &BoostParams,
) -> Result<TreeEnsemble, GbtError> {
    fit_boosted_traced(x, y, val, p).map(|(m, _)| m)
}

/// Fits a boosted ensemble and returns the loss trace. With a validation
/// set, training stops once the validation loss has not improved for
/// `early_stopping_rounds` rounds and the best-round prefix is returned.
pub fn fit_boosted_traced(
    x: &FeatureMatrix,
    y: &[f64],
    val: Option<(&FeatureMatrix, &[f64])>,
    p: &BoostParams,
) -> Result<(TreeEnsemble, FitTrace), GbtError> {
    p.check()?;
    check_inputs(x, y)?;
    if let Some((vx, vy)) = val {
        if vx.n_rows() != vy.len() {
            return Err(GbtError::EmptyData);
        }
        if vx.n_cols() != x.n_cols() {
            return Err(GbtError::LayoutMismatch {
                expected: x.n_cols(),
                found: vx.n_cols(),
            });
        }
        check_inputs(vx, vy).or_else(|e| if vy.len() < 2 && e == GbtError::EmptyData { Ok(()) } else { Err(e) })?;
    }
    let val = val.filter(|(_, vy)| !vy.is_empty());

    let n = y.len();
    let base = y.iter().sum::<f64>() / n as f64;
    let mut model = TreeEnsemble {
        base_score: base,
        shrinkage: p.learning_rate,
        n_features: x.n_cols(),
        feature_layout_version: String::new(),
        trees: Vec::new(),
    };
    let data = BinnedMatrix::new(x, p.max_bin);
    let grow = p.grow_params();
    let weights = vec![1.0; n];
    let mut rng = seeded(p.seed);

    let mut pred = vec![base; n];
    let mut residual: Vec<f64> = y.iter().map(|t| t - base).collect();
    let mut val_pred = val.map(|(_, vy)| vec![base; vy.len()]);

    let mut trace = FitTrace {
        train_loss: vec![mse(&pred, y)],
        val_loss: Vec::new(),
        best_round: 0,
    };
    let mut best_val = f64::INFINITY;
    if let (Some((_, vy)), Some(vp)) = (val, &val_pred) {
        best_val = mse(vp, vy);
        trace.val_loss.push(best_val);
    }

    // constant columns can never split; sample among the others
    let usable: Vec<u32> = (0..x.n_cols() as u32)
        .filter(|&c| data.columns[c as usize].n_bins() > 1)
        .collect();
    let n_usable = usable.len();
    let k = ((p.feature_fraction * n_usable as f64).round() as usize).clamp(1, n_usable.max(1));
    for round in 1..=p.n_rounds {
        let mut cols: Vec<u32> = if k >= n_usable {
            usable.clone()
        } else {
            index::sample(&mut rng, n_usable, k).into_iter().map(|i| usable[i]).collect()
        };
        cols.sort_unstable();
        let (tree, leaves) = {
            let mut grower = Grower::new(&data, &residual, &weights, &grow, &cols);
            grower.grow((0..n as u32).collect(), &mut rng)
        };
        for (node, rows) in leaves {
            let step = p.learning_rate * leaf_of(&tree, node);
            for r in rows {
                pred[r as usize] += step;
                residual[r as usize] = y[r as usize] - pred[r as usize];
            }
        }
        trace.train_loss.push(mse(&pred, y));
        if let (Some((vx, vy)), Some(vp)) = (val, val_pred.as_mut()) {
            for (i, v) in vp.iter_mut().enumerate() {
                *v += p.learning_rate * tree.predict_with(|c| vx.value(i, c));
            }
            let loss = mse(vp, vy);
            trace.val_loss.push(loss);
            if loss < best_val {
                best_val = loss;
                trace.best_round = round;
            }
        }
        model.trees.push(tree);
        if val.is_some()
            && p.early_stopping_rounds > 0
            && round - trace.best_round >= p.early_stopping_rounds
        {
            break;
        }
    }
    if val.is_some() {
        model.trees.truncate(trace.best_round);
    } else {
        trace.best_round = model.trees.len();
    }
    Ok((model, trace))
}

fn leaf_of(tree: &super::Tree, node: usize) -> f64 {
    match tree.nodes[node] {
        super::TreeNode::Leaf { value } => value,
        super::TreeNode::Split { .. } => unreachable!("grower reported a split node as leaf"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbtree::TreeNode;

    fn plain(n_rounds: usize) -> BoostParams {
        BoostParams {
            n_rounds,
            learning_rate: 1.0,
            max_depth: 1,
            max_leaves: 2,
            max_bin: 255,
            feature_fraction: 1.0,
            min_child_weight: 0.0,
            lambda_l1: 0.0,
            lambda_l2: 0.0,
            early_stopping_rounds: 0,
            seed: 0,
        }
    }

    #[test]
    fn single_stump() {
        let x = FeatureMatrix::from_column(&[0.0, 1.0]);
        let m = fit_boosted(&x, &[0.0, 1.0], None, &plain(1)).unwrap();
        assert_eq!(m.trees.len(), 1);
        match m.trees[0].nodes[0] {
            TreeNode::Split { threshold, .. } => assert_eq!(threshold, 0.5),
            _ => panic!("expected a split"),
        }
        assert_eq!(m.predict(&x).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn constant_target() {
        let x = FeatureMatrix::from_dense(2, &[vec![0.0, 1.0], vec![1.0, 2.0], vec![3.0, 0.5]]);
        let m = fit_boosted(&x, &[0.1, 0.1, 0.1], None, &BoostParams { n_rounds: 20, ..plain(0) }).unwrap();
        for p in m.predict(&x).unwrap() {
            assert!((p - 0.1).abs() < 1e-12);
        }
        assert!(m.trees.iter().all(|t| t.n_leaves() == 1));
    }

    #[test]
    fn empty_ensemble_predicts_base() {
        let m = TreeEnsemble::constant(0.93, 3);
        let x = FeatureMatrix::from_dense(3, &[vec![1.0, 2.0, 3.0]]);
        assert_eq!(m.predict(&x).unwrap(), vec![0.93]);
        let bad = FeatureMatrix::from_dense(2, &[vec![1.0, 2.0]]);
        assert!(matches!(m.predict(&bad), Err(GbtError::LayoutMismatch { .. })));
    }

    #[test]
    fn input_errors() {
        let x = FeatureMatrix::from_column(&[0.0]);
        assert_eq!(fit_boosted(&x, &[1.0], None, &plain(1)), Err(GbtError::EmptyData));
        let x = FeatureMatrix::from_column(&[0.0, f64::NAN]);
        assert_eq!(fit_boosted(&x, &[1.0, 2.0], None, &plain(1)), Err(GbtError::NonFiniteInput));
        let x = FeatureMatrix::from_column(&[0.0, 1.0]);
        let p = BoostParams { learning_rate: 0.0, ..plain(1) };
        assert!(matches!(fit_boosted(&x, &[1.0, 2.0], None, &p), Err(GbtError::InvalidParams(_))));
    }

    #[test]
    fn profiles_are_valid() {
        BoostParams::lgb_profile().check().unwrap();
        BoostParams::xgb_profile().check().unwrap();
        assert_eq!(BoostParams::default().max_leaves, 40);
        assert_eq!(BoostParams::default().early_stopping_rounds, 100);
    }
}
