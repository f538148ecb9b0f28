use rand::seq::SliceRandom;
use rand::Rng;
use surrobench::gbtree::{fit_boosted, fit_boosted_traced, fit_forest, BoostParams, FeatureMatrix, ForestParams};
use surrobench::metrics::r2;
use surrobench::rng::seeded;

fn additive_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = seeded(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let y = rows
        .iter()
        .map(|r| 2.0 * r[0] + (3.0 * r[1]).sin() + r[2] * r[2] - 0.5 * r[3] + (r[4] > 0.2) as u8 as f64)
        .collect();
    (rows, y)
}

#[test]
fn default_profile_fits_noiseless_additive_target() {
    let (rows, y) = additive_data(500, 21);
    let x = FeatureMatrix::from_dense(5, &rows);
    let m = fit_boosted(&x, &y, None, &BoostParams::default()).unwrap();
    let fit = r2(&y, &m.predict(&x).unwrap()).unwrap();
    assert!(fit >= 0.99, "training R2 {fit}");
}

#[test]
fn training_loss_never_increases_without_l1() {
    for seed in 0..5 {
        let (rows, y) = additive_data(300, 30 + seed);
        let x = FeatureMatrix::from_dense(5, &rows);
        let p = BoostParams { n_rounds: 300, lambda_l1: 0.0, seed, ..BoostParams::default() };
        let (_, trace) = fit_boosted_traced(&x, &y, None, &p).unwrap();
        assert_eq!(trace.train_loss.len(), 301);
        for w in trace.train_loss.windows(2) {
            assert!(w[1] <= w[0], "{} > {}", w[1], w[0]);
        }
    }
}

#[test]
fn early_stopping_keeps_the_best_validation_prefix() {
    let (rows, y) = additive_data(300, 40);
    let mut rng = seeded(41);
    let noisy: Vec<f64> = y.iter().map(|v| v + rng.gen_range(-1.5..1.5)).collect();
    let (vrows, vy) = additive_data(200, 42);
    let (x, vx) = (FeatureMatrix::from_dense(5, &rows), FeatureMatrix::from_dense(5, &vrows));
    let p = BoostParams {
        n_rounds: 3000,
        learning_rate: 0.5,
        lambda_l2: 0.0,
        min_child_weight: 1.0,
        feature_fraction: 1.0,
        early_stopping_rounds: 15,
        ..BoostParams::default()
    };
    let (m, trace) = fit_boosted_traced(&x, &noisy, Some((&vx, &vy)), &p).unwrap();
    let best = trace
        .val_loss
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .unwrap()
        .0;
    assert_eq!(trace.best_round, best);
    assert_eq!(m.trees.len(), best);
    assert_eq!(trace.val_loss.len(), best + 16);
}

#[test]
fn prediction_is_invariant_to_row_order() {
    let (rows, y) = additive_data(300, 50);
    let x = FeatureMatrix::from_dense(5, &rows);
    let m = fit_boosted(&x, &y, None, &BoostParams { n_rounds: 100, ..BoostParams::default() }).unwrap();
    let before = m.predict(&x).unwrap();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut seeded(51));
    let shuffled: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
    let after = m.predict(&FeatureMatrix::from_dense(5, &shuffled)).unwrap();
    for (k, &i) in order.iter().enumerate() {
        assert_eq!(after[k].to_bits(), before[i].to_bits());
    }
}

#[test]
fn boosting_is_deterministic_per_seed() {
    let (rows, y) = additive_data(200, 60);
    let x = FeatureMatrix::from_dense(5, &rows);
    let p = BoostParams { n_rounds: 50, ..BoostParams::default() };
    assert_eq!(fit_boosted(&x, &y, None, &p).unwrap(), fit_boosted(&x, &y, None, &p).unwrap());
}

#[test]
fn forest_predictions_vary_across_seeds_only() {
    let (rows, y) = additive_data(300, 70);
    let x = FeatureMatrix::from_dense(5, &rows);
    let (trows, _) = additive_data(50, 71);
    let tx = FeatureMatrix::from_dense(5, &trows);
    let preds: Vec<Vec<f64>> = (0..5)
        .map(|seed| {
            let p = ForestParams { n_estimators: 10, bootstrap: true, seed, ..ForestParams::default() };
            fit_forest(&x, &y, &p).unwrap().predict(&tx).unwrap()
        })
        .collect();
    let again = fit_forest(&x, &y, &ForestParams { n_estimators: 10, bootstrap: true, seed: 0, ..ForestParams::default() })
        .unwrap()
        .predict(&tx)
        .unwrap();
    assert_eq!(again, preds[0]);
    let mean_var: f64 = (0..tx.n_rows())
        .map(|i| {
            let v: Vec<f64> = preds.iter().map(|p| p[i]).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        })
        .sum::<f64>()
        / tx.n_rows() as f64;
    assert!(mean_var > 0.0);
}
