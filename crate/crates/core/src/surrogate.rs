//! The surrogate benchmark: an ensemble of boosted-tree accuracy models
//! whose disagreement defines a Gaussian predictive distribution, a runtime
//! model, and a self-describing JSON model file.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::encoding::{FeatureKind, FeatureLayout};
use crate::gbtree::{fit_boosted, BoostParams, FeatureMatrix, GbtError, TreeEnsemble};
use crate::metrics::{kl_gaussian, mae, mean, sample_std, GaussianSummary, MetricError};
use crate::rng::{substream, SimRng};
use crate::searchspace::{Genotype, SpaceConfig};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_BENCHMARK_VERSION: &str = "NB301-GBT-v0.9-synth";
const DENSE_QUERY_WIDTH: usize = 4096;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("need at least {needed} distinct genotypes, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("model format_version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("noise report needs at least two seeds per genotype, including the training seed")]
    InsufficientRepeats,
    #[error(transparent)]
    Gbt(#[from] GbtError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Ensemble size, one member per cross-validation fold.
    pub k: usize,
    pub features: FeatureKind,
    pub std_floor: f64,
    pub runtime_floor: f64,
    pub benchmark_version: String,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            k: 10,
            features: FeatureKind::OneHot,
            std_floor: 1e-4,
            runtime_floor: 1.0,
            benchmark_version: DEFAULT_BENCHMARK_VERSION.to_owned(),
            seed: 0,
        }
    }
}

/// Settings echoed into the model file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub k: usize,
    pub boost: BoostParams,
    pub seed: u64,
    pub n_train_records: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub mean_acc: f64,
    pub std_acc: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sample_acc: Option<f64>,
    pub runtime_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateBenchmark {
    pub format_version: u32,
    pub benchmark_version: String,
    pub feature_layout_version: String,
    pub layout: FeatureLayout,
    pub std_floor: f64,
    pub runtime_floor: f64,
    pub members: Vec<TreeEnsemble>,
    pub runtime_model: TreeEnsemble,
    pub hyperparameters: Hyperparameters,
}

/// Assigns each distinct genotype (with all its records) to one of `k` folds.
pub fn group_folds(ds: &Dataset, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut groups: Vec<&Genotype> = ds.genotypes().iter().collect();
    groups.shuffle(&mut substream(seed, "folds", 0));
    let mut folds = vec![Vec::new(); k];
    for (i, g) in groups.into_iter().enumerate() {
        folds[i % k].extend_from_slice(ds.indices_of(g));
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

fn design(layout: &FeatureLayout, ds: &Dataset, idx: &[usize]) -> FeatureMatrix {
    let rows = idx.iter().map(|&i| layout.encode_sparse(&ds.records()[i].genotype)).collect();
    FeatureMatrix::from_sparse(layout.width(), rows)
}

/// Fits `opts.k` members by group-aware cross-validation over all records of
/// `ds`: member k trains on every fold but k and early-stops on fold k with
/// seed `boost.seed + k`. The runtime model uses fold 0 for early stopping.
pub fn fit_benchmark(
    ds: &Dataset,
    space: &SpaceConfig,
    boost: &BoostParams,
    opts: &FitOptions,
) -> Result<SurrogateBenchmark, SurrogateError> {
    let k = opts.k.max(1);
    let needed = k.max(2);
    if ds.genotypes().len() < needed {
        return Err(SurrogateError::TooFewRecords {
            needed,
            got: ds.genotypes().len(),
        });
    }
    let layout = FeatureLayout {
        kind: opts.features,
        space: space.clone(),
    };
    let version = layout.version();
    let all: Vec<usize> = (0..ds.len()).collect();
    let x = design(&layout, ds, &all);
    let acc: Vec<f64> = ds.records().iter().map(|r| r.val_acc).collect();
    let runtime: Vec<f64> = ds.records().iter().map(|r| r.runtime_s).collect();
    let folds = group_folds(ds, k.max(2), opts.seed);

    let fit_one = |target: &[f64], val_fold: Option<&[usize]>, seed: u64| -> Result<TreeEnsemble, GbtError> {
        let p = BoostParams { seed, ..boost.clone() };
        let mut m = match val_fold {
            Some(val) => {
                let train: Vec<usize> = all.iter().copied().filter(|i| val.binary_search(i).is_err()).collect();
                let yt: Vec<f64> = train.iter().map(|&i| target[i]).collect();
                let yv: Vec<f64> = val.iter().map(|&i| target[i]).collect();
                fit_boosted(&x.select(&train), &yt, Some((&x.select(val), &yv)), &p)?
            }
            None => fit_boosted(&x, target, None, &p)?,
        };
        m.feature_layout_version = version.clone();
        Ok(m)
    };

    let members: Vec<TreeEnsemble> = (0..k)
        .into_par_iter()
        .map(|m| {
            let val = (k > 1).then(|| folds[m].as_slice());
            fit_one(&acc, val, boost.seed.wrapping_add(m as u64))
        })
        .collect::<Result<_, _>>()?;
    let runtime_model = fit_one(&runtime, Some(&folds[0]), boost.seed)?;

    Ok(SurrogateBenchmark {
        format_version: MODEL_FORMAT_VERSION,
        benchmark_version: opts.benchmark_version.clone(),
        feature_layout_version: version,
        layout,
        std_floor: opts.std_floor,
        runtime_floor: opts.runtime_floor,
        members,
        runtime_model,
        hyperparameters: Hyperparameters {
            k,
            boost: boost.clone(),
            seed: opts.seed,
            n_train_records: ds.len(),
        },
    })
}

impl SurrogateBenchmark {
    pub fn space(&self) -> &SpaceConfig {
        &self.layout.space
    }

    fn predict_with(&self, g: &Genotype, models: &[TreeEnsemble]) -> Vec<f64> {
        // narrow layouts are faster to walk as dense rows
        if self.layout.width() <= DENSE_QUERY_WIDTH {
            let row = self.layout.encode_dense(g);
            models.iter().map(|m| m.predict_dense_row(&row)).collect()
        } else {
            let row = self.layout.encode_sparse(g);
            models.iter().map(|m| m.predict_sparse_row(&row)).collect()
        }
    }

    /// Accuracy predicted by each member, in member order.
    pub fn member_predictions(&self, g: &Genotype) -> Vec<f64> {
        self.predict_with(g, &self.members)
    }

    /// Predictive distribution: member mean and floored member spread.
    pub fn predictive(&self, g: &Genotype) -> GaussianSummary {
        let p = self.member_predictions(g);
        GaussianSummary::new(mean(&p), sample_std(&p).max(self.std_floor))
    }

    pub fn predict_runtime(&self, g: &Genotype) -> f64 {
        self.predict_with(g, std::slice::from_ref(&self.runtime_model))[0].max(self.runtime_floor)
    }

    pub fn query(&self, g: &Genotype, with_noise: bool, rng: &mut SimRng) -> QueryResult {
        let d = self.predictive(g);
        let sample_acc = with_noise.then(|| {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            (d.mean + d.std * z).clamp(0.0, 1.0)
        });
        QueryResult {
            mean_acc: d.mean,
            std_acc: d.std,
            sample_acc,
            runtime_s: self.predict_runtime(g),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("benchmark serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SurrogateError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| SurrogateError::CorruptModel(e.to_string()))?;
        let found = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| SurrogateError::CorruptModel("missing format_version".into()))?;
        if found != MODEL_FORMAT_VERSION as u64 {
            return Err(SurrogateError::VersionMismatch {
                found,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let b: SurrogateBenchmark =
            serde_json::from_value(value).map_err(|e| SurrogateError::CorruptModel(e.to_string()))?;
        let width = b.layout.width();
        if b.members.is_empty()
            || b.members.iter().chain([&b.runtime_model]).any(|m| m.n_features != width)
            || b.feature_layout_version != b.layout.version()
        {
            return Err(SurrogateError::CorruptModel("members disagree with the feature layout".into()));
        }
        Ok(b)
    }

    pub fn save(&self, path: &Path) -> Result<(), SurrogateError> {
        Ok(crate::io::write_atomic(path, self.to_json().as_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self, SurrogateError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub n_genotypes: usize,
    pub train_seed: u64,
    /// Ensemble mean vs. mean of the held-out seeds.
    pub mae_surrogate: f64,
    /// Training-seed value vs. mean of the held-out seeds.
    pub mae_tabular: f64,
    pub mean_pred_std: f64,
    /// Mean per-genotype sample std over all seeds.
    pub groundtruth_mean_std: f64,
    /// KL(groundtruth ‖ predicted), averaged over genotypes.
    pub kl_mean: f64,
    pub kl_max: f64,
    pub kl: Vec<f64>,
}

/// Compares the benchmark with repeated evaluations. Only `train_seed`
/// records may have been used for fitting; the others act as held-out truth.
/// Groundtruth standard deviations are floored like predicted ones.
pub fn noise_report(b: &SurrogateBenchmark, repeats: &Dataset, train_seed: u64) -> Result<NoiseReport, SurrogateError> {
    let mut surrogate = Vec::new();
    let mut tabular = Vec::new();
    let mut heldout = Vec::new();
    let mut pred_std = Vec::new();
    let mut gt_std = Vec::new();
    let mut kl = Vec::new();
    for g in repeats.genotypes() {
        let idx = repeats.indices_of(g);
        let recs: Vec<_> = idx.iter().map(|&i| &repeats.records()[i]).collect();
        let train = recs.iter().find(|r| r.seed == train_seed).ok_or(SurrogateError::InsufficientRepeats)?;
        let others: Vec<f64> = recs.iter().filter(|r| r.seed != train_seed).map(|r| r.val_acc).collect();
        if others.is_empty() {
            return Err(SurrogateError::InsufficientRepeats);
        }
        let all: Vec<f64> = recs.iter().map(|r| r.val_acc).collect();
        let pred = b.predictive(g);
        let truth = GaussianSummary::of_samples(&all);
        surrogate.push(pred.mean);
        tabular.push(train.val_acc);
        heldout.push(mean(&others));
        pred_std.push(pred.std);
        gt_std.push(truth.std);
        kl.push(kl_gaussian(truth.with_std_floor(b.std_floor), pred)?);
    }
    if heldout.is_empty() {
        return Err(SurrogateError::InsufficientRepeats);
    }
    Ok(NoiseReport {
        n_genotypes: heldout.len(),
        train_seed,
        mae_surrogate: mae(&heldout, &surrogate)?,
        mae_tabular: mae(&heldout, &tabular)?,
        mean_pred_std: mean(&pred_std),
        groundtruth_mean_std: mean(&gt_std),
        kl_mean: mean(&kl),
        kl_max: kl.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        kl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{EvalRecord, FORMAT_VERSION};
    use crate::rng::seeded;
    use crate::searchspace::sample_uniform;

    fn tiny(n: usize, seed: u64) -> Dataset {
        let cfg = SpaceConfig::default();
        let mut rng = seeded(seed);
        let recs = (0..n)
            .map(|i| EvalRecord {
                genotype: sample_uniform(&mut rng, &cfg),
                train_acc: 0.95,
                val_acc: 0.9 + 0.001 * (i % 7) as f64 + 0.002 * rng.gen::<f64>(),
                test_acc: 0.9,
                runtime_s: 1000.0 + i as f64,
                n_params: 1,
                optimizer: "RS".into(),
                seed: 0,
                format_version: FORMAT_VERSION,
            })
            .collect();
        Dataset::new(recs, &cfg).unwrap()
    }

    fn quick() -> BoostParams {
        BoostParams {
            n_rounds: 30,
            learning_rate: 0.3,
            lambda_l2: 1.0,
            feature_fraction: 0.5,
            min_child_weight: 1.0,
            early_stopping_rounds: 5,
            ..BoostParams::default()
        }
    }

    #[test]
    fn two_folds_on_ten_records() {
        let ds = tiny(10, 1);
        let folds = group_folds(&ds, 2, 0);
        assert_eq!(folds.iter().map(Vec::len).collect::<Vec<_>>(), vec![5, 5]);
        let opts = FitOptions { k: 2, ..FitOptions::default() };
        let b = fit_benchmark(&ds, &SpaceConfig::default(), &quick(), &opts).unwrap();
        assert_eq!(b.members.len(), 2);
        assert_eq!(b.hyperparameters.k, 2);
    }

    #[test]
    fn too_few_records() {
        let ds = tiny(3, 2);
        let r = fit_benchmark(&ds, &SpaceConfig::default(), &quick(), &FitOptions::default());
        assert!(matches!(r, Err(SurrogateError::TooFewRecords { needed: 10, got: 3 })));
    }

    #[test]
    fn query_contract() {
        let ds = tiny(60, 3);
        let opts = FitOptions { k: 3, ..FitOptions::default() };
        let b = fit_benchmark(&ds, &SpaceConfig::default(), &quick(), &opts).unwrap();
        let g = sample_uniform(&mut seeded(9), &SpaceConfig::default());
        let a = b.query(&g, false, &mut seeded(1));
        assert_eq!(a, b.query(&g, false, &mut seeded(2)));
        assert!(a.sample_acc.is_none() && a.std_acc >= b.std_floor && a.runtime_s >= 1.0);
        let s1 = b.query(&g, true, &mut seeded(5));
        assert_eq!(s1, b.query(&g, true, &mut seeded(5)));
        assert!((0.0..=1.0).contains(&s1.sample_acc.unwrap()));
    }

    #[test]
    fn unknown_format_version() {
        let ds = tiny(20, 4);
        let opts = FitOptions { k: 2, ..FitOptions::default() };
        let b = fit_benchmark(&ds, &SpaceConfig::default(), &quick(), &opts).unwrap();
        let text = b.to_json().replacen("\"format_version\":1", "\"format_version\":7", 1);
        assert!(matches!(
            SurrogateBenchmark::from_json(&text),
            Err(SurrogateError::VersionMismatch { found: 7, .. })
        ));
        assert!(matches!(SurrogateBenchmark::from_json("{}"), Err(SurrogateError::CorruptModel(_))));
        assert_eq!(SurrogateBenchmark::from_json(&b.to_json()).unwrap(), b);
    }
}
