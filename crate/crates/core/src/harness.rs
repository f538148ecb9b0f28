//! Experiment drivers: data-fit and leave-one-optimizer-out evaluation,
//! parameter-free and topology sweeps, the seed-smoothing experiment, and
//! optimizer benchmark suites. Each returns a typed report; [`RunDir`]
//! writes reports and CSVs under a directory named by the config hash.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{loo_partition, stratified_split, stratified_split_of, Dataset, DatasetError, SplitSpec};
use crate::encoding::FeatureLayout;
use crate::gbtree::{fit_boosted_traced, BoostParams, FeatureMatrix, GbtError};
use crate::metrics::{kendall_tau, mae, mean, quantile, r2, round_to_permille, sparse_kendall_tau, MetricError};
use crate::optimizers::{run_optimizer, Objective, OptimizerConfig, OptimizerKind, Trajectory};
use crate::rng::substream;
use crate::searchspace::{
    cell_from_parts, depth, enumerate_topologies, replace_parameter_free, Genotype, Operation, SpaceConfig,
    SpaceError,
};
use crate::surrogate::{fit_benchmark, noise_report, FitOptions, NoiseReport, SurrogateBenchmark, SurrogateError};
use crate::synth::{generate_repeats, SyntheticOracle};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Gbt(#[from] GbtError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("data leakage: {0}")]
    Leakage(String),
    #[error("{0}")]
    InvalidInput(String),
}

/// Fails unless the two index sets share no element.
pub fn assert_disjoint(a: &[usize], b: &[usize], what: &str) -> Result<(), HarnessError> {
    let set: HashSet<usize> = a.iter().copied().collect();
    match b.iter().find(|i| set.contains(i)) {
        Some(i) => Err(HarnessError::Leakage(format!("{what}: record {i} on both sides"))),
        None => Ok(()),
    }
}

/// Fails if any genotype has records on both sides.
pub fn assert_genotype_disjoint(ds: &Dataset, a: &[usize], b: &[usize], what: &str) -> Result<(), HarnessError> {
    let set: HashSet<&Genotype> = a.iter().map(|&i| &ds.records()[i].genotype).collect();
    match b.iter().find(|&&i| set.contains(&ds.records()[i].genotype)) {
        Some(i) => Err(HarnessError::Leakage(format!("{what}: genotype of record {i} on both sides"))),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub n: usize,
    pub r2: f64,
    pub kendall_tau: f64,
    pub sparse_kendall_tau: f64,
    pub mae: f64,
}

impl FitMetrics {
    pub fn compute(truth: &[f64], pred: &[f64]) -> Result<Self, MetricError> {
        Ok(FitMetrics {
            n: truth.len(),
            r2: r2(truth, pred)?,
            kendall_tau: kendall_tau(truth, pred)?,
            sparse_kendall_tau: sparse_kendall_tau(truth, pred)?,
            mae: mae(truth, pred)?,
        })
    }
}

fn design(layout: &FeatureLayout, ds: &Dataset, idx: &[usize]) -> FeatureMatrix {
    FeatureMatrix::from_sparse(
        layout.width(),
        idx.iter().map(|&i| layout.encode_sparse(&ds.records()[i].genotype)).collect(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatafitReport {
    pub n_train: usize,
    pub best_round: usize,
    pub val: FitMetrics,
    pub test: FitMetrics,
}

/// Fits one booster on the train split (early stopping on val) and scores
/// validation accuracy predictions on val and test.
pub fn run_datafit_eval(
    ds: &Dataset,
    space: &SpaceConfig,
    boost: &BoostParams,
    split: &SplitSpec,
) -> Result<DatafitReport, HarnessError> {
    let s = stratified_split(ds, split)?;
    if s.test.len() < 2 || s.val.len() < 2 {
        return Err(HarnessError::InvalidInput("validation and test splits need two records each".into()));
    }
    for (a, b, what) in [(&s.train, &s.val, "train/val"), (&s.train, &s.test, "train/test"), (&s.val, &s.test, "val/test")] {
        assert_disjoint(a, b, what)?;
        assert_genotype_disjoint(ds, a, b, what)?;
    }
    let layout = FeatureLayout::one_hot(space);
    let (yt, yv, ye) = (ds.val_accs(&s.train), ds.val_accs(&s.val), ds.val_accs(&s.test));
    let xv = design(&layout, ds, &s.val);
    let (model, trace) = fit_boosted_traced(&design(&layout, ds, &s.train), &yt, Some((&xv, &yv)), boost)?;
    let pv = model.predict(&xv)?;
    let pe = model.predict(&design(&layout, ds, &s.test))?;
    Ok(DatafitReport {
        n_train: s.train.len(),
        best_round: trace.best_round,
        val: FitMetrics::compute(&yv, &pv)?,
        test: FitMetrics::compute(&ye, &pe)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LooRow {
    pub left_out: String,
    pub n_train: usize,
    pub n_val: usize,
    pub n_held_out: usize,
    pub r2: f64,
    pub kendall_tau: f64,
    pub sparse_kendall_tau: f64,
}

/// One row per optimizer tag: train on the other tags (0.9/0.1 stratified
/// train/val split), evaluate on the left-out tag's records.
pub fn run_loo_eval(
    ds: &Dataset,
    space: &SpaceConfig,
    boost: &BoostParams,
    seed: u64,
) -> Result<Vec<LooRow>, HarnessError> {
    let tags = ds.tags();
    if tags.len() < 2 {
        return Err(HarnessError::InvalidInput("leave-one-optimizer-out needs at least two optimizer tags".into()));
    }
    let layout = FeatureLayout::one_hot(space);
    tags.par_iter()
        .map(|tag| {
            let (rest, held) = loo_partition(ds, tag)?;
            assert_disjoint(&rest, &held, "train_val/held_out")?;
            let s = stratified_split_of(ds, &rest, &SplitSpec::new(0.9, 0.1, 0.0, seed))?;
            assert_disjoint(&s.train, &held, "train/held_out")?;
            assert_disjoint(&s.val, &held, "val/held_out")?;
            let xv = design(&layout, ds, &s.val);
            let yv = ds.val_accs(&s.val);
            let (model, _) = fit_boosted_traced(&design(&layout, ds, &s.train), &ds.val_accs(&s.train), Some((&xv, &yv)), boost)?;
            let pred = model.predict(&design(&layout, ds, &held))?;
            let truth = ds.val_accs(&held);
            Ok(LooRow {
                left_out: tag.clone(),
                n_train: s.train.len(),
                n_val: s.val.len(),
                n_held_out: held.len(),
                r2: r2(&truth, &pred)?,
                kendall_tau: kendall_tau(&truth, &pred)?,
                sparse_kendall_tau: sparse_kendall_tau(&truth, &pred)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub genotype_index: usize,
    pub ratio: f64,
    pub op: Operation,
    pub repeat: usize,
    pub predicted_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub ratio: f64,
    pub op: Operation,
    pub n: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamFreeReport {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummary>,
}

impl ParamFreeReport {
    pub fn summary_for(&self, ratio: f64, op: Operation) -> Option<&SweepSummary> {
        self.summary.iter().find(|s| s.ratio == ratio && s.op == op)
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        crate::io::write_csv(
            path,
            &["genotype_index", "ratio", "op", "repeat", "predicted_error"],
            self.rows.iter().map(|r| {
                [
                    r.genotype_index.to_string(),
                    r.ratio.to_string(),
                    r.op.name().to_string(),
                    r.repeat.to_string(),
                    r.predicted_error.to_string(),
                ]
            }),
        )
    }
}

/// Predicted error of every genotype after replacing a `ratio` share of its
/// edges by each parameter-free op, `repeats` times with fresh edge draws.
pub fn run_paramfree_sweep(
    b: &SurrogateBenchmark,
    genotypes: &[Genotype],
    ratios: &[f64],
    ops: &[Operation],
    repeats: usize,
    seed: u64,
) -> Result<ParamFreeReport, HarnessError> {
    let mut rows = Vec::with_capacity(genotypes.len() * ratios.len() * ops.len() * repeats);
    let mut summary = Vec::new();
    for (ri, &ratio) in ratios.iter().enumerate() {
        for (oi, &op) in ops.iter().enumerate() {
            let mut errs = Vec::with_capacity(genotypes.len() * repeats);
            for rep in 0..repeats {
                let mut rng = substream(seed, "paramfree", ((ri * ops.len() + oi) * repeats + rep) as u64);
                for (gi, g) in genotypes.iter().enumerate() {
                    let h = replace_parameter_free(g, &mut rng, ratio, op)?;
                    let e = 1.0 - b.predictive(&h).mean;
                    errs.push(e);
                    rows.push(SweepRow {
                        genotype_index: gi,
                        ratio,
                        op,
                        repeat: rep,
                        predicted_error: e,
                    });
                }
            }
            if !errs.is_empty() {
                summary.push(SweepSummary {
                    ratio,
                    op,
                    n: errs.len(),
                    median: quantile(&errs, 0.5),
                    q25: quantile(&errs, 0.25),
                    q75: quantile(&errs, 0.75),
                });
            }
        }
    }
    Ok(ParamFreeReport { rows, summary })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologyRow {
    pub topology_index: usize,
    pub op_set: usize,
    pub depth: usize,
    pub true_acc: f64,
    pub predicted_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub depth: usize,
    pub n: usize,
    /// Absent when the group has fewer than two distinct rounded truths.
    pub sparse_kendall_tau: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub truth_source: String,
    pub rows: Vec<TopologyRow>,
    pub per_depth: Vec<DepthRow>,
}

/// Every topology combined with `n_op_sets` random op assignments, the same
/// cell used as normal and reduction cell. Truth is one noisy oracle
/// evaluation per architecture.
pub fn run_topology_sweep(
    b: &SurrogateBenchmark,
    oracle: &SyntheticOracle,
    n_op_sets: usize,
    seed: u64,
) -> Result<TopologyReport, HarnessError> {
    let space = b.space();
    let topologies: Vec<_> = enumerate_topologies(space)?.collect();
    let mut rng = substream(seed, "op-sets", 0);
    let op_sets: Vec<Vec<Operation>> = (0..n_op_sets)
        .map(|_| {
            (0..space.edges_per_cell())
                .map(|_| space.ops[rand::Rng::gen_range(&mut rng, 0..space.ops.len())])
                .collect()
        })
        .collect();
    let mut noise = substream(seed, "topology-truth", 0);
    let mut rows = Vec::with_capacity(topologies.len() * n_op_sets);
    for (ti, topo) in topologies.iter().enumerate() {
        for (si, ops) in op_sets.iter().enumerate() {
            let cell = cell_from_parts(topo, ops);
            let g = Genotype::new(cell.clone(), cell);
            rows.push(TopologyRow {
                topology_index: ti,
                op_set: si,
                depth: depth(&g.normal),
                true_acc: oracle.evaluate_noisy(&g, &mut noise),
                predicted_acc: b.predictive(&g).mean,
            });
        }
    }
    let mut depths: Vec<usize> = rows.iter().map(|r| r.depth).collect();
    depths.sort_unstable();
    depths.dedup();
    let per_depth = depths
        .into_iter()
        .map(|d| {
            let group: Vec<&TopologyRow> = rows.iter().filter(|r| r.depth == d).collect();
            let truth: Vec<f64> = group.iter().map(|r| r.true_acc).collect();
            let pred: Vec<f64> = group.iter().map(|r| r.predicted_acc).collect();
            let mut rounded: Vec<f64> = truth.iter().map(|&t| round_to_permille(t)).collect();
            rounded.sort_by(f64::total_cmp);
            rounded.dedup();
            let tau = if rounded.len() >= 2 { sparse_kendall_tau(&truth, &pred).ok() } else { None };
            DepthRow {
                depth: d,
                n: group.len(),
                sparse_kendall_tau: tau,
            }
        })
        .collect();
    Ok(TopologyReport {
        truth_source: "synthetic oracle, one noisy evaluation".into(),
        rows,
        per_depth,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub n_genotypes: usize,
    pub n_seeds: usize,
    pub noise_std: f64,
    /// `σ·√(1 + 1/(s−1))·√(2/π)` for `s` seeds.
    pub analytic_tabular_mae: f64,
    pub rotations: Vec<NoiseReport>,
    pub mean_mae_tabular: f64,
    pub mean_mae_surrogate: f64,
}

/// Evaluates every genotype `n_seeds` times, fits a benchmark on one seed,
/// and compares it and the training seed itself against the mean of the
/// other seeds. With `rotate`, every seed takes a turn as training seed.
#[allow(clippy::too_many_arguments)]
pub fn run_smoothing_experiment(
    oracle: &SyntheticOracle,
    genotypes: &[Genotype],
    n_seeds: usize,
    boost: &BoostParams,
    opts: &FitOptions,
    rotate: bool,
    seed: u64,
) -> Result<SmoothingReport, HarnessError> {
    if n_seeds < 3 {
        return Err(HarnessError::InvalidInput("smoothing experiment needs at least three seeds".into()));
    }
    let repeats = generate_repeats(oracle, genotypes, n_seeds, "RS", seed)?;
    let train_seeds: Vec<u64> = if rotate { (0..n_seeds as u64).collect() } else { vec![0] };
    let mut rotations = Vec::new();
    for s in train_seeds {
        let idx: Vec<usize> = (0..repeats.len()).filter(|&i| repeats.records()[i].seed == s).collect();
        let train = repeats.subset(&idx);
        let b = fit_benchmark(&train, &oracle.space, boost, opts)?;
        rotations.push(noise_report(&b, &repeats, s)?);
    }
    let sigma = oracle.params.noise_std;
    Ok(SmoothingReport {
        n_genotypes: genotypes.len(),
        n_seeds,
        noise_std: sigma,
        analytic_tabular_mae: sigma * (1.0 + 1.0 / (n_seeds - 1) as f64).sqrt() * (2.0 / std::f64::consts::PI).sqrt(),
        mean_mae_tabular: mean(&rotations.iter().map(|r| r.mae_tabular).collect::<Vec<_>>()),
        mean_mae_surrogate: mean(&rotations.iter().map(|r| r.mae_surrogate).collect::<Vec<_>>()),
        rotations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub sim_time_s: f64,
    /// Runs that have at least one evaluation by this time.
    pub n_runs: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteRun {
    pub optimizer: OptimizerKind,
    pub repeat: usize,
    pub trajectory: Trajectory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub runs: Vec<SuiteRun>,
    pub curves: Vec<(OptimizerKind, Vec<CurvePoint>)>,
}

impl SuiteReport {
    pub fn final_incumbents(&self, kind: OptimizerKind) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.optimizer == kind)
            .filter_map(|r| r.trajectory.final_incumbent())
            .collect()
    }
}

/// Incumbent statistics over runs on a log-spaced time grid of `n_points`.
pub fn incumbent_curve(runs: &[&Trajectory], n_points: usize) -> Vec<CurvePoint> {
    let first = runs.iter().filter_map(|t| t.events.first()).map(|e| e.sim_time_s).fold(f64::INFINITY, f64::min);
    let last = runs.iter().filter_map(|t| t.events.last()).map(|e| e.sim_time_s).fold(0.0, f64::max);
    if !first.is_finite() || n_points == 0 {
        return Vec::new();
    }
    (0..n_points)
        .map(|i| {
            let f = if n_points == 1 { 1.0 } else { i as f64 / (n_points - 1) as f64 };
            let t = if i + 1 == n_points { last } else { first * (last / first).powf(f) };
            let v: Vec<f64> = runs.iter().filter_map(|r| r.incumbent_at(t)).collect();
            if v.is_empty() {
                return CurvePoint { sim_time_s: t, n_runs: 0, median: f64::NAN, q25: f64::NAN, q75: f64::NAN, mean: f64::NAN };
            }
            CurvePoint {
                sim_time_s: t,
                n_runs: v.len(),
                median: quantile(&v, 0.5),
                q25: quantile(&v, 0.25),
                q75: quantile(&v, 0.75),
                mean: mean(&v),
            }
        })
        .collect()
}

/// Runs every optimizer `n_repeats` times. Repeat `r` of an optimizer always
/// starts from the same seed, whatever the objective, so runs on different
/// benchmarks are paired.
pub fn run_benchmark_suite(
    obj: &dyn Objective,
    kinds: &[OptimizerKind],
    cfg: &OptimizerConfig,
    budget: usize,
    n_repeats: usize,
    seed: u64,
) -> SuiteReport {
    let jobs: Vec<(OptimizerKind, usize)> =
        kinds.iter().flat_map(|&k| (0..n_repeats).map(move |r| (k, r))).collect();
    let runs: Vec<SuiteRun> = jobs
        .par_iter()
        .map(|&(kind, repeat)| {
            let mut rng = substream(seed, kind.name(), repeat as u64);
            SuiteRun {
                optimizer: kind,
                repeat,
                trajectory: run_optimizer(kind, cfg, obj, budget, &mut rng),
            }
        })
        .collect();
    let curves = kinds
        .iter()
        .map(|&k| {
            let trajs: Vec<&Trajectory> = runs.iter().filter(|r| r.optimizer == k).map(|r| &r.trajectory).collect();
            (k, incumbent_curve(&trajs, 100))
        })
        .collect();
    SuiteReport { runs, curves }
}

impl SuiteReport {
    /// One trajectory CSV per run plus `curves.csv`; returns the file names.
    pub fn write_csvs(&self, dir: &Path) -> std::io::Result<Vec<String>> {
        let mut names = Vec::new();
        for r in &self.runs {
            let name = format!("trajectory_{}_{}.csv", r.optimizer.name(), r.repeat);
            r.trajectory.write_csv(&dir.join(&name))?;
            names.push(name);
        }
        let rows = self.curves.iter().flat_map(|(k, pts)| {
            pts.iter().map(move |p| {
                [
                    k.name().to_string(),
                    p.sim_time_s.to_string(),
                    p.n_runs.to_string(),
                    p.median.to_string(),
                    p.q25.to_string(),
                    p.q75.to_string(),
                    p.mean.to_string(),
                ]
            })
        });
        crate::io::write_csv(
            &dir.join("curves.csv"),
            &["optimizer", "sim_time_s", "n_runs", "median", "q25", "q75", "mean"],
            rows,
        )?;
        names.push("curves.csv".into());
        Ok(names)
    }
}

/// Experiment output directory `<root>/<name>-<hash>`, where the hash covers
/// the serialized config. The config is written as `config.json`.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub path: PathBuf,
    pub config_hash: String,
}

impl RunDir {
    pub fn create<C: Serialize>(root: &Path, name: &str, config: &C) -> std::io::Result<RunDir> {
        let value = serde_json::to_value(config)?;
        let canonical = serde_json::to_vec(&value)?;
        let digest = Sha256::digest(&canonical);
        let config_hash: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
        let path = root.join(format!("{name}-{config_hash}"));
        std::fs::create_dir_all(&path)?;
        crate::io::write_json(&path.join("config.json"), &value)?;
        Ok(RunDir { path, config_hash })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }
}

/// Envelope written as `report.json` for every experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport<R> {
    pub name: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<String>,
    pub report: R,
}

impl<R: Serialize> ExperimentReport<R> {
    pub fn write(&self, dir: &RunDir) -> std::io::Result<PathBuf> {
        let p = dir.file("report.json");
        crate::io::write_json(&p, self)?;
        Ok(p)
    }
}
