//! Discrete NAS optimizers run against an abstract objective: random search,
//! regularized evolution, differential evolution, TPE, a tree-ensemble
//! BANANAS variant, and local search.
//!
//! Every run first forks a noise stream from the caller's rng, so the
//! optimizer's own decisions and the objective's noise never share draws.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_bigint::BigUint;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::encoding::{
    categorical_layout, from_categorical, genotype_from_unit, to_categorical, CategoricalDim,
    CategoricalVector, FeatureLayout, UnitVector,
};
use crate::gbtree::{fit_boosted, BoostParams, FeatureMatrix, TreeEnsemble};
use crate::rng::SimRng;
use crate::searchspace::{count_space, enumerate_genotypes, mutate, one_edit_neighbors, sample_uniform, Genotype, SpaceConfig};
use crate::surrogate::SurrogateBenchmark;
use crate::synth::SyntheticOracle;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveMode {
    Oracle,
    SurrogateNoisy,
    SurrogateMean,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub val_error: f64,
    pub runtime_s: f64,
}

pub trait Objective: Sync {
    fn evaluate(&self, g: &Genotype, rng: &mut SimRng) -> Evaluation;
    fn mode(&self) -> ObjectiveMode;
    fn space(&self) -> &SpaceConfig;
}

/// The synthetic ground truth; noisy unless built with [`OracleObjective::exact`].
pub struct OracleObjective<'a> {
    oracle: &'a SyntheticOracle,
    noisy: bool,
}

impl<'a> OracleObjective<'a> {
    pub fn noisy(oracle: &'a SyntheticOracle) -> Self {
        OracleObjective { oracle, noisy: true }
    }

    /// Noise-free accuracy and runtime.
    pub fn exact(oracle: &'a SyntheticOracle) -> Self {
        OracleObjective { oracle, noisy: false }
    }
}

impl Objective for OracleObjective<'_> {
    fn evaluate(&self, g: &Genotype, rng: &mut SimRng) -> Evaluation {
        if self.noisy {
            Evaluation {
                val_error: 1.0 - self.oracle.evaluate_noisy(g, rng),
                runtime_s: self.oracle.runtime_noisy(g, rng),
            }
        } else {
            Evaluation {
                val_error: 1.0 - self.oracle.truth(g),
                runtime_s: self.oracle.runtime_truth(g),
            }
        }
    }

    fn mode(&self) -> ObjectiveMode {
        ObjectiveMode::Oracle
    }

    fn space(&self) -> &SpaceConfig {
        &self.oracle.space
    }
}

/// Queries a fitted surrogate benchmark, sampling its predictive
/// distribution when noisy.
pub struct SurrogateObjective<'a> {
    bench: &'a SurrogateBenchmark,
    noisy: bool,
}

impl<'a> SurrogateObjective<'a> {
    pub fn new(bench: &'a SurrogateBenchmark, noisy: bool) -> Self {
        SurrogateObjective { bench, noisy }
    }
}

impl Objective for SurrogateObjective<'_> {
    fn evaluate(&self, g: &Genotype, rng: &mut SimRng) -> Evaluation {
        let q = self.bench.query(g, self.noisy, rng);
        Evaluation {
            val_error: 1.0 - q.sample_acc.unwrap_or(q.mean_acc),
            runtime_s: q.runtime_s,
        }
    }

    fn mode(&self) -> ObjectiveMode {
        if self.noisy {
            ObjectiveMode::SurrogateNoisy
        } else {
            ObjectiveMode::SurrogateMean
        }
    }

    fn space(&self) -> &SpaceConfig {
        self.bench.space()
    }
}

/// Adapts a closure; mainly for tests and ad-hoc objectives.
pub struct FnObjective<F> {
    pub space: SpaceConfig,
    pub f: F,
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&Genotype, &mut SimRng) -> Evaluation + Sync,
{
    fn evaluate(&self, g: &Genotype, rng: &mut SimRng) -> Evaluation {
        (self.f)(g, rng)
    }

    fn mode(&self) -> ObjectiveMode {
        ObjectiveMode::Oracle
    }

    fn space(&self) -> &SpaceConfig {
        &self.space
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEvent {
    /// 1-based.
    pub eval_index: usize,
    pub sim_time_s: f64,
    pub genotype: Genotype,
    pub val_error: f64,
    pub runtime_s: f64,
    pub incumbent_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub optimizer: String,
    pub events: Vec<TrajectoryEvent>,
}

impl Trajectory {
    pub fn final_incumbent(&self) -> Option<f64> {
        self.events.last().map(|e| e.incumbent_error)
    }

    /// Incumbent error at simulated time `t` (`None` before the first event).
    pub fn incumbent_at(&self, t: f64) -> Option<f64> {
        match self.events.partition_point(|e| e.sim_time_s <= t) {
            0 => None,
            k => Some(self.events[k - 1].incumbent_error),
        }
    }

    /// 1-based index of the first evaluation of a genotype matching `pred`.
    pub fn first_hit(&self, pred: impl Fn(&Genotype) -> bool) -> Option<usize> {
        self.events.iter().find(|e| pred(&e.genotype)).map(|e| e.eval_index)
    }

    pub fn csv_rows(&self) -> impl Iterator<Item = [String; 5]> + '_ {
        self.events.iter().map(|e| {
            [
                e.eval_index.to_string(),
                e.sim_time_s.to_string(),
                e.val_error.to_string(),
                e.incumbent_error.to_string(),
                e.genotype.to_json(),
            ]
        })
    }

    pub const CSV_HEADER: [&'static str; 5] =
        ["eval_index", "sim_time_s", "val_error", "incumbent_error", "genotype_json"];

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        crate::io::write_csv(path, &Self::CSV_HEADER, self.csv_rows())
    }
}

/// Evaluation bookkeeping shared by all optimizers.
struct Recorder<'a, O: Objective + ?Sized> {
    obj: &'a O,
    noise: SimRng,
    traj: Trajectory,
    budget: usize,
    clock: f64,
    best: f64,
}

impl<'a, O: Objective + ?Sized> Recorder<'a, O> {
    fn new(name: &str, obj: &'a O, budget: usize, rng: &mut SimRng) -> Self {
        Recorder {
            obj,
            noise: SimRng::seed_from_u64(rng.gen()),
            traj: Trajectory {
                optimizer: name.to_owned(),
                events: Vec::with_capacity(budget),
            },
            budget,
            clock: 0.0,
            best: f64::INFINITY,
        }
    }

    fn done(&self) -> bool {
        self.traj.events.len() >= self.budget
    }

    fn remaining(&self) -> usize {
        self.budget - self.traj.events.len()
    }

    fn eval(&mut self, g: &Genotype) -> f64 {
        debug_assert!(!self.done());
        let e = self.obj.evaluate(g, &mut self.noise);
        debug_assert!((0.0..=1.0).contains(&e.val_error) && e.runtime_s > 0.0);
        self.clock += e.runtime_s;
        self.best = self.best.min(e.val_error);
        self.traj.events.push(TrajectoryEvent {
            eval_index: self.traj.events.len() + 1,
            sim_time_s: self.clock,
            genotype: g.clone(),
            val_error: e.val_error,
            runtime_s: e.runtime_s,
            incumbent_error: self.best,
        });
        e.val_error
    }

    fn finish(self) -> Trajectory {
        self.traj
    }
}

/// Random search. Draws are uniform without replacement until the space is
/// exhausted, after which they start over. Once half of a small space has
/// been drawn, the unseen remainder is enumerated and shuffled instead of
/// rejection-sampled.
pub fn run_rs<O: Objective + ?Sized>(obj: &O, budget: usize, rng: &mut SimRng) -> Trajectory {
    let mut rec = Recorder::new("RS", obj, budget, rng);
    let cfg = obj.space().clone();
    let size = count_space(&cfg);
    let small = usize::try_from(&size).ok().filter(|&n| n <= ENUMERABLE_SPACE);
    let mut seen: HashSet<Genotype> = HashSet::new();
    while !rec.done() {
        if BigUint::from(seen.len()) >= size {
            seen.clear();
        }
        if small.is_some_and(|n| 2 * seen.len() >= n) {
            if let Ok(all) = enumerate_genotypes(&cfg) {
                let mut rest: Vec<Genotype> = all.filter(|g| !seen.contains(g)).collect();
                rest.shuffle(rng);
                for g in rest.iter().take(rec.remaining()) {
                    rec.eval(g);
                }
                seen.clear();
                continue;
            }
        }
        let g = sample_uniform(rng, &cfg);
        if seen.insert(g.clone()) {
            rec.eval(&g);
        }
    }
    rec.finish()
}

/// Largest space size `run_rs` will enumerate.
const ENUMERABLE_SPACE: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReConfig {
    pub init_pop: usize,
    pub sample_size: usize,
}

impl Default for ReConfig {
    fn default() -> Self {
        ReConfig { init_pop: 100, sample_size: 100 }
    }
}

/// Regularized (aging) evolution.
pub fn run_re<O: Objective + ?Sized>(obj: &O, cfg: &ReConfig, budget: usize, rng: &mut SimRng) -> Trajectory {
    let mut rec = Recorder::new("RE", obj, budget, rng);
    let space = obj.space().clone();
    let mut pop: VecDeque<(Genotype, f64)> = VecDeque::with_capacity(cfg.init_pop + 1);
    while pop.len() < cfg.init_pop && !rec.done() {
        let g = sample_uniform(rng, &space);
        let err = rec.eval(&g);
        pop.push_back((g, err));
    }
    while !rec.done() {
        let k = cfg.sample_size.clamp(1, pop.len());
        let best = index::sample(rng, pop.len(), k)
            .into_iter()
            .min_by(|&a, &b| pop[a].1.total_cmp(&pop[b].1).then(a.cmp(&b)))
            .expect("population is non-empty");
        let child = mutate(&pop[best].0, rng, &space);
        let err = rec.eval(&child);
        pop.push_back((child, err));
        pop.pop_front();
    }
    rec.finish()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub pop_size: usize,
    /// Differential weight of rand/1 mutation.
    pub f: f64,
    /// Binomial crossover rate. Zero keeps the parent unchanged.
    pub cr: f64,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig { pop_size: 100, f: 0.5, cr: 0.5 }
    }
}

/// Replaces every component outside [0, 1) by a uniform draw.
pub fn repair_unit(v: &mut [f64], rng: &mut SimRng) {
    for x in v.iter_mut() {
        if !(0.0..1.0).contains(x) {
            *x = rng.gen::<f64>();
        }
    }
}

/// rand/1/bin differential evolution on the unit-vector encoding.
pub fn run_de<O: Objective + ?Sized>(obj: &O, cfg: &DeConfig, budget: usize, rng: &mut SimRng) -> Trajectory {
    let mut rec = Recorder::new("DE", obj, budget, rng);
    let space = obj.space().clone();
    let dim = categorical_layout(&space).len();
    let decode = |x: &[f64]| genotype_from_unit(&UnitVector(x.to_vec()), &space).expect("repaired vectors decode");
    let mut pop: Vec<(Vec<f64>, f64)> = Vec::with_capacity(cfg.pop_size);
    while pop.len() < cfg.pop_size && !rec.done() {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
        let err = rec.eval(&decode(&x));
        pop.push((x, err));
    }
    let n = pop.len();
    while !rec.done() {
        let trials: Vec<Vec<f64>> = (0..n.min(rec.remaining()))
            .map(|i| {
                let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                let pick: Vec<usize> = if others.len() >= 3 {
                    index::sample(rng, others.len(), 3).into_iter().map(|k| others[k]).collect()
                } else {
                    (0..3).map(|_| rng.gen_range(0..n)).collect()
                };
                let (a, b, c) = (&pop[pick[0]].0, &pop[pick[1]].0, &pop[pick[2]].0);
                let mut v: Vec<f64> = (0..dim).map(|d| a[d] + cfg.f * (b[d] - c[d])).collect();
                repair_unit(&mut v, rng);
                if cfg.cr <= 0.0 {
                    return pop[i].0.clone();
                }
                let jrand = rng.gen_range(0..dim);
                (0..dim)
                    .map(|d| if d == jrand || rng.gen::<f64>() < cfg.cr { v[d] } else { pop[i].0[d] })
                    .collect()
            })
            .collect();
        for (i, t) in trials.into_iter().enumerate() {
            let err = rec.eval(&decode(&t));
            if err <= pop[i].1 {
                pop[i] = (t, err);
            }
        }
    }
    rec.finish()
}

/// Pseudo-counts added to TPE's categorical frequency estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TpeSmoothing {
    /// One pseudo-count per category.
    AddOne,
    /// `alpha` pseudo-observations spread evenly, scaled with the group size.
    Proportional { alpha: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    pub gamma: f64,
    pub n_candidates: usize,
    pub n_init: usize,
    pub smoothing: TpeSmoothing,
}

impl Default for TpeConfig {
    fn default() -> Self {
        TpeConfig {
            gamma: 0.15,
            n_candidates: 64,
            n_init: 20,
            smoothing: TpeSmoothing::AddOne,
        }
    }
}

/// Independent per-dimension categorical distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalEstimator {
    probs: Vec<Vec<f64>>,
}

impl CategoricalEstimator {
    pub fn fit(layout: &[u32], obs: &[&CategoricalVector], smoothing: TpeSmoothing) -> Self {
        let n = obs.len() as f64;
        let probs = layout
            .iter()
            .enumerate()
            .map(|(d, &m)| {
                let mut counts = vec![0.0; m as usize];
                for o in obs {
                    counts[o.dims[d].value as usize] += 1.0;
                }
                let (pseudo, total) = match smoothing {
                    TpeSmoothing::AddOne => (1.0, n + m as f64),
                    TpeSmoothing::Proportional { alpha } => (alpha * n / m as f64, n * (1.0 + alpha)),
                };
                counts.iter().map(|c| (c + pseudo) / total).collect()
            })
            .collect();
        CategoricalEstimator { probs }
    }

    pub fn prob(&self, dim: usize, value: u32) -> f64 {
        self.probs[dim][value as usize]
    }

    pub fn log_prob(&self, v: &CategoricalVector) -> f64 {
        v.dims.iter().enumerate().map(|(d, c)| self.prob(d, c.value).ln()).sum()
    }

    pub fn sample(&self, rng: &mut SimRng) -> CategoricalVector {
        let dims = self
            .probs
            .iter()
            .map(|p| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut value = p.len() - 1;
                for (k, q) in p.iter().enumerate() {
                    acc += q;
                    if u < acc {
                        value = k;
                        break;
                    }
                }
                CategoricalDim {
                    cardinality: p.len() as u32,
                    value: value as u32,
                }
            })
            .collect();
        CategoricalVector { dims }
    }
}

/// Splits observations into the best `ceil(gamma·n)` and the rest and fits
/// one estimator to each.
pub fn tpe_estimators(
    layout: &[u32],
    obs: &[(CategoricalVector, f64)],
    gamma: f64,
    smoothing: TpeSmoothing,
) -> (CategoricalEstimator, CategoricalEstimator) {
    let mut order: Vec<usize> = (0..obs.len()).collect();
    order.sort_by(|&a, &b| obs[a].1.total_cmp(&obs[b].1).then(a.cmp(&b)));
    let n_good = ((gamma * obs.len() as f64).ceil() as usize).clamp(1, obs.len().max(1));
    let good: Vec<&CategoricalVector> = order[..n_good].iter().map(|&i| &obs[i].0).collect();
    let bad: Vec<&CategoricalVector> = order[n_good..].iter().map(|&i| &obs[i].0).collect();
    (
        CategoricalEstimator::fit(layout, &good, smoothing),
        CategoricalEstimator::fit(layout, &bad, smoothing),
    )
}

/// Tree-structured Parzen estimator over the categorical encoding.
pub fn run_tpe<O: Objective + ?Sized>(obj: &O, cfg: &TpeConfig, budget: usize, rng: &mut SimRng) -> Trajectory {
    let mut rec = Recorder::new("TPE", obj, budget, rng);
    let space = obj.space().clone();
    let layout = categorical_layout(&space);
    let mut obs: Vec<(CategoricalVector, f64)> = Vec::with_capacity(budget);
    while !rec.done() {
        let v = if obs.len() < cfg.n_init.max(2) {
            to_categorical(&sample_uniform(rng, &space), &space)
        } else {
            let (l, g) = tpe_estimators(&layout, &obs, cfg.gamma, cfg.smoothing);
            let mut best: Option<(f64, CategoricalVector)> = None;
            for _ in 0..cfg.n_candidates.max(1) {
                let c = l.sample(rng);
                let score = l.log_prob(&c) - g.log_prob(&c);
                if best.as_ref().is_none_or(|(s, _)| score > *s) {
                    best = Some((score, c));
                }
            }
            best.expect("at least one candidate").1
        };
        let genotype = from_categorical(&v, &space).expect("estimator samples stay in range");
        let err = rec.eval(&genotype);
        obs.push((v, err));
    }
    rec.finish()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BananasConfig {
    pub n_init: usize,
    pub ensemble_size: usize,
    pub n_mutation_candidates: usize,
    /// Parents for candidate generation are the best `top_k` evaluated.
    pub top_k: usize,
    /// Evaluations between predictor refits.
    pub batch_size: usize,
    pub predictor: BoostParams,
}

impl Default for BananasConfig {
    fn default() -> Self {
        BananasConfig {
            n_init: 100,
            ensemble_size: 3,
            n_mutation_candidates: 100,
            top_k: 10,
            batch_size: 10,
            predictor: BoostParams {
                n_rounds: 100,
                learning_rate: 0.1,
                max_depth: 8,
                max_leaves: 31,
                max_bin: 64,
                feature_fraction: 0.5,
                min_child_weight: 2.0,
                lambda_l1: 0.0,
                lambda_l2: 1.0,
                early_stopping_rounds: 10,
                seed: 0,
            },
        }
    }
}

fn fit_predictor(
    cfg: &BananasConfig,
    x: &FeatureMatrix,
    y: &[f64],
    rng: &mut SimRng,
) -> Vec<TreeEnsemble> {
    (0..cfg.ensemble_size.max(1))
        .map(|m| {
            let mut idx: Vec<usize> = (0..y.len()).collect();
            idx.shuffle(rng);
            let n_val = (y.len() / 10).max(1);
            let (val, train) = idx.split_at(n_val);
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let yv: Vec<f64> = val.iter().map(|&i| y[i]).collect();
            let p = BoostParams { seed: rng.gen::<u64>() ^ m as u64, ..cfg.predictor.clone() };
            let (xt, xv) = (x.select(train), x.select(val));
            fit_boosted(&xt, &yt, Some((&xv, &yv)), &p).expect("predictor inputs are finite")
        })
        .collect()
}

/// BANANAS with boosted-tree ensemble members on path features and
/// independent Thompson sampling over mutations of the best architectures.
pub fn run_bananas<O: Objective + ?Sized>(
    obj: &O,
    cfg: &BananasConfig,
    budget: usize,
    rng: &mut SimRng,
) -> Trajectory {
    let mut rec = Recorder::new("BANANAS", obj, budget, rng);
    let space = obj.space().clone();
    let layout = FeatureLayout::path(&space);
    let mut seen: HashSet<Genotype> = HashSet::new();
    let mut data: Vec<(Genotype, f64)> = Vec::with_capacity(budget);
    while data.len() < cfg.n_init.max(2) && !rec.done() {
        let g = sample_uniform(rng, &space);
        let err = rec.eval(&g);
        seen.insert(g.clone());
        data.push((g, err));
    }
    while !rec.done() {
        let rows: Vec<Vec<(u32, f64)>> = data.iter().map(|(g, _)| layout.encode_sparse(g)).collect();
        let x = FeatureMatrix::from_sparse(layout.width(), rows);
        let y: Vec<f64> = data.iter().map(|(_, e)| *e).collect();
        let members = fit_predictor(cfg, &x, &y, rng);

        let mut ranked: Vec<usize> = (0..data.len()).collect();
        ranked.sort_by(|&a, &b| data[a].1.total_cmp(&data[b].1).then(a.cmp(&b)));
        let parents: Vec<&Genotype> = ranked.iter().take(cfg.top_k.max(1)).map(|&i| &data[i].0).collect();
        let mut candidates: Vec<Genotype> = Vec::new();
        let mut fresh: HashSet<Genotype> = HashSet::new();
        for t in 0..cfg.n_mutation_candidates.max(1) * 4 {
            if candidates.len() >= cfg.n_mutation_candidates.max(1) {
                break;
            }
            let c = mutate(parents[t % parents.len()], rng, &space);
            if !seen.contains(&c) && fresh.insert(c.clone()) {
                candidates.push(c);
            }
        }
        if candidates.is_empty() {
            candidates.push(sample_uniform(rng, &space));
        }
        let mut scored: Vec<(f64, usize)> = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let m = &members[rng.gen_range(0..members.len())];
                (m.predict_sparse_row(&layout.encode_sparse(c)), i)
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, i) in scored.iter().take(cfg.batch_size.max(1).min(rec.remaining())) {
            let g = &candidates[i];
            let err = rec.eval(g);
            seen.insert(g.clone());
            data.push((g.clone(), err));
        }
    }
    rec.finish()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalSearchConfig {
    /// Move to the first improving neighbor instead of the best one.
    pub first_improvement: bool,
}

/// Hill climbing over the one-edit neighborhood with random restarts.
pub fn run_local_search<O: Objective + ?Sized>(
    obj: &O,
    cfg: &LocalSearchConfig,
    budget: usize,
    rng: &mut SimRng,
) -> Trajectory {
    let mut rec = Recorder::new("LS", obj, budget, rng);
    let space = obj.space().clone();
    'restart: while !rec.done() {
        let mut current = sample_uniform(rng, &space);
        let mut current_err = rec.eval(&current);
        loop {
            let mut neighbors = one_edit_neighbors(&current, &space);
            neighbors.shuffle(rng);
            let mut best: Option<(Genotype, f64)> = None;
            for nb in neighbors {
                if rec.done() {
                    break 'restart;
                }
                let err = rec.eval(&nb);
                if err < current_err && best.as_ref().is_none_or(|(_, b)| err < *b) {
                    best = Some((nb, err));
                    if cfg.first_improvement {
                        break;
                    }
                }
            }
            match best {
                Some((g, e)) => {
                    current = g;
                    current_err = e;
                }
                None => continue 'restart,
            }
        }
    }
    rec.finish()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "RS")]
    RandomSearch,
    #[serde(rename = "RE")]
    RegularizedEvolution,
    #[serde(rename = "DE")]
    DifferentialEvolution,
    #[serde(rename = "TPE")]
    Tpe,
    #[serde(rename = "BANANAS")]
    Bananas,
    #[serde(rename = "LS")]
    LocalSearch,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 6] = [
        OptimizerKind::RandomSearch,
        OptimizerKind::RegularizedEvolution,
        OptimizerKind::DifferentialEvolution,
        OptimizerKind::Tpe,
        OptimizerKind::Bananas,
        OptimizerKind::LocalSearch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::RandomSearch => "RS",
            OptimizerKind::RegularizedEvolution => "RE",
            OptimizerKind::DifferentialEvolution => "DE",
            OptimizerKind::Tpe => "TPE",
            OptimizerKind::Bananas => "BANANAS",
            OptimizerKind::LocalSearch => "LS",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown optimizer {s:?} (expected one of RS, RE, DE, TPE, BANANAS, LS)"))
    }
}

/// Settings of every optimizer; budgets are passed per run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub re: ReConfig,
    pub de: DeConfig,
    pub tpe: TpeConfig,
    pub bananas: BananasConfig,
    pub local_search: LocalSearchConfig,
}

pub fn run_optimizer<O: Objective + ?Sized>(
    kind: OptimizerKind,
    cfg: &OptimizerConfig,
    obj: &O,
    budget: usize,
    rng: &mut SimRng,
) -> Trajectory {
    match kind {
        OptimizerKind::RandomSearch => run_rs(obj, budget, rng),
        OptimizerKind::RegularizedEvolution => run_re(obj, &cfg.re, budget, rng),
        OptimizerKind::DifferentialEvolution => run_de(obj, &cfg.de, budget, rng),
        OptimizerKind::Tpe => run_tpe(obj, &cfg.tpe, budget, rng),
        OptimizerKind::Bananas => run_bananas(obj, &cfg.bananas, budget, rng),
        OptimizerKind::LocalSearch => run_local_search(obj, &cfg.local_search, budget, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::searchspace::validate;

    /// Error = fraction of edges that are not sep_conv_3x3, plus a constant runtime.
    fn toy() -> FnObjective<impl Fn(&Genotype, &mut SimRng) -> Evaluation + Sync> {
        FnObjective {
            space: SpaceConfig::default(),
            f: |g: &Genotype, _: &mut SimRng| {
                let bad = g.cells().iter().flat_map(|(_, c)| c.edges()).filter(|e| e.op.ordinal() != 0).count();
                Evaluation { val_error: bad as f64 / 16.0, runtime_s: 10.0 }
            },
        }
    }

    fn check_trajectory(t: &Trajectory, budget: usize) {
        assert_eq!(t.events.len(), budget);
        for (i, w) in t.events.windows(2).enumerate() {
            assert!(w[1].sim_time_s > w[0].sim_time_s);
            assert!(w[1].incumbent_error <= w[0].incumbent_error);
            assert_eq!(w[0].eval_index, i + 1);
        }
        for e in &t.events {
            validate(&e.genotype, &SpaceConfig::default()).unwrap();
        }
    }

    #[test]
    fn every_optimizer_respects_budget_and_is_deterministic() {
        let obj = toy();
        let mut cfg = OptimizerConfig::default();
        cfg.re.init_pop = 10;
        cfg.de.pop_size = 10;
        cfg.tpe.n_init = 10;
        cfg.bananas.n_init = 10;
        for kind in OptimizerKind::ALL {
            let a = run_optimizer(kind, &cfg, &obj, 40, &mut seeded(1));
            let b = run_optimizer(kind, &cfg, &obj, 40, &mut seeded(1));
            check_trajectory(&a, 40);
            assert_eq!(a, b, "{kind}");
        }
    }

    #[test]
    fn rs_budget_one() {
        let t = run_rs(&toy(), 1, &mut seeded(2));
        assert_eq!(t.events.len(), 1);
        assert_eq!(t.events[0].incumbent_error, t.events[0].val_error);
    }

    #[test]
    fn de_static_without_mutation_or_crossover() {
        let cfg = DeConfig { pop_size: 8, f: 0.0, cr: 0.0 };
        let t = run_de(&toy(), &cfg, 32, &mut seeded(3));
        for gen in 1..4 {
            for i in 0..8 {
                assert_eq!(t.events[gen * 8 + i].genotype, t.events[i].genotype);
            }
        }
    }

    #[test]
    fn repair_clears_out_of_range() {
        let mut v = vec![1.3, -0.2, 0.5, 1.0];
        repair_unit(&mut v, &mut seeded(4));
        assert!(v.iter().all(|x| (0.0..1.0).contains(x)));
        assert_eq!(v[2], 0.5);
    }

    #[test]
    fn re_initial_phase_is_random() {
        let obj = toy();
        let cfg = ReConfig { init_pop: 20, sample_size: 5 };
        let re = run_re(&obj, &cfg, 20, &mut seeded(5));
        assert_eq!(re.events.len(), 20);
    }

    #[test]
    fn optimizer_names_parse() {
        for k in OptimizerKind::ALL {
            assert_eq!(k.name().parse::<OptimizerKind>().unwrap(), k);
        }
        assert!("nope".parse::<OptimizerKind>().is_err());
    }
}
