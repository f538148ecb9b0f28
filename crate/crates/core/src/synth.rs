//! Synthetic ground truth standing in for trained networks.
//!
//! The noise-free accuracy of a genotype is an affine image of a raw score:
//! per-node operation utilities, per-node parent weights, a bonus per unit of
//! cell depth, a quadratic penalty on parameter-free edges beyond a
//! threshold, and sparse pairwise interactions between "node has op"
//! indicators. The affine map sends the central 99% of uniformly sampled raw
//! scores onto the configured accuracy range; results are clamped to [0, 1].

use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetError, EvalRecord, FORMAT_VERSION};
use crate::optimizers::{run_optimizer, OptimizerConfig, OptimizerKind, OracleObjective};
use crate::rng::{substream, SimRng};
use crate::searchspace::{depth, sample_uniform, CellKind, Genotype, Operation, SpaceConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    pub seed: u64,
    /// Standard deviation of the evaluation noise on accuracy.
    pub noise_std: f64,
    /// Mean utility of each operation, indexed by operation ordinal.
    pub op_means: Vec<f64>,
    /// Spread of utilities around the mean, per (cell, node, op).
    pub op_jitter: f64,
    pub parent_scale: f64,
    pub depth_bonus: f64,
    pub pf_threshold: usize,
    pub pf_penalty: f64,
    pub n_interactions: usize,
    pub interaction_scale: f64,
    pub acc_low: f64,
    pub acc_high: f64,
    pub calibration_samples: usize,
    pub runtime_base: f64,
    /// Seconds added per edge carrying each operation, by ordinal.
    pub runtime_costs: Vec<f64>,
    /// Log-normal spread of observed runtimes.
    pub runtime_noise: f64,
    pub params_base: u64,
    pub params_costs: Vec<u64>,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            seed: 0,
            noise_std: 1.7e-3,
            op_means: vec![1.0, 0.9, 0.6, 0.5, -0.4, -0.5, -0.2],
            op_jitter: 0.3,
            parent_scale: 0.3,
            depth_bonus: 0.15,
            pf_threshold: 4,
            pf_penalty: 0.5,
            n_interactions: 40,
            interaction_scale: 0.5,
            acc_low: 0.88,
            acc_high: 0.96,
            calibration_samples: 20_000,
            runtime_base: 1800.0,
            runtime_costs: vec![300.0, 450.0, 200.0, 260.0, 20.0, 20.0, 0.0],
            runtime_noise: 0.05,
            params_base: 300_000,
            params_costs: vec![60_000, 110_000, 30_000, 55_000, 0, 0, 0],
        }
    }
}

impl OracleParams {
    /// Purely additive variant: no depth bonus, penalty, or interactions.
    pub fn additive(seed: u64) -> Self {
        OracleParams {
            seed,
            depth_bonus: 0.0,
            pf_penalty: 0.0,
            n_interactions: 0,
            ..Self::default()
        }
    }

    pub fn with_seed(seed: u64) -> Self {
        OracleParams { seed, ..Self::default() }
    }
}

/// Indicator that `node` of `cell` has at least one incoming edge with `op`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpIndicator {
    pub cell: CellKind,
    pub node: usize,
    pub op: Operation,
}

impl OpIndicator {
    pub fn holds(&self, g: &Genotype) -> bool {
        g.cell(self.cell).nodes()[self.node].iter().any(|e| e.op == self.op)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub a: OpIndicator,
    pub b: OpIndicator,
    pub coef: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOracle {
    pub params: OracleParams,
    pub space: SpaceConfig,
    /// `[cell][node][op ordinal]`.
    utility: Vec<f64>,
    /// `[cell][node][parent]`, parents padded to `n_intermediate + 1`.
    parent_weight: Vec<f64>,
    interactions: Vec<Interaction>,
    raw_low: f64,
    scale: f64,
}

fn cell_index(c: CellKind) -> usize {
    match c {
        CellKind::Normal => 0,
        CellKind::Reduction => 1,
    }
}

impl SyntheticOracle {
    pub fn new(space: &SpaceConfig, params: OracleParams) -> Self {
        let n = space.n_intermediate;
        let std_normal = Normal::new(0.0, 1.0).unwrap();

        let mut rng = substream(params.seed, "utility", 0);
        let mut utility = vec![0.0; 2 * n * 7];
        for cell in 0..2 {
            for node in 0..n {
                for op in 0..7 {
                    let jitter = params.op_jitter * std_normal.sample(&mut rng);
                    utility[(cell * n + node) * 7 + op] = params.op_means[op] + jitter;
                }
            }
        }

        let mut rng = substream(params.seed, "parents", 0);
        let stride = n + 1;
        let parent_weight: Vec<f64> = (0..2 * n * stride)
            .map(|_| params.parent_scale * std_normal.sample(&mut rng))
            .collect();

        let mut rng = substream(params.seed, "interactions", 0);
        let features: Vec<OpIndicator> = CellKind::BOTH
            .iter()
            .flat_map(|&cell| {
                (0..n).flat_map(move |node| space.ops.iter().map(move |&op| OpIndicator { cell, node, op }))
            })
            .collect();
        let f = features.len();
        let n_pairs = f * f.saturating_sub(1) / 2;
        let mut interactions = Vec::new();
        if n_pairs > 0 {
            for k in index::sample(&mut rng, n_pairs, params.n_interactions.min(n_pairs)) {
                let (i, j) = pair_of(k, f);
                interactions.push(Interaction {
                    a: features[i],
                    b: features[j],
                    coef: params.interaction_scale * std_normal.sample(&mut rng),
                });
            }
        }

        let mut oracle = SyntheticOracle {
            params,
            space: space.clone(),
            utility,
            parent_weight,
            interactions,
            raw_low: 0.0,
            scale: 0.0,
        };
        oracle.calibrate();
        oracle
    }

    fn calibrate(&mut self) {
        let mut rng = substream(self.params.seed, "calibration", 0);
        let mut raws: Vec<f64> = (0..self.params.calibration_samples.max(2))
            .map(|_| self.raw(&sample_uniform(&mut rng, &self.space)))
            .collect();
        raws.sort_by(f64::total_cmp);
        let q = |p: f64| raws[((raws.len() - 1) as f64 * p).round() as usize];
        let (lo, hi) = (q(0.005), q(0.995));
        self.raw_low = lo;
        self.scale = if hi - lo > 1e-12 {
            (self.params.acc_high - self.params.acc_low) / (hi - lo)
        } else {
            0.0
        };
    }

    pub fn utility(&self, cell: CellKind, node: usize, op: Operation) -> f64 {
        self.utility[(cell_index(cell) * self.space.n_intermediate + node) * 7 + op.ordinal()]
    }

    pub fn parent_weight(&self, cell: CellKind, node: usize, parent: u8) -> f64 {
        let stride = self.space.n_intermediate + 1;
        self.parent_weight[(cell_index(cell) * self.space.n_intermediate + node) * stride + parent as usize]
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    /// Accuracy change per unit of raw score.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Penalty term (before scaling) for a cell with `pf` parameter-free edges.
    pub fn pf_penalty(&self, pf: usize) -> f64 {
        let excess = pf.saturating_sub(self.params.pf_threshold) as f64;
        self.params.pf_penalty * excess * excess
    }

    pub fn raw(&self, g: &Genotype) -> f64 {
        let mut s = 0.0;
        for (kind, cell) in g.cells() {
            for (i, edges) in cell.nodes().iter().enumerate() {
                for e in edges {
                    s += self.utility(kind, i, e.op) + self.parent_weight(kind, i, e.parent);
                }
            }
            s += self.params.depth_bonus * depth(cell) as f64;
            s -= self.pf_penalty(cell.parameter_free_count());
        }
        for it in &self.interactions {
            if it.a.holds(g) && it.b.holds(g) {
                s += it.coef;
            }
        }
        s
    }

    /// Noise-free validation accuracy.
    pub fn truth(&self, g: &Genotype) -> f64 {
        let acc = if self.scale == 0.0 {
            0.5 * (self.params.acc_low + self.params.acc_high)
        } else {
            self.params.acc_low + self.scale * (self.raw(g) - self.raw_low)
        };
        acc.clamp(0.0, 1.0)
    }

    pub fn evaluate_noisy(&self, g: &Genotype, rng: &mut SimRng) -> f64 {
        let t = self.truth(g);
        if self.params.noise_std == 0.0 {
            return t;
        }
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        (t + self.params.noise_std * z).clamp(0.0, 1.0)
    }

    /// Noise-free training time in seconds.
    pub fn runtime_truth(&self, g: &Genotype) -> f64 {
        self.params.runtime_base
            + g.cells()
                .iter()
                .flat_map(|(_, c)| c.edges())
                .map(|e| self.params.runtime_costs[e.op.ordinal()])
                .sum::<f64>()
    }

    pub fn runtime_noisy(&self, g: &Genotype, rng: &mut SimRng) -> f64 {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        self.runtime_truth(g) * (self.params.runtime_noise * z).exp()
    }

    pub fn n_params(&self, g: &Genotype) -> u64 {
        self.params.params_base
            + g.cells()
                .iter()
                .flat_map(|(_, c)| c.edges())
                .map(|e| self.params.params_costs[e.op.ordinal()])
                .sum::<u64>()
    }

    /// A full evaluation record; `val_acc` and `runtime_s` are given, the
    /// other accuracies are drawn around the truth.
    pub fn record_from(
        &self,
        g: &Genotype,
        val_acc: f64,
        runtime_s: f64,
        optimizer: &str,
        seed: u64,
        rng: &mut SimRng,
    ) -> EvalRecord {
        let t = self.truth(g);
        let sd = self.params.noise_std;
        let z1: f64 = rng.sample(rand_distr::StandardNormal);
        let z2: f64 = rng.sample(rand_distr::StandardNormal);
        EvalRecord {
            genotype: g.clone(),
            train_acc: (t + 0.035 + sd * z1).clamp(0.0, 1.0),
            val_acc,
            test_acc: (t - 0.003 + sd * z2).clamp(0.0, 1.0),
            runtime_s,
            n_params: self.n_params(g),
            optimizer: optimizer.to_owned(),
            seed,
            format_version: FORMAT_VERSION,
        }
    }

    /// One noisy evaluation turned into a record.
    pub fn record(&self, g: &Genotype, optimizer: &str, seed: u64, rng: &mut SimRng) -> EvalRecord {
        let val = self.evaluate_noisy(g, rng);
        let rt = self.runtime_noisy(g, rng);
        self.record_from(g, val, rt, optimizer, seed, rng)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("oracle serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_json(&text)?)
    }
}

fn pair_of(mut k: usize, f: usize) -> (usize, usize) {
    for i in 0..f {
        let row = f - 1 - i;
        if k < row {
            return (i, i + 1 + k);
        }
        k -= row;
    }
    unreachable!("pair index out of range")
}

/// Runs each optimizer of `mix` for its budget against the noisy oracle and
/// collects the evaluations, tagged by optimizer name.
pub fn generate_dataset(
    oracle: &SyntheticOracle,
    mix: &[(OptimizerKind, usize)],
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    let objective = OracleObjective::noisy(oracle);
    let mut records = Vec::new();
    for (k, &(kind, size)) in mix.iter().enumerate() {
        let mut rng = substream(seed, kind.name(), k as u64);
        let traj = run_optimizer(kind, cfg, &objective, size, &mut rng);
        let mut aux = substream(seed, "records", k as u64);
        for e in &traj.events {
            records.push(oracle.record_from(&e.genotype, 1.0 - e.val_error, e.runtime_s, kind.name(), 0, &mut aux));
        }
    }
    Dataset::new(records, &oracle.space)
}

/// `n_seeds` independent evaluations of every genotype; record `seed` is the
/// repeat index.
pub fn generate_repeats(
    oracle: &SyntheticOracle,
    genotypes: &[Genotype],
    n_seeds: usize,
    tag: &str,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    let mut records = Vec::with_capacity(genotypes.len() * n_seeds);
    for s in 0..n_seeds {
        let mut rng = substream(seed, "repeat", s as u64);
        for g in genotypes {
            records.push(oracle.record(g, tag, s as u64, &mut rng));
        }
    }
    Dataset::new(records, &oracle.space)
}

/// `n` distinct genotypes drawn uniformly.
pub fn sample_distinct(space: &SpaceConfig, n: usize, seed: u64) -> Vec<Genotype> {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let g = sample_uniform(&mut rng, space);
        if seen.insert(g.clone()) {
            out.push(g);
        }
    }
    out
}
