//! Architecture-evaluation records: JSONL ingestion, optimizer-stratified
//! group-aware splits, leave-one-optimizer-out partitions, and the summary
//! statistics (repeat noise, ECDFs) used to describe a collection.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{write_atomic, write_csv};
use crate::metrics::{mean, sample_std};
use crate::rng::substream;
use crate::searchspace::{validate, Genotype, SpaceConfig};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("line {line}: {reason}")]
    InvalidRecord { line: usize, reason: String },
    #[error("stratum {0:?} has no records")]
    EmptyStratum(String),
    #[error("optimizer tag {0:?} not present in dataset")]
    UnknownOptimizer(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("input is empty")]
    EmptyInput,
}

/// One evaluated architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub genotype: Genotype,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub runtime_s: f64,
    pub n_params: u64,
    pub optimizer: String,
    pub seed: u64,
    pub format_version: u32,
}

impl EvalRecord {
    pub fn check(&self, cfg: &SpaceConfig) -> Result<(), String> {
        if self.format_version != FORMAT_VERSION {
            return Err(format!("unsupported format_version {}", self.format_version));
        }
        for (name, v) in [
            ("train_acc", self.train_acc),
            ("val_acc", self.val_acc),
            ("test_acc", self.test_acc),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if !(self.runtime_s > 0.0 && self.runtime_s.is_finite()) {
            return Err(format!("runtime_s = {} must be positive", self.runtime_s));
        }
        if self.n_params == 0 {
            return Err("n_params must be positive".into());
        }
        if self.optimizer.is_empty() {
            return Err("empty optimizer tag".into());
        }
        validate(&self.genotype, cfg).map_err(|e| e.to_string())
    }
}

/// Validated records with an index from canonical genotype to record positions.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    records: Vec<EvalRecord>,
    index: HashMap<Genotype, Vec<usize>>,
    order: Vec<Genotype>,
}

impl Dataset {
    /// Validates every record; errors carry 1-based record positions.
    pub fn new(records: Vec<EvalRecord>, cfg: &SpaceConfig) -> Result<Self, DatasetError> {
        for (i, r) in records.iter().enumerate() {
            r.check(cfg)
                .map_err(|reason| DatasetError::InvalidRecord { line: i + 1, reason })?;
        }
        Ok(Self::from_checked(records))
    }

    fn from_checked(records: Vec<EvalRecord>) -> Self {
        let mut index: HashMap<Genotype, Vec<usize>> = HashMap::new();
        let mut order = Vec::new();
        for (i, r) in records.iter().enumerate() {
            index
                .entry(r.genotype.clone())
                .or_insert_with(|| {
                    order.push(r.genotype.clone());
                    Vec::new()
                })
                .push(i);
        }
        Dataset { records, index, order }
    }

    pub fn records(&self) -> &[EvalRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Positions of all evaluations of `g`.
    pub fn indices_of(&self, g: &Genotype) -> &[usize] {
        self.index.get(g).map_or(&[], Vec::as_slice)
    }

    /// Distinct genotypes in order of first appearance.
    pub fn genotypes(&self) -> &[Genotype] {
        &self.order
    }

    /// Distinct optimizer tags, sorted.
    pub fn tags(&self) -> Vec<String> {
        let mut t: Vec<String> = self.records.iter().map(|r| r.optimizer.clone()).collect();
        t.sort();
        t.dedup();
        t
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Self::from_checked(idx.iter().map(|&i| self.records[i].clone()).collect())
    }

    pub fn val_accs(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.records[i].val_acc).collect()
    }

    pub fn read_jsonl<R: BufRead>(reader: R, cfg: &SpaceConfig) -> Result<Self, DatasetError> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EvalRecord = serde_json::from_str(&line).map_err(|e| DatasetError::ParseError {
                line: i + 1,
                message: e.to_string(),
            })?;
            rec.check(cfg)
                .map_err(|reason| DatasetError::InvalidRecord { line: i + 1, reason })?;
            records.push(rec);
        }
        Ok(Self::from_checked(records))
    }

    pub fn load_jsonl(path: &Path, cfg: &SpaceConfig) -> Result<Self, DatasetError> {
        Self::read_jsonl(BufReader::new(File::open(path)?), cfg)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<(), DatasetError> {
        Ok(write_atomic(path, self.to_jsonl().as_bytes())?)
    }
}

/// Train/validation/test fractions of a split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Self {
        SplitSpec { train, val, test, seed }
    }

    /// The 0.8/0.1/0.1 split.
    pub fn standard(seed: u64) -> Self {
        Self::new(0.8, 0.1, 0.1, seed)
    }

    /// Test may be zero for two-way (train/val) splits.
    pub fn check(&self) -> Result<(), DatasetError> {
        let fr = [self.train, self.val, self.test];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || self.train <= 0.0 || self.val <= 0.0 {
            return Err(DatasetError::InvalidSplit(format!("bad fractions {fr:?}")));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DatasetError::InvalidSplit(format!("fractions {fr:?} do not sum to 1")));
        }
        Ok(())
    }
}

/// Record positions of each side of a split, each sorted ascending.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut all: Vec<usize> = self.train.iter().chain(&self.val).chain(&self.test).copied().collect();
        all.sort_unstable();
        all.len() == n && all.iter().enumerate().all(|(i, &v)| i == v)
    }
}

/// Splits `idx` (positions into `ds`) per optimizer tag, keeping all
/// evaluations of one genotype on the same side. A genotype's stratum is the
/// tag of its first evaluation.
pub fn stratified_split_of(ds: &Dataset, idx: &[usize], spec: &SplitSpec) -> Result<Split, DatasetError> {
    spec.check()?;
    if idx.is_empty() {
        return Err(DatasetError::EmptyStratum("<all>".into()));
    }
    let mut groups: BTreeMap<&str, Vec<Vec<usize>>> = BTreeMap::new();
    let mut seen: HashMap<&Genotype, usize> = HashMap::new();
    let mut group_list: Vec<(String, Vec<usize>)> = Vec::new();
    for &i in idx {
        let r = &ds.records[i];
        match seen.get(&r.genotype) {
            Some(&g) => group_list[g].1.push(i),
            None => {
                seen.insert(&r.genotype, group_list.len());
                group_list.push((r.optimizer.clone(), vec![i]));
            }
        }
    }
    for (tag, members) in &group_list {
        groups.entry(tag.as_str()).or_default().push(members.clone());
    }
    let mut out = Split::default();
    for (s, (_, mut gs)) in groups.into_iter().enumerate() {
        let mut rng = substream(spec.seed, "split", s as u64);
        gs.shuffle(&mut rng);
        let total: usize = gs.iter().map(Vec::len).sum();
        let train_end = (spec.train * total as f64).round() as usize;
        let val_end = ((spec.train + spec.val) * total as f64).round() as usize;
        let mut seen_records = 0;
        for g in gs {
            let side = if seen_records < train_end {
                &mut out.train
            } else if seen_records < val_end {
                &mut out.val
            } else {
                &mut out.test
            };
            seen_records += g.len();
            side.extend(g);
        }
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

pub fn stratified_split(ds: &Dataset, spec: &SplitSpec) -> Result<Split, DatasetError> {
    let all: Vec<usize> = (0..ds.len()).collect();
    stratified_split_of(ds, &all, spec)
}

/// Leave-one-optimizer-out: `(train_val, held_out)` record positions.
pub fn loo_partition(ds: &Dataset, left_out: &str) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    let (held, rest): (Vec<usize>, Vec<usize>) =
        (0..ds.len()).partition(|&i| ds.records[i].optimizer == left_out);
    if held.is_empty() {
        return Err(DatasetError::UnknownOptimizer(left_out.to_owned()));
    }
    Ok((rest, held))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenotypeNoise {
    pub genotype: Genotype,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseStats {
    /// Genotypes with at least two evaluations.
    pub per_genotype: Vec<GenotypeNoise>,
    /// Mean of the per-genotype standard deviations; `None` without repeats.
    pub mean_std: Option<f64>,
}

pub fn noise_stats(ds: &Dataset) -> NoiseStats {
    let per_genotype: Vec<GenotypeNoise> = ds
        .genotypes()
        .iter()
        .filter_map(|g| {
            let idx = ds.indices_of(g);
            if idx.len() < 2 {
                return None;
            }
            let v = ds.val_accs(idx);
            Some(GenotypeNoise {
                genotype: g.clone(),
                mean: mean(&v),
                std: sample_std(&v),
                n: v.len(),
            })
        })
        .collect();
    let mean_std = (!per_genotype.is_empty())
        .then(|| per_genotype.iter().map(|r| r.std).sum::<f64>() / per_genotype.len() as f64);
    NoiseStats { per_genotype, mean_std }
}

/// Right-continuous empirical CDF.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ecdf {
    /// Distinct sorted values.
    pub support: Vec<f64>,
    /// `F(support[i])`.
    pub cumulative: Vec<f64>,
}

impl Ecdf {
    pub fn eval(&self, x: f64) -> f64 {
        match self.support.partition_point(|&s| s <= x) {
            0 => 0.0,
            k => self.cumulative[k - 1],
        }
    }

    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        write_csv(
            path,
            &["x", "F"],
            self.support
                .iter()
                .zip(&self.cumulative)
                .map(|(x, f)| [x.to_string(), f.to_string()]),
        )
    }
}

pub fn ecdf(values: &[f64]) -> Result<Ecdf, DatasetError> {
    if values.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut support = Vec::new();
    let mut cumulative = Vec::new();
    for (i, x) in v.iter().enumerate() {
        if support.last() == Some(x) {
            *cumulative.last_mut().unwrap() = (i + 1) as f64 / n;
        } else {
            support.push(*x);
            cumulative.push((i + 1) as f64 / n);
        }
    }
    Ok(Ecdf { support, cumulative })
}
