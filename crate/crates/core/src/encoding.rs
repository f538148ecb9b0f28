//! Feature encodings of genotypes.
//!
//! - [`CategoricalVector`]: per cell, one parent-pair categorical per node
//!   followed by one operation categorical per edge. 24 dims in the full space.
//! - [`UnitVector`]: the categorical vector mapped into `[0, 1)`, one equal
//!   sub-interval per category. Used by differential evolution.
//! - [`PathFeature`]: indicators over input-to-output operation sequences.
//! - one-hot rows: the model input of the tree surrogates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::searchspace::{pair_from_index, pair_index, Cell, Edge, Genotype, Operation, SpaceConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodingError {
    #[error("coordinate {dim} = {value} lies outside [0, 1)")]
    OutOfUnitRange { dim: usize, value: f64 },
    #[error("vector has {found} dims, layout expects {expected}")]
    LayoutMismatch { expected: usize, found: usize },
    #[error("dim {dim}: value {value} not below cardinality {cardinality}")]
    ValueOutOfRange { dim: usize, value: u32, cardinality: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CategoricalDim {
    pub cardinality: u32,
    pub value: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CategoricalVector {
    pub dims: Vec<CategoricalDim>,
}

/// Cardinalities of the categorical layout of `cfg`.
pub fn categorical_layout(cfg: &SpaceConfig) -> Vec<u32> {
    let mut out = Vec::with_capacity(2 * 3 * cfg.n_intermediate);
    for _cell in 0..2 {
        out.extend((0..cfg.n_intermediate).map(|i| SpaceConfig::pair_count(i) as u32));
        out.extend(std::iter::repeat_n(cfg.ops.len() as u32, cfg.edges_per_cell()));
    }
    out
}

fn cell_values(cell: &Cell, cfg: &SpaceConfig, out: &mut Vec<u32>) {
    for (i, [a, b]) in cell.nodes().iter().enumerate() {
        out.push(pair_index(i, a.parent, b.parent) as u32);
    }
    for e in cell.edges() {
        let idx = cfg
            .op_index(e.op)
            .unwrap_or_else(|| panic!("operation {} not in the space", e.op));
        out.push(idx as u32);
    }
}

/// Categorical vector of a valid genotype.
pub fn to_categorical(g: &Genotype, cfg: &SpaceConfig) -> CategoricalVector {
    let mut values = Vec::with_capacity(6 * cfg.n_intermediate);
    cell_values(&g.normal, cfg, &mut values);
    cell_values(&g.reduction, cfg, &mut values);
    CategoricalVector {
        dims: categorical_layout(cfg)
            .into_iter()
            .zip(values)
            .map(|(cardinality, value)| CategoricalDim { cardinality, value })
            .collect(),
    }
}

fn cell_from_values(values: &[u32], cfg: &SpaceConfig) -> Cell {
    let n = cfg.n_intermediate;
    let nodes = (0..n)
        .map(|i| {
            let (a, b) = pair_from_index(i, values[i] as usize);
            [
                Edge::new(a, cfg.ops[values[n + 2 * i] as usize]),
                Edge::new(b, cfg.ops[values[n + 2 * i + 1] as usize]),
            ]
        })
        .collect();
    Cell::new(nodes)
}

/// Inverse of [`to_categorical`].
pub fn from_categorical(v: &CategoricalVector, cfg: &SpaceConfig) -> Result<Genotype, EncodingError> {
    let layout = categorical_layout(cfg);
    if v.dims.len() != layout.len() {
        return Err(EncodingError::LayoutMismatch {
            expected: layout.len(),
            found: v.dims.len(),
        });
    }
    for (dim, (d, &card)) in v.dims.iter().zip(&layout).enumerate() {
        if d.value >= card || d.cardinality != card {
            return Err(EncodingError::ValueOutOfRange {
                dim,
                value: d.value,
                cardinality: card,
            });
        }
    }
    let values: Vec<u32> = v.dims.iter().map(|d| d.value).collect();
    let half = values.len() / 2;
    Ok(Genotype::new(
        cell_from_values(&values[..half], cfg),
        cell_from_values(&values[half..], cfg),
    ))
}

/// A point in the unit hypercube, one coordinate per categorical dim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitVector(pub Vec<f64>);

/// Category of coordinate `c` in a dim of cardinality `m`: `⌊c·m⌋`.
pub fn unit_to_category(c: f64, m: u32) -> Option<u32> {
    if !(0.0..1.0).contains(&c) {
        return None;
    }
    Some(((c * m as f64).floor() as u32).min(m - 1))
}

/// Midpoint of the sub-interval of category `v` out of `m`.
pub fn category_midpoint(v: u32, m: u32) -> f64 {
    (v as f64 + 0.5) / m as f64
}

pub fn to_unit(v: &CategoricalVector) -> UnitVector {
    UnitVector(
        v.dims
            .iter()
            .map(|d| category_midpoint(d.value, d.cardinality))
            .collect(),
    )
}

pub fn from_unit(x: &UnitVector, cfg: &SpaceConfig) -> Result<CategoricalVector, EncodingError> {
    let layout = categorical_layout(cfg);
    if x.0.len() != layout.len() {
        return Err(EncodingError::LayoutMismatch {
            expected: layout.len(),
            found: x.0.len(),
        });
    }
    let dims = x
        .0
        .iter()
        .zip(layout)
        .enumerate()
        .map(|(dim, (&c, cardinality))| {
            unit_to_category(c, cardinality)
                .map(|value| CategoricalDim { cardinality, value })
                .ok_or(EncodingError::OutOfUnitRange { dim, value: c })
        })
        .collect::<Result<_, _>>()?;
    Ok(CategoricalVector { dims })
}

pub fn genotype_to_unit(g: &Genotype, cfg: &SpaceConfig) -> UnitVector {
    to_unit(&to_categorical(g, cfg))
}

pub fn genotype_from_unit(x: &UnitVector, cfg: &SpaceConfig) -> Result<Genotype, EncodingError> {
    from_categorical(&from_unit(x, cfg)?, cfg)
}

/// Concatenated one-hot blocks of a categorical vector.
pub fn one_hot(v: &CategoricalVector) -> Vec<f64> {
    let width: usize = v.dims.iter().map(|d| d.cardinality as usize).sum();
    let mut row = vec![0.0; width];
    for col in one_hot_columns(v) {
        row[col as usize] = 1.0;
    }
    row
}

fn one_hot_columns(v: &CategoricalVector) -> impl Iterator<Item = u32> + '_ {
    v.dims.iter().scan(0u32, |offset, d| {
        let col = *offset + d.value;
        *offset += d.cardinality;
        Some(col)
    })
}

/// Sparse indicator vector over operation sequences of input-to-output paths.
///
/// Sequences of length `L` occupy a block of `7^L` columns; blocks for
/// `L = 1..=n_intermediate` are laid out in order, normal cell first.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathFeature {
    pub width: usize,
    /// Sorted indices of the set coordinates.
    pub set: Vec<u32>,
}

const N_OPS: u64 = Operation::ALL.len() as u64;

/// Width of the path block of one cell with `n` intermediate nodes.
pub fn path_cell_width(n: usize) -> usize {
    (1..=n as u32).map(|l| N_OPS.pow(l) as usize).sum()
}

fn path_offset(len: usize) -> u64 {
    (1..len as u32).map(|l| N_OPS.pow(l)).sum()
}

fn cell_paths(cell: &Cell) -> Vec<u32> {
    // (length, code) of every path ending at each intermediate node
    let mut ending: Vec<Vec<(usize, u64)>> = Vec::with_capacity(cell.n_intermediate());
    let mut out = Vec::new();
    for edges in cell.nodes() {
        let mut here = Vec::new();
        for e in edges {
            let ord = e.op.ordinal() as u64;
            if e.parent < 2 {
                here.push((1, ord));
            } else {
                for &(len, code) in &ending[e.parent as usize - 2] {
                    here.push((len + 1, code * N_OPS + ord));
                }
            }
        }
        out.extend(here.iter().map(|&(len, code)| (path_offset(len) + code) as u32));
        ending.push(here);
    }
    out
}

pub fn to_path(g: &Genotype) -> PathFeature {
    let cell_width = path_cell_width(g.normal.n_intermediate());
    let mut set = cell_paths(&g.normal);
    set.extend(cell_paths(&g.reduction).into_iter().map(|c| c + cell_width as u32));
    set.sort_unstable();
    set.dedup();
    PathFeature {
        width: 2 * cell_width,
        set,
    }
}

/// Number of input-to-output paths of a cell, counted with multiplicity.
pub fn path_count(cell: &Cell) -> usize {
    cell_paths(cell).len()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    OneHot,
    Path,
}

/// Maps genotypes to model input rows; the version string is stored with
/// every fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub kind: FeatureKind,
    pub space: SpaceConfig,
}

impl FeatureLayout {
    pub fn one_hot(space: &SpaceConfig) -> Self {
        FeatureLayout {
            kind: FeatureKind::OneHot,
            space: space.clone(),
        }
    }

    pub fn path(space: &SpaceConfig) -> Self {
        FeatureLayout {
            kind: FeatureKind::Path,
            space: space.clone(),
        }
    }

    pub fn width(&self) -> usize {
        match self.kind {
            FeatureKind::OneHot => categorical_layout(&self.space).iter().map(|&c| c as usize).sum(),
            FeatureKind::Path => 2 * path_cell_width(self.space.n_intermediate),
        }
    }

    pub fn version(&self) -> String {
        let kind = match self.kind {
            FeatureKind::OneHot => "onehot",
            FeatureKind::Path => "path",
        };
        let ops: String = self.space.ops.iter().map(|o| o.ordinal().to_string()).collect();
        format!("{kind}-v1/n{}/ops{ops}", self.space.n_intermediate)
    }

    /// Sorted column indices of the nonzero (all equal to one) features.
    pub fn active_columns(&self, g: &Genotype) -> Vec<u32> {
        match self.kind {
            FeatureKind::OneHot => one_hot_columns(&to_categorical(g, &self.space)).collect(),
            FeatureKind::Path => to_path(g).set,
        }
    }

    pub fn encode_sparse(&self, g: &Genotype) -> Vec<(u32, f64)> {
        self.active_columns(g).into_iter().map(|c| (c, 1.0)).collect()
    }

    pub fn encode_dense(&self, g: &Genotype) -> Vec<f64> {
        let mut row = vec![0.0; self.width()];
        for c in self.active_columns(g) {
            row[c as usize] = 1.0;
        }
        row
    }
}
