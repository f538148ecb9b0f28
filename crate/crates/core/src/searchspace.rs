//! The DARTS cell search space.
//!
//! A [`Genotype`] is a pair of cells. Every cell has `n_intermediate` nodes
//! (four in the full space) and each node sums two incoming edges, each edge
//! being a `(parent, operation)` pair. Node ids `0` and `1` are the two cell
//! inputs; intermediate node `i` (0-based) has id `i + 2` and may draw its
//! parents from ids `0..=i + 1`. The two parents of a node are distinct, so
//! node `i` has `C(i + 2, 2)` admissible parent pairs.
//!
//! Cells are stored in canonical form: the two edges of a node are sorted by
//! `(parent, operation ordinal)`. Isomorphisms across nodes are not collapsed.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by search-space operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("{cell} cell has {found} intermediate nodes, expected {expected}")]
    WrongNodeCount { cell: CellKind, expected: usize, found: usize },
    #[error("{cell} cell node {node}: parent {parent} is out of range")]
    ParentOutOfRange { cell: CellKind, node: usize, parent: u8 },
    #[error("{cell} cell node {node}: both edges come from parent {parent}")]
    DuplicateParent { cell: CellKind, node: usize, parent: u8 },
    #[error("{cell} cell node {node}: edges are not in canonical order")]
    NotCanonical { cell: CellKind, node: usize },
    #[error("unknown operation `{0}`")]
    UnknownOp(String),
    #[error("the selected mutation has no admissible alternative")]
    MutationImpossible,
    #[error("space of {count} items exceeds the enumeration cap {cap}")]
    SpaceTooLarge { count: String, cap: u64 },
    #[error("{0} is not a parameter-free operation")]
    NotParameterFree(Operation),
    #[error("replacement ratio {0} is outside [0, 1]")]
    InvalidRatio(f64),
    #[error("invalid space configuration: {0}")]
    InvalidConfig(String),
}

/// Candidate operations on a cell edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "&'static str")]
pub enum Operation {
    SepConv3x3,
    SepConv5x5,
    DilConv3x3,
    DilConv5x5,
    MaxPool3x3,
    AvgPool3x3,
    SkipConnect,
}

impl Operation {
    pub const ALL: [Operation; 7] = [
        Operation::SepConv3x3,
        Operation::SepConv5x5,
        Operation::DilConv3x3,
        Operation::DilConv5x5,
        Operation::MaxPool3x3,
        Operation::AvgPool3x3,
        Operation::SkipConnect,
    ];

    pub const PARAMETER_FREE: [Operation; 3] = [
        Operation::MaxPool3x3,
        Operation::AvgPool3x3,
        Operation::SkipConnect,
    ];

    /// Position in [`Operation::ALL`].
    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(ordinal: usize) -> Option<Operation> {
        Self::ALL.get(ordinal).copied()
    }

    /// Pooling and skip connections carry no learned weights.
    pub fn is_parameter_free(self) -> bool {
        matches!(
            self,
            Operation::MaxPool3x3 | Operation::AvgPool3x3 | Operation::SkipConnect
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Operation::SepConv3x3 => "sep_conv_3x3",
            Operation::SepConv5x5 => "sep_conv_5x5",
            Operation::DilConv3x3 => "dil_conv_3x3",
            Operation::DilConv5x5 => "dil_conv_5x5",
            Operation::MaxPool3x3 => "max_pool_3x3",
            Operation::AvgPool3x3 => "avg_pool_3x3",
            Operation::SkipConnect => "skip_connect",
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Operation {
    type Err = SpaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Operation::ALL
            .iter()
            .copied()
            .find(|op| op.name() == s)
            .ok_or_else(|| SpaceError::UnknownOp(s.to_owned()))
    }
}

impl TryFrom<String> for Operation {
    type Error = SpaceError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Operation> for &'static str {
    fn from(op: Operation) -> Self {
        op.name()
    }
}

/// One incoming edge of an intermediate node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(u8, Operation)", into = "(u8, Operation)")]
pub struct Edge {
    pub parent: u8,
    pub op: Operation,
}

impl Edge {
    pub fn new(parent: u8, op: Operation) -> Self {
        Edge { parent, op }
    }
}

impl From<(u8, Operation)> for Edge {
    fn from((parent, op): (u8, Operation)) -> Self {
        Edge { parent, op }
    }
}

impl From<Edge> for (u8, Operation) {
    fn from(e: Edge) -> Self {
        (e.parent, e.op)
    }
}

/// Which of the two cells of a genotype.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Normal,
    Reduction,
}

impl CellKind {
    pub const BOTH: [CellKind; 2] = [CellKind::Normal, CellKind::Reduction];
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellKind::Normal => f.write_str("normal"),
            CellKind::Reduction => f.write_str("reduction"),
        }
    }
}

/// A cell: one pair of edges per intermediate node.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "Vec<[Edge; 2]>", into = "Vec<[Edge; 2]>")]
pub struct Cell {
    nodes: Vec<[Edge; 2]>,
}

impl Cell {
    /// Builds a cell, putting each node's edges in canonical order.
    pub fn new(mut nodes: Vec<[Edge; 2]>) -> Self {
        for node in &mut nodes {
            node.sort();
        }
        Cell { nodes }
    }

    /// Builds a cell exactly as given, without canonicalizing.
    pub fn from_raw(nodes: Vec<[Edge; 2]>) -> Self {
        Cell { nodes }
    }

    pub fn nodes(&self) -> &[[Edge; 2]] {
        &self.nodes
    }

    pub fn n_intermediate(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> + '_ {
        self.nodes.iter().flat_map(|n| n.iter())
    }

    pub fn canonicalize(&mut self) {
        for node in &mut self.nodes {
            node.sort();
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.nodes.iter().all(|[a, b]| a <= b)
    }

    pub fn parameter_free_count(&self) -> usize {
        self.edges().filter(|e| e.op.is_parameter_free()).count()
    }

    fn with_node(&self, node: usize, edges: [Edge; 2]) -> Cell {
        let mut nodes = self.nodes.clone();
        nodes[node] = edges;
        Cell::new(nodes)
    }
}

impl From<Vec<[Edge; 2]>> for Cell {
    fn from(nodes: Vec<[Edge; 2]>) -> Self {
        Cell::new(nodes)
    }
}

impl From<Cell> for Vec<[Edge; 2]> {
    fn from(c: Cell) -> Self {
        c.nodes
    }
}

/// A full architecture: a normal and a reduction cell.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Genotype {
    pub normal: Cell,
    pub reduction: Cell,
}

impl Genotype {
    pub fn new(normal: Cell, reduction: Cell) -> Self {
        Genotype { normal, reduction }
    }

    pub fn cell(&self, kind: CellKind) -> &Cell {
        match kind {
            CellKind::Normal => &self.normal,
            CellKind::Reduction => &self.reduction,
        }
    }

    pub fn cell_mut(&mut self, kind: CellKind) -> &mut Cell {
        match kind {
            CellKind::Normal => &mut self.normal,
            CellKind::Reduction => &mut self.reduction,
        }
    }

    pub fn cells(&self) -> [(CellKind, &Cell); 2] {
        [
            (CellKind::Normal, &self.normal),
            (CellKind::Reduction, &self.reduction),
        ]
    }

    pub fn canonicalize(&mut self) {
        self.normal.canonicalize();
        self.reduction.canonicalize();
    }

    /// Compact canonical JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("genotype serialization is infallible")
    }

    /// Parses genotype JSON; edge order within a node is canonicalized.
    pub fn from_json(s: &str) -> Result<Genotype, serde_json::Error> {
        serde_json::from_str(s)
    }
}

impl fmt::Display for Genotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json())
    }
}

/// Shape of a (possibly reduced) search space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceConfig {
    pub n_intermediate: usize,
    pub ops: Vec<Operation>,
    #[serde(default = "default_cap")]
    pub enumeration_cap: u64,
}

fn default_cap() -> u64 {
    SpaceConfig::DEFAULT_ENUMERATION_CAP
}

impl Default for SpaceConfig {
    fn default() -> Self {
        SpaceConfig {
            n_intermediate: 4,
            ops: Operation::ALL.to_vec(),
            enumeration_cap: Self::DEFAULT_ENUMERATION_CAP,
        }
    }
}

impl SpaceConfig {
    pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

    /// A reduced space; `ops` are deduplicated and sorted by ordinal.
    pub fn reduced(n_intermediate: usize, ops: &[Operation]) -> Result<Self, SpaceError> {
        let mut ops = ops.to_vec();
        ops.sort();
        ops.dedup();
        let cfg = SpaceConfig {
            n_intermediate,
            ops,
            enumeration_cap: Self::DEFAULT_ENUMERATION_CAP,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), SpaceError> {
        if self.n_intermediate == 0 || self.n_intermediate > 64 {
            return Err(SpaceError::InvalidConfig(format!(
                "n_intermediate must be in 1..=64, got {}",
                self.n_intermediate
            )));
        }
        if self.ops.is_empty() {
            return Err(SpaceError::InvalidConfig("empty operation set".into()));
        }
        if self.ops.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SpaceError::InvalidConfig(
                "operations must be unique and sorted by ordinal".into(),
            ));
        }
        Ok(())
    }

    pub fn is_full(&self) -> bool {
        self.n_intermediate == 4 && self.ops.len() == Operation::ALL.len()
    }

    /// Index of `op` within this space's operation list.
    pub fn op_index(&self, op: Operation) -> Option<usize> {
        self.ops.iter().position(|&o| o == op)
    }

    pub fn edges_per_cell(&self) -> usize {
        2 * self.n_intermediate
    }

    /// Number of admissible parents of 0-based intermediate node `node`.
    pub fn parent_count(node: usize) -> usize {
        node + 2
    }

    /// Number of admissible parent pairs of 0-based intermediate node `node`.
    pub fn pair_count(node: usize) -> usize {
        let m = node + 2;
        m * (m - 1) / 2
    }
}

/// Lexicographic index of the sorted parent pair `(a, b)` of node `node`.
pub fn pair_index(node: usize, a: u8, b: u8) -> usize {
    let m = SpaceConfig::parent_count(node);
    let (a, b) = if a < b { (a as usize, b as usize) } else { (b as usize, a as usize) };
    debug_assert!(b < m && a < b);
    // pairs starting with a' < a, then offset within the a-block
    let before: usize = (0..a).map(|x| m - 1 - x).sum();
    before + (b - a - 1)
}

/// Inverse of [`pair_index`].
pub fn pair_from_index(node: usize, mut idx: usize) -> (u8, u8) {
    let m = SpaceConfig::parent_count(node);
    for a in 0..m - 1 {
        let block = m - 1 - a;
        if idx < block {
            return (a as u8, (a + 1 + idx) as u8);
        }
        idx -= block;
    }
    panic!("pair index out of range for node {node}");
}

/// Checks every cell invariant under `cfg`.
pub fn validate(g: &Genotype, cfg: &SpaceConfig) -> Result<(), SpaceError> {
    for (kind, cell) in g.cells() {
        validate_cell(cell, kind, cfg)?;
    }
    Ok(())
}

pub fn validate_cell(cell: &Cell, kind: CellKind, cfg: &SpaceConfig) -> Result<(), SpaceError> {
    if cell.n_intermediate() != cfg.n_intermediate {
        return Err(SpaceError::WrongNodeCount {
            cell: kind,
            expected: cfg.n_intermediate,
            found: cell.n_intermediate(),
        });
    }
    for (i, [a, b]) in cell.nodes().iter().enumerate() {
        let limit = SpaceConfig::parent_count(i);
        for e in [a, b] {
            if e.parent as usize >= limit {
                return Err(SpaceError::ParentOutOfRange {
                    cell: kind,
                    node: i + 1,
                    parent: e.parent,
                });
            }
            if cfg.op_index(e.op).is_none() {
                return Err(SpaceError::UnknownOp(e.op.name().to_owned()));
            }
        }
        if a.parent == b.parent {
            return Err(SpaceError::DuplicateParent {
                cell: kind,
                node: i + 1,
                parent: a.parent,
            });
        }
        if a > b {
            return Err(SpaceError::NotCanonical { cell: kind, node: i + 1 });
        }
    }
    Ok(())
}

fn sample_cell<R: Rng + ?Sized>(rng: &mut R, cfg: &SpaceConfig) -> Cell {
    let nodes = (0..cfg.n_intermediate)
        .map(|i| {
            let (a, b) = pair_from_index(i, rng.gen_range(0..SpaceConfig::pair_count(i)));
            let oa = cfg.ops[rng.gen_range(0..cfg.ops.len())];
            let ob = cfg.ops[rng.gen_range(0..cfg.ops.len())];
            [Edge::new(a, oa), Edge::new(b, ob)]
        })
        .collect();
    Cell::new(nodes)
}

/// Draws a genotype uniformly from the canonical genotypes of `cfg`.
pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R, cfg: &SpaceConfig) -> Genotype {
    let normal = sample_cell(rng, cfg);
    let reduction = sample_cell(rng, cfg);
    Genotype { normal, reduction }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    ParentChange,
    OpChange,
    Identity,
}

/// What a call to [`mutate_traced`] did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MutationRecord {
    pub cell: CellKind,
    pub kind: MutationKind,
}

/// Applies one specific mutation to edge `slot` of node `node` in `cell`.
pub fn apply_mutation<R: Rng + ?Sized>(
    g: &Genotype,
    cell: CellKind,
    kind: MutationKind,
    node: usize,
    slot: usize,
    rng: &mut R,
    cfg: &SpaceConfig,
) -> Result<Genotype, SpaceError> {
    let target = g.cell(cell);
    let edges = target.nodes()[node];
    let edge = edges[slot];
    let other = edges[1 - slot];
    let new_edge = match kind {
        MutationKind::Identity => return Ok(g.clone()),
        MutationKind::ParentChange => {
            let alternatives: Vec<u8> = (0..SpaceConfig::parent_count(node) as u8)
                .filter(|&p| p != edge.parent && p != other.parent)
                .collect();
            if alternatives.is_empty() {
                return Err(SpaceError::MutationImpossible);
            }
            Edge::new(alternatives[rng.gen_range(0..alternatives.len())], edge.op)
        }
        MutationKind::OpChange => {
            let alternatives: Vec<Operation> =
                cfg.ops.iter().copied().filter(|&o| o != edge.op).collect();
            if alternatives.is_empty() {
                return Err(SpaceError::MutationImpossible);
            }
            Edge::new(edge.parent, alternatives[rng.gen_range(0..alternatives.len())])
        }
    };
    let mut out = g.clone();
    *out.cell_mut(cell) = target.with_node(node, [new_edge, other]);
    Ok(out)
}

/// Mutation operator of regularized evolution.
pub fn mutate<R: Rng + ?Sized>(g: &Genotype, rng: &mut R, cfg: &SpaceConfig) -> Genotype {
    mutate_traced(g, rng, cfg).0
}

/// Like [`mutate`], also reporting which cell and mutation type were used.
///
/// The cell is drawn once. If the drawn mutation type has no alternative on
/// the drawn edge, the type and edge are redrawn; identity always succeeds.
pub fn mutate_traced<R: Rng + ?Sized>(
    g: &Genotype,
    rng: &mut R,
    cfg: &SpaceConfig,
) -> (Genotype, MutationRecord) {
    const KINDS: [MutationKind; 3] = [
        MutationKind::ParentChange,
        MutationKind::OpChange,
        MutationKind::Identity,
    ];
    let cell = CellKind::BOTH[rng.gen_range(0..2)];
    loop {
        let kind = KINDS[rng.gen_range(0..3)];
        let node = rng.gen_range(0..cfg.n_intermediate);
        let slot = rng.gen_range(0..2);
        match apply_mutation(g, cell, kind, node, slot, rng, cfg) {
            Ok(out) => return (out, MutationRecord { cell, kind }),
            Err(SpaceError::MutationImpossible) => continue,
            Err(e) => unreachable!("mutation of a valid genotype failed: {e}"),
        }
    }
}

/// All genotypes one parent change or one operation change away from `g`.
pub fn one_edit_neighbors(g: &Genotype, cfg: &SpaceConfig) -> Vec<Genotype> {
    let mut out = Vec::new();
    for (kind, cell) in g.cells() {
        for (i, edges) in cell.nodes().iter().enumerate() {
            for slot in 0..2 {
                let edge = edges[slot];
                let other = edges[1 - slot];
                for p in 0..SpaceConfig::parent_count(i) as u8 {
                    if p != edge.parent && p != other.parent {
                        let mut n = g.clone();
                        *n.cell_mut(kind) = cell.with_node(i, [Edge::new(p, edge.op), other]);
                        out.push(n);
                    }
                }
                for &op in cfg.ops.iter().filter(|&&o| o != edge.op) {
                    let mut n = g.clone();
                    *n.cell_mut(kind) = cell.with_node(i, [Edge::new(edge.parent, op), other]);
                    out.push(n);
                }
            }
        }
    }
    out
}

/// Number of intermediate nodes on the longest input-to-output path.
pub fn depth(cell: &Cell) -> usize {
    let mut node_depth = Vec::with_capacity(cell.n_intermediate());
    for edges in cell.nodes() {
        let d = edges
            .iter()
            .filter(|e| e.parent >= 2)
            .map(|e| node_depth[e.parent as usize - 2])
            .max()
            .unwrap_or(0)
            + 1;
        node_depth.push(d);
    }
    node_depth.into_iter().max().unwrap_or(0)
}

/// Exact sizes of a search space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpaceCounts {
    pub topologies_per_cell: BigUint,
    pub genotypes_per_cell: BigUint,
    pub total: BigUint,
}

pub fn space_counts(cfg: &SpaceConfig) -> SpaceCounts {
    let topologies: BigUint = (0..cfg.n_intermediate)
        .map(|i| BigUint::from(SpaceConfig::pair_count(i)))
        .product();
    let op_choices = BigUint::from(cfg.ops.len()).pow(cfg.edges_per_cell() as u32);
    let per_cell = &topologies * op_choices;
    let total = &per_cell * &per_cell;
    SpaceCounts {
        topologies_per_cell: topologies,
        genotypes_per_cell: per_cell,
        total,
    }
}

/// Number of canonical genotypes in the space.
pub fn count_space(cfg: &SpaceConfig) -> BigUint {
    space_counts(cfg).total
}

fn check_cap(count: &BigUint, cap: u64) -> Result<(), SpaceError> {
    if *count > BigUint::from(cap) {
        Err(SpaceError::SpaceTooLarge {
            count: count.to_string(),
            cap,
        })
    } else {
        Ok(())
    }
}

/// Parent-pair assignment of a cell: one sorted pair per intermediate node.
pub type Topology = Vec<(u8, u8)>;

/// Iterator over every parent-pair assignment, in lexicographic order of
/// per-node pair indices.
pub struct Topologies {
    counters: Vec<usize>,
    done: bool,
}

impl Iterator for Topologies {
    type Item = Topology;

    fn next(&mut self) -> Option<Topology> {
        if self.done {
            return None;
        }
        let item = self
            .counters
            .iter()
            .enumerate()
            .map(|(i, &c)| pair_from_index(i, c))
            .collect();
        self.done = true;
        for i in (0..self.counters.len()).rev() {
            self.counters[i] += 1;
            if self.counters[i] < SpaceConfig::pair_count(i) {
                self.done = false;
                break;
            }
            self.counters[i] = 0;
        }
        Some(item)
    }
}

pub fn enumerate_topologies(cfg: &SpaceConfig) -> Result<Topologies, SpaceError> {
    cfg.check()?;
    check_cap(&space_counts(cfg).topologies_per_cell, cfg.enumeration_cap)?;
    Ok(Topologies {
        counters: vec![0; cfg.n_intermediate],
        done: false,
    })
}

/// Builds the canonical cell with the given topology and per-edge ops, edges
/// listed node by node in ascending parent order.
pub fn cell_from_parts(topology: &[(u8, u8)], ops: &[Operation]) -> Cell {
    assert_eq!(ops.len(), 2 * topology.len());
    Cell::new(
        topology
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| [Edge::new(a, ops[2 * i]), Edge::new(b, ops[2 * i + 1])])
            .collect(),
    )
}

/// Every canonical cell of the space.
pub fn enumerate_cells(cfg: &SpaceConfig) -> Result<Vec<Cell>, SpaceError> {
    check_cap(&space_counts(cfg).genotypes_per_cell, cfg.enumeration_cap)?;
    let n_edges = cfg.edges_per_cell();
    let n_ops = cfg.ops.len();
    let mut cells = Vec::new();
    for topology in enumerate_topologies(cfg)? {
        let mut digits = vec![0usize; n_edges];
        loop {
            let ops: Vec<Operation> = digits.iter().map(|&d| cfg.ops[d]).collect();
            cells.push(cell_from_parts(&topology, &ops));
            let mut carry = true;
            for d in digits.iter_mut().rev() {
                *d += 1;
                if *d < n_ops {
                    carry = false;
                    break;
                }
                *d = 0;
            }
            if carry {
                break;
            }
        }
    }
    Ok(cells)
}

/// Every canonical genotype of the space, normal cell varying slowest.
pub fn enumerate_genotypes(
    cfg: &SpaceConfig,
) -> Result<impl Iterator<Item = Genotype>, SpaceError> {
    cfg.check()?;
    check_cap(&count_space(cfg), cfg.enumeration_cap)?;
    let cells = enumerate_cells(cfg)?;
    let n = cells.len();
    Ok((0..n * n).map(move |k| Genotype {
        normal: cells[k / n].clone(),
        reduction: cells[k % n].clone(),
    }))
}

/// Sets `⌈ratio · edges⌉` uniformly chosen edges of every cell to `op_kind`.
pub fn replace_parameter_free<R: Rng + ?Sized>(
    g: &Genotype,
    rng: &mut R,
    ratio: f64,
    op_kind: Operation,
) -> Result<Genotype, SpaceError> {
    if !op_kind.is_parameter_free() {
        return Err(SpaceError::NotParameterFree(op_kind));
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(SpaceError::InvalidRatio(ratio));
    }
    let mut out = g.clone();
    for kind in CellKind::BOTH {
        let cell = out.cell_mut(kind);
        let n_edges = 2 * cell.n_intermediate();
        // guard against 0.1 * 10 style rounding pushing the ceiling up
        let count = ((ratio * n_edges as f64) - 1e-9).ceil().max(0.0) as usize;
        let mut nodes = cell.nodes().to_vec();
        for e in index::sample(rng, n_edges, count.min(n_edges)) {
            nodes[e / 2][e % 2].op = op_kind;
        }
        *cell = Cell::new(nodes);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use Operation::*;

    fn chain_cell(op: Operation) -> Cell {
        Cell::new(vec![
            [Edge::new(0, op), Edge::new(1, op)],
            [Edge::new(0, op), Edge::new(2, op)],
            [Edge::new(0, op), Edge::new(3, op)],
            [Edge::new(0, op), Edge::new(4, op)],
        ])
    }

    fn inputs_only_cell() -> Cell {
        Cell::new(vec![[Edge::new(0, SepConv3x3), Edge::new(1, SkipConnect)]; 4])
    }

    #[test]
    fn operation_names_round_trip() {
        for op in Operation::ALL {
            assert_eq!(op.name().parse::<Operation>().unwrap(), op);
            assert_eq!(Operation::from_ordinal(op.ordinal()), Some(op));
        }
        assert!(matches!("conv_7x7".parse::<Operation>(), Err(SpaceError::UnknownOp(_))));
        let free: Vec<_> = Operation::ALL.iter().filter(|o| o.is_parameter_free()).collect();
        assert_eq!(free, vec![&MaxPool3x3, &AvgPool3x3, &SkipConnect]);
    }

    #[test]
    fn validate_accepts_chain() {
        let g = Genotype::new(chain_cell(SepConv3x3), chain_cell(MaxPool3x3));
        validate(&g, &SpaceConfig::default()).unwrap();
    }

    #[test]
    fn validate_rejects_bad_cells() {
        let cfg = SpaceConfig::default();
        let mut nodes = chain_cell(SepConv3x3).nodes().to_vec();
        nodes[0] = [Edge::new(0, SepConv3x3), Edge::new(0, SepConv5x5)];
        let g = Genotype::new(Cell::new(nodes.clone()), chain_cell(SepConv3x3));
        assert!(matches!(
            validate(&g, &cfg),
            Err(SpaceError::DuplicateParent { node: 1, .. })
        ));

        nodes[0] = [Edge::new(0, SepConv3x3), Edge::new(3, SepConv5x5)];
        let g = Genotype::new(Cell::new(nodes.clone()), chain_cell(SepConv3x3));
        assert!(matches!(
            validate(&g, &cfg),
            Err(SpaceError::ParentOutOfRange { node: 1, parent: 3, .. })
        ));

        nodes[0] = [Edge::new(1, SepConv3x3), Edge::new(0, SepConv5x5)];
        let g = Genotype::new(Cell::from_raw(nodes.clone()), chain_cell(SepConv3x3));
        assert!(matches!(validate(&g, &cfg), Err(SpaceError::NotCanonical { .. })));

        let small = SpaceConfig::reduced(4, &[SepConv3x3]).unwrap();
        let g = Genotype::new(chain_cell(SkipConnect), chain_cell(SepConv3x3));
        assert!(matches!(validate(&g, &small), Err(SpaceError::UnknownOp(_))));

        let two = SpaceConfig::reduced(2, &Operation::ALL).unwrap();
        let g = Genotype::new(chain_cell(SepConv3x3), chain_cell(SepConv3x3));
        assert!(matches!(validate(&g, &two), Err(SpaceError::WrongNodeCount { .. })));
    }

    #[test]
    fn pair_index_is_lexicographic() {
        assert_eq!(pair_index(0, 0, 1), 0);
        assert_eq!(pair_index(3, 0, 1), 0);
        assert_eq!(pair_index(3, 3, 4), 9);
        assert_eq!(pair_index(3, 0, 4), 3);
        assert_eq!(pair_index(3, 1, 2), 4);
        for node in 0..4 {
            for idx in 0..SpaceConfig::pair_count(node) {
                let (a, b) = pair_from_index(node, idx);
                assert!(a < b);
                assert_eq!(pair_index(node, a, b), idx);
            }
        }
    }

    #[test]
    fn depth_examples() {
        assert_eq!(depth(&inputs_only_cell()), 1);
        assert_eq!(depth(&chain_cell(SepConv3x3)), 4);
        let c = Cell::new(vec![
            [Edge::new(0, SepConv3x3), Edge::new(1, SepConv3x3)],
            [Edge::new(0, SepConv3x3), Edge::new(1, SepConv3x3)],
            [Edge::new(2, SepConv3x3), Edge::new(3, SepConv3x3)],
            [Edge::new(0, SepConv3x3), Edge::new(1, SepConv3x3)],
        ]);
        assert_eq!(depth(&c), 2);
    }

    #[test]
    fn depth_ignores_edge_order() {
        let mut nodes = chain_cell(SepConv3x3).nodes().to_vec();
        for n in &mut nodes {
            n.swap(0, 1);
        }
        assert_eq!(depth(&Cell::from_raw(nodes)), 4);
    }

    #[test]
    fn counts_match_product_formula() {
        let c = space_counts(&SpaceConfig::default());
        assert_eq!(c.topologies_per_cell, BigUint::from(180u32));
        assert_eq!(c.genotypes_per_cell, BigUint::from(1_037_664_180u64));
        assert_eq!(c.total.to_string(), "1076746950455072400");
        assert!(c.total > BigUint::from(10u32).pow(18));
    }

    #[test]
    fn topology_enumeration() {
        let full: Vec<_> = enumerate_topologies(&SpaceConfig::default()).unwrap().collect();
        assert_eq!(full.len(), 180);
        let mut dedup = full.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 180);

        let two = SpaceConfig::reduced(2, &Operation::ALL).unwrap();
        assert_eq!(enumerate_topologies(&two).unwrap().count(), 3);
        let one = SpaceConfig::reduced(1, &Operation::ALL).unwrap();
        let t: Vec<_> = enumerate_topologies(&one).unwrap().collect();
        assert_eq!(t, vec![vec![(0, 1)]]);
    }

    #[test]
    fn enumeration_is_capped() {
        assert!(matches!(
            enumerate_genotypes(&SpaceConfig::default()),
            Err(SpaceError::SpaceTooLarge { .. })
        ));
        let cfg = SpaceConfig { enumeration_cap: 100, ..SpaceConfig::default() };
        assert!(matches!(
            enumerate_topologies(&cfg),
            Err(SpaceError::SpaceTooLarge { .. })
        ));
    }

    #[test]
    fn genotype_enumeration_reduced() {
        let one = SpaceConfig::reduced(1, &[SkipConnect]).unwrap();
        let all: Vec<_> = enumerate_genotypes(&one).unwrap().collect();
        assert_eq!(all.len(), 1);
        validate(&all[0], &one).unwrap();

        let cfg = SpaceConfig::reduced(2, &[SepConv3x3, MaxPool3x3, SkipConnect]).unwrap();
        let mut seen = std::collections::HashSet::new();
        for g in enumerate_genotypes(&cfg).unwrap() {
            validate(&g, &cfg).unwrap();
            assert!(seen.insert(g));
        }
        assert_eq!(seen.len(), 59_049);
        assert_eq!(BigUint::from(seen.len()), count_space(&cfg));
    }

    #[test]
    fn sampling_forced_first_pair() {
        let cfg = SpaceConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let g = sample_uniform(&mut rng, &cfg);
            validate(&g, &cfg).unwrap();
            assert_eq!((g.normal.nodes()[0][0].parent, g.normal.nodes()[0][1].parent), (0, 1));
        }
    }

    #[test]
    fn mutation_identity_and_op_change() {
        let cfg = SpaceConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = sample_uniform(&mut rng, &cfg);
        let same =
            apply_mutation(&g, CellKind::Normal, MutationKind::Identity, 2, 0, &mut rng, &cfg)
                .unwrap();
        assert_eq!(same, g);
        for _ in 0..200 {
            let node = rng.gen_range(0..4);
            let slot = rng.gen_range(0..2);
            let m = apply_mutation(&g, CellKind::Reduction, MutationKind::OpChange, node, slot, &mut rng, &cfg)
                .unwrap();
            let diffs = g
                .reduction
                .edges()
                .zip(m.reduction.edges())
                .filter(|(a, b)| a.op != b.op)
                .count();
            assert_eq!(diffs, 1);
            assert_eq!(g.normal, m.normal);
        }
    }

    #[test]
    fn parent_change_on_first_node_is_impossible() {
        let cfg = SpaceConfig::default();
        let g = Genotype::new(chain_cell(SepConv3x3), chain_cell(SepConv3x3));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            apply_mutation(&g, CellKind::Normal, MutationKind::ParentChange, 0, 1, &mut rng, &cfg),
            Err(SpaceError::MutationImpossible)
        );
        let m = apply_mutation(&g, CellKind::Normal, MutationKind::ParentChange, 3, 1, &mut rng, &cfg)
            .unwrap();
        validate(&m, &cfg).unwrap();
        assert_ne!(m, g);
    }

    #[test]
    fn single_op_single_node_space_only_allows_identity() {
        let cfg = SpaceConfig::reduced(1, &[SkipConnect]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = sample_uniform(&mut rng, &cfg);
        for _ in 0..20 {
            let (m, rec) = mutate_traced(&g, &mut rng, &cfg);
            assert_eq!(rec.kind, MutationKind::Identity);
            assert_eq!(m, g);
        }
    }

    #[test]
    fn neighborhood_size() {
        let cfg = SpaceConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let g = sample_uniform(&mut rng, &cfg);
            let n = one_edit_neighbors(&g, &cfg);
            // 16 edges x 6 alternative ops + 2 cells x (0 + 2 + 4 + 6) parent moves
            assert_eq!(n.len(), 120);
            let set: std::collections::HashSet<_> = n.iter().collect();
            assert_eq!(set.len(), 120);
            assert!(!set.contains(&g));
        }
    }

    #[test]
    fn replace_parameter_free_counts() {
        let cfg = SpaceConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = Genotype::new(chain_cell(SepConv3x3), chain_cell(DilConv5x5));
        assert_eq!(replace_parameter_free(&g, &mut rng, 0.0, SkipConnect).unwrap(), g);
        let all = replace_parameter_free(&g, &mut rng, 1.0, SkipConnect).unwrap();
        assert!(all.normal.edges().chain(all.reduction.edges()).all(|e| e.op == SkipConnect));
        let half = replace_parameter_free(&g, &mut rng, 0.5, AvgPool3x3).unwrap();
        for (_, c) in half.cells() {
            assert_eq!(c.edges().filter(|e| e.op == AvgPool3x3).count(), 4);
        }
        validate(&half, &cfg).unwrap();
        assert_eq!(depth(&half.normal), 4);
        assert!(matches!(
            replace_parameter_free(&g, &mut rng, 0.5, SepConv3x3),
            Err(SpaceError::NotParameterFree(_))
        ));
        assert!(matches!(
            replace_parameter_free(&g, &mut rng, 1.5, SkipConnect),
            Err(SpaceError::InvalidRatio(_))
        ));
    }

    #[test]
    fn json_layout() {
        let g = Genotype::new(inputs_only_cell(), chain_cell(SkipConnect));
        let s = g.to_json();
        assert!(s.starts_with(r#"{"normal":[[[0,"sep_conv_3x3"],[1,"skip_connect"]],"#));
        // reversed edge order is accepted and canonicalized
        let raw = r#"{"normal":[[[1,"skip_connect"],[0,"sep_conv_3x3"]]],
                      "reduction":[[[0,"max_pool_3x3"],[1,"avg_pool_3x3"]]]}"#;
        let parsed = Genotype::from_json(raw).unwrap();
        assert!(parsed.normal.is_canonical());
        assert_eq!(parsed.normal.nodes()[0][0], Edge::new(0, SepConv3x3));
        assert!(Genotype::from_json(r#"{"normal":[[[0,"conv"],[1,"skip_connect"]]],"reduction":[]}"#).is_err());
    }
}
