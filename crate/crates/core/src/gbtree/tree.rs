use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::binning::BinnedMatrix;
use super::FeatureMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

/// A regression tree stored as a node array rooted at index 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree {
            nodes: vec![TreeNode::Leaf { value }],
        }
    }

    pub fn predict_with(&self, value_of: impl Fn(u32) -> f64) -> f64 {
        let mut k = 0usize;
        loop {
            match self.nodes[k] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    k = if value_of(feature) <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    pub fn predict_dense(&self, row: &[f64]) -> f64 {
        self.predict_with(|c| row[c as usize])
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    pub fn leaf_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Leaf { value } => Some(*value),
            TreeNode::Split { .. } => None,
        })
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, k: usize) -> usize {
            match t.nodes[k] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(t, left as usize).max(walk(t, right as usize))
                }
            }
        }
        walk(self, 0)
    }
}

/// Growth limits and regularization of a single tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowParams {
    pub max_depth: usize,
    pub max_leaves: usize,
    /// Minimum total weight (row count for unit weights) of each child.
    pub min_child_weight: f64,
    /// Minimum total weight of a node for it to be split at all.
    pub min_split_weight: f64,
    pub lambda_l1: f64,
    pub lambda_l2: f64,
    /// Fraction of the tree's columns examined at each split.
    pub split_feature_fraction: f64,
}

impl Default for GrowParams {
    fn default() -> Self {
        GrowParams {
            max_depth: 6,
            max_leaves: usize::MAX,
            min_child_weight: 1.0,
            min_split_weight: 0.0,
            lambda_l1: 0.0,
            lambda_l2: 0.0,
            split_feature_fraction: 1.0,
        }
    }
}

pub(crate) fn soft_threshold(g: f64, alpha: f64) -> f64 {
    g.signum() * (g.abs() - alpha).max(0.0)
}

fn leaf_score(g: f64, h: f64, p: &GrowParams) -> f64 {
    let t = soft_threshold(g, p.lambda_l1);
    let denom = h + p.lambda_l2;
    if denom <= 0.0 {
        0.0
    } else {
        t * t / denom
    }
}

/// `sign(G)·max(|G| − α, 0) / (H + λ)`.
pub(crate) fn leaf_value(g: f64, h: f64, p: &GrowParams) -> f64 {
    let denom = h + p.lambda_l2;
    if denom <= 0.0 {
        0.0
    } else {
        soft_threshold(g, p.lambda_l1) / denom
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitInfo {
    pub feature: u32,
    /// Rows in bins `0..=bin` go left.
    pub bin: u16,
    pub threshold: f64,
    pub gain: f64,
    pub left_sum: f64,
    pub left_weight: f64,
}

/// Best root split of `residuals` over `x`, binned with `max_bin`.
pub fn best_split(
    x: &FeatureMatrix,
    residuals: &[f64],
    max_bin: usize,
    params: &GrowParams,
) -> Option<SplitInfo> {
    let data = BinnedMatrix::new(x, max_bin);
    let weights = vec![1.0; residuals.len()];
    let columns: Vec<u32> = (0..x.n_cols() as u32).collect();
    let rows: Vec<u32> = (0..residuals.len() as u32).collect();
    let grower = Grower::new(&data, residuals, &weights, params, &columns);
    grower.root_split(&rows, &mut rand::rngs::mock::StepRng::new(0, 0))
}

struct Frontier {
    node: usize,
    rows: Vec<u32>,
    depth: usize,
    sum: f64,
    weight: f64,
    /// Complete (gradient, weight) histogram over the tree's columns.
    hist: Vec<(f64, f64)>,
}

/// Grows trees over a fixed column set. Node histograms cover exactly those
/// columns; the larger child of every split gets its histogram by
/// subtracting the smaller child's from the parent's.
pub(crate) struct Grower<'a> {
    data: &'a BinnedMatrix,
    target: &'a [f64],
    weight: &'a [f64],
    params: &'a GrowParams,
    /// Tree columns that have more than one bin.
    columns: Vec<u32>,
    /// Histogram offset of each data column, `usize::MAX` if unused.
    local: Vec<usize>,
    hist_len: usize,
}

impl<'a> Grower<'a> {
    pub(crate) fn new(
        data: &'a BinnedMatrix,
        target: &'a [f64],
        weight: &'a [f64],
        params: &'a GrowParams,
        columns: &[u32],
    ) -> Self {
        let mut local = vec![usize::MAX; data.n_cols()];
        let mut hist_len = 0;
        let columns: Vec<u32> = columns
            .iter()
            .copied()
            .filter(|&c| data.columns[c as usize].n_bins() > 1)
            .collect();
        for &c in &columns {
            local[c as usize] = hist_len;
            hist_len += data.columns[c as usize].n_bins();
        }
        Grower {
            data,
            target,
            weight,
            params,
            columns,
            local,
            hist_len,
        }
    }

    fn histogram(&self, rows: &[u32], sum: f64, weight: f64) -> Vec<(f64, f64)> {
        let mut h = vec![(0.0, 0.0); self.hist_len];
        // column scans beat row scans unless rows are much sparser than the column set
        let dense = self.data.dense_bins().filter(|_| self.columns.len() as f64 <= 2.0 * self.data.mean_nnz.max(1.0));
        if let Some(dense) = dense {
            let n = self.data.n_rows;
            let gw: Vec<(f64, f64)> = rows
                .iter()
                .map(|&r| {
                    let w = self.weight[r as usize];
                    (w * self.target[r as usize], w)
                })
                .collect();
            for &c in &self.columns {
                let off = self.local[c as usize];
                let col = &dense[c as usize * n..(c as usize + 1) * n];
                let block = &mut h[off..off + self.data.columns[c as usize].n_bins()];
                for (&r, &(g, w)) in rows.iter().zip(&gw) {
                    let e = &mut block[col[r as usize] as usize];
                    e.0 += g;
                    e.1 += w;
                }
            }
            return h;
        }
        for &r in rows {
            let w = self.weight[r as usize];
            let g = w * self.target[r as usize];
            for &(c, b) in self.data.row(r as usize) {
                let off = self.local[c as usize];
                if off != usize::MAX {
                    let e = &mut h[off + b as usize];
                    e.0 += g;
                    e.1 += w;
                }
            }
        }
        // implicit zeros: whatever the stored entries do not account for
        for &c in &self.columns {
            let col = &self.data.columns[c as usize];
            let off = self.local[c as usize];
            let (mut gz, mut hz) = (sum, weight);
            for b in 0..col.n_bins() {
                if b != col.zero_bin as usize {
                    gz -= h[off + b].0;
                    hz -= h[off + b].1;
                }
            }
            h[off + col.zero_bin as usize] = (gz, hz);
        }
        h
    }

    fn find_split<R: Rng + ?Sized>(
        &self,
        hist: &[(f64, f64)],
        sum: f64,
        weight: f64,
        rng: &mut R,
    ) -> Option<SplitInfo> {
        let p = self.params;
        if self.columns.is_empty() {
            return None;
        }
        let sampled: Vec<u32>;
        let cols: &[u32] = if p.split_feature_fraction < 1.0 && self.columns.len() > 1 {
            let k = ((p.split_feature_fraction * self.columns.len() as f64) as usize)
                .clamp(1, self.columns.len());
            let mut picked: Vec<usize> = index::sample(rng, self.columns.len(), k).into_vec();
            picked.sort_unstable();
            sampled = picked.into_iter().map(|i| self.columns[i]).collect();
            &sampled
        } else {
            &self.columns
        };

        let parent = leaf_score(sum, weight, p);
        // gains below this are rounding noise (e.g. splitting a pure node)
        let min_gain = 1e-12 * (1.0 + parent.abs());
        let mut best: Option<SplitInfo> = None;
        for &c in cols {
            let col = &self.data.columns[c as usize];
            let off = self.local[c as usize];
            let (mut gl, mut hl) = (0.0, 0.0);
            for b in 0..col.n_bins() - 1 {
                gl += hist[off + b].0;
                hl += hist[off + b].1;
                let (gr, hr) = (sum - gl, weight - hl);
                if hl < p.min_child_weight || hr < p.min_child_weight || hl <= 0.0 || hr <= 0.0 {
                    continue;
                }
                let gain = leaf_score(gl, hl, p) + leaf_score(gr, hr, p) - parent;
                if gain > best.as_ref().map_or(min_gain, |s| s.gain) {
                    best = Some(SplitInfo {
                        feature: c,
                        bin: b as u16,
                        threshold: col.thresholds[b],
                        gain,
                        left_sum: gl,
                        left_weight: hl,
                    });
                }
            }
        }
        best
    }

    /// Best split of the root node holding `rows`.
    fn root_split<R: Rng + ?Sized>(&self, rows: &[u32], rng: &mut R) -> Option<SplitInfo> {
        let (sum, weight) = self.sums(rows);
        let hist = self.histogram(rows, sum, weight);
        self.find_split(&hist, sum, weight, rng)
    }

    fn splittable(&self, depth: usize, weight: f64) -> bool {
        depth < self.params.max_depth && weight >= self.params.min_split_weight
    }

    /// Grows one tree depth-wise. Within a level, candidate splits are taken
    /// in order of decreasing gain until `max_leaves` is reached. Returns the
    /// tree and, for every leaf, the training rows it holds.
    pub(crate) fn grow<R: Rng + ?Sized>(
        &mut self,
        rows: Vec<u32>,
        rng: &mut R,
    ) -> (Tree, Vec<(usize, Vec<u32>)>) {
        let p = self.params;
        let (sum, weight) = self.sums(&rows);
        let mut nodes = vec![TreeNode::Leaf {
            value: leaf_value(sum, weight, p),
        }];
        let mut leaves_out = Vec::new();
        let mut n_leaves = 1usize;
        let hist = if self.splittable(0, weight) {
            self.histogram(&rows, sum, weight)
        } else {
            Vec::new()
        };
        let mut frontier = vec![Frontier {
            node: 0,
            rows,
            depth: 0,
            sum,
            weight,
            hist,
        }];

        while !frontier.is_empty() {
            let mut candidates: Vec<(Frontier, Option<SplitInfo>)> = frontier
                .into_iter()
                .map(|f| {
                    let split = if self.splittable(f.depth, f.weight) {
                        self.find_split(&f.hist, f.sum, f.weight, rng)
                    } else {
                        None
                    };
                    (f, split)
                })
                .collect();
            // stable: equal gains keep left-to-right order
            candidates.sort_by(|a, b| {
                let ga = a.1.as_ref().map_or(f64::NEG_INFINITY, |s| s.gain);
                let gb = b.1.as_ref().map_or(f64::NEG_INFINITY, |s| s.gain);
                gb.total_cmp(&ga)
            });
            let mut next = Vec::new();
            for (f, split) in candidates {
                let split = match split {
                    Some(s) if n_leaves < p.max_leaves => s,
                    _ => {
                        leaves_out.push((f.node, f.rows));
                        continue;
                    }
                };
                n_leaves += 1;
                let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = f
                    .rows
                    .iter()
                    .partition(|&&r| self.data.bin(r as usize, split.feature) <= split.bin);
                let (ls, lw) = self.sums(&left_rows);
                let (rs, rw) = self.sums(&right_rows);
                let left = nodes.len();
                nodes.push(TreeNode::Leaf {
                    value: leaf_value(ls, lw, p),
                });
                nodes.push(TreeNode::Leaf {
                    value: leaf_value(rs, rw, p),
                });
                nodes[f.node] = TreeNode::Split {
                    feature: split.feature,
                    threshold: split.threshold,
                    left: left as u32,
                    right: left as u32 + 1,
                };
                let depth = f.depth + 1;
                let (lh, rh) = if self.splittable(depth, lw) || self.splittable(depth, rw) {
                    let mut parent = f.hist;
                    if left_rows.len() <= right_rows.len() {
                        let small = self.histogram(&left_rows, ls, lw);
                        subtract(&mut parent, &small);
                        (small, parent)
                    } else {
                        let small = self.histogram(&right_rows, rs, rw);
                        subtract(&mut parent, &small);
                        (parent, small)
                    }
                } else {
                    (Vec::new(), Vec::new())
                };
                next.push(Frontier {
                    node: left,
                    rows: left_rows,
                    depth,
                    sum: ls,
                    weight: lw,
                    hist: lh,
                });
                next.push(Frontier {
                    node: left + 1,
                    rows: right_rows,
                    depth,
                    sum: rs,
                    weight: rw,
                    hist: rh,
                });
            }
            frontier = next;
        }
        (Tree { nodes }, leaves_out)
    }

    fn sums(&self, rows: &[u32]) -> (f64, f64) {
        rows.iter().fold((0.0, 0.0), |(g, h), &r| {
            let w = self.weight[r as usize];
            (g + w * self.target[r as usize], h + w)
        })
    }
}

fn subtract(a: &mut [(f64, f64)], b: &[(f64, f64)]) {
    for (x, y) in a.iter_mut().zip(b) {
        x.0 -= y.0;
        x.1 -= y.1;
    }
}
