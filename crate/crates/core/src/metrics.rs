//! Evaluation statistics: R², Kendall τ-b, sparse Kendall τ, MAE, Gaussian KL
//! divergence, and the Wilcoxon signed-rank test used to compare optimizers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("paired inputs differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("target values are all equal")]
    DegenerateTarget,
    #[error("every pair is tied in at least one argument")]
    AllTied,
    #[error("standard deviation must be positive")]
    ZeroVariance,
    #[error("non-finite value in input")]
    NonFinite,
}

fn check_pair(a: &[f64], b: &[f64], min_len: usize) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < min_len {
        return Err(MetricError::TooFewPoints {
            needed: min_len,
            got: a.len(),
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok(())
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Linear-interpolation quantile (`q` in [0, 1]) of a nonempty sample.
pub fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

pub fn median(v: &[f64]) -> f64 {
    quantile(v, 0.5)
}

/// Sample standard deviation (n − 1 denominator); zero for fewer than two values.
pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricError> {
    check_pair(y_true, y_pred, 2)?;
    let m = mean(y_true);
    let ss_tot: f64 = y_true.iter().map(|y| (y - m).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(MetricError::DegenerateTarget);
    }
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mae(y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricError> {
    check_pair(y_true, y_pred, 1)?;
    Ok(y_true
        .iter()
        .zip(y_pred)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / y_true.len() as f64)
}

fn tied_pairs_in_sorted(keys: impl Iterator<Item = (f64, f64)>, by_both: bool) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<(f64, f64)> = None;
    for k in keys {
        let same = match prev {
            Some(p) => p.0 == k.0 && (!by_both || p.1 == k.1),
            None => false,
        };
        if same {
            run += 1;
        } else {
            total += run * (run.saturating_sub(1)) / 2;
            run = 1;
        }
        prev = Some(k);
    }
    total + run * (run.saturating_sub(1)) / 2
}

// Merge sort on the second coordinate, counting inversions.
fn count_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        count_swaps(l, bl) + count_swaps(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's τ-b, computed in `O(n log n)` with Knight's algorithm.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    check_pair(x, y, 2)?;
    let n = x.len() as u64;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = n * (n - 1) / 2;
    let tied_x = tied_pairs_in_sorted(pairs.iter().copied(), false);
    let tied_xy = tied_pairs_in_sorted(pairs.iter().copied(), true);
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let swaps = count_swaps(&mut ys, &mut buf);
    let tied_y = tied_pairs_in_sorted(ys.iter().map(|&v| (v, 0.0)), false);

    let denom_x = n0 - tied_x;
    let denom_y = n0 - tied_y;
    if denom_x == 0 || denom_y == 0 {
        return Err(MetricError::AllTied);
    }
    let concordant_minus_discordant =
        n0 as f64 - tied_x as f64 - tied_y as f64 + tied_xy as f64 - 2.0 * swaps as f64;
    Ok(concordant_minus_discordant / ((denom_x as f64) * (denom_y as f64)).sqrt())
}

/// Rounds an accuracy to the nearest 0.001, returned as an integer count of
/// thousandths so equality after rounding is exact.
pub fn round_to_permille(v: f64) -> f64 {
    (v * 1000.0).round()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseTauOptions {
    /// Round the ground truth as well as the predictions. Rounding only the
    /// predictions matches the literal metric definition; rounding both keeps
    /// the metric symmetric.
    pub round_truth: bool,
}

impl Default for SparseTauOptions {
    fn default() -> Self {
        SparseTauOptions { round_truth: true }
    }
}

/// τ-b after rounding accuracies to 0.1 % precision.
pub fn sparse_kendall_tau(y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricError> {
    sparse_kendall_tau_with(y_true, y_pred, SparseTauOptions::default())
}

pub fn sparse_kendall_tau_with(
    y_true: &[f64],
    y_pred: &[f64],
    opts: SparseTauOptions,
) -> Result<f64, MetricError> {
    check_pair(y_true, y_pred, 2)?;
    let pred: Vec<f64> = y_pred.iter().map(|&v| round_to_permille(v)).collect();
    if opts.round_truth {
        let truth: Vec<f64> = y_true.iter().map(|&v| round_to_permille(v)).collect();
        kendall_tau(&truth, &pred)
    } else {
        kendall_tau(y_true, &pred)
    }
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    check_pair(x, y, 2)?;
    let (mx, my) = (mean(x), mean(y));
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Err(MetricError::AllTied);
    }
    Ok(cov / (vx * vy).sqrt())
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    check_pair(x, y, 2)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// 1-based ranks with ties receiving the average of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mean and standard deviation of a normal distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSummary {
    pub mean: f64,
    pub std: f64,
}

impl GaussianSummary {
    pub fn new(mean: f64, std: f64) -> Self {
        GaussianSummary { mean, std }
    }

    pub fn of_samples(v: &[f64]) -> Self {
        GaussianSummary {
            mean: mean(v),
            std: sample_std(v),
        }
    }

    pub fn with_std_floor(self, floor: f64) -> Self {
        GaussianSummary {
            mean: self.mean,
            std: self.std.max(floor),
        }
    }
}

/// `KL(p ‖ q)` for univariate normals; `p` is the ground truth.
pub fn kl_gaussian(p: GaussianSummary, q: GaussianSummary) -> Result<f64, MetricError> {
    if !(p.std > 0.0 && q.std > 0.0) {
        return Err(MetricError::ZeroVariance);
    }
    if ![p.mean, p.std, q.mean, q.std].iter().all(|v| v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok((q.std / p.std).ln() + (p.std.powi(2) + (p.mean - q.mean).powi(2)) / (2.0 * q.std.powi(2))
        - 0.5)
}

/// Outcome of a paired Wilcoxon signed-rank test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Number of nonzero differences.
    pub n: usize,
    /// Sum of ranks of positive differences `x − y`.
    pub w_plus: f64,
    /// `P(W+ ≥ observed)` under the null: evidence that `x` tends to exceed `y`.
    pub p_greater: f64,
    pub p_less: f64,
    pub p_two_sided: f64,
}

/// Exact Wilcoxon signed-rank test on paired samples. Zero differences are
/// dropped; tied magnitudes get average ranks and the null distribution is
/// enumerated over those ranks.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult, MetricError> {
    check_pair(x, y, 1)?;
    let d: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|&v| v != 0.0)
        .collect();
    let n = d.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            n,
            w_plus: 0.0,
            p_greater: 1.0,
            p_less: 1.0,
            p_two_sided: 1.0,
        });
    }
    let mags: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&mags);
    // doubled ranks are integers even with ties
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let w2: usize = d
        .iter()
        .zip(&doubled)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| r)
        .sum();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let total: f64 = counts.iter().sum();
    let p_greater = counts[w2..].iter().sum::<f64>() / total;
    let p_less = counts[..=w2].iter().sum::<f64>() / total;
    Ok(WilcoxonResult {
        n,
        w_plus: w2 as f64 / 2.0,
        p_greater,
        p_less,
        p_two_sided: (2.0 * p_greater.min(p_less)).min(1.0),
    })
}
