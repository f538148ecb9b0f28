use serde::{Deserialize, Serialize};

use super::FeatureMatrix;

/// Bin boundaries of one feature. Value `v` falls in bin `#{t : t < v}`, so
/// `bin(v) <= j` exactly when `v <= thresholds[j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnBins {
    pub thresholds: Vec<f64>,
    /// Bin holding the value zero; entries in this bin are not stored.
    pub zero_bin: u16,
}

impl ColumnBins {
    pub fn n_bins(&self) -> usize {
        self.thresholds.len() + 1
    }

    pub fn bin(&self, v: f64) -> u16 {
        self.thresholds.partition_point(|&t| t < v) as u16
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    a + (b - a) / 2.0
}

/// Equal-frequency cut points over distinct values. Equal values always share
/// a bin; with at most `max_bin` distinct values every value gets its own bin.
fn cut_points(distinct: &[(f64, usize)], total: usize, max_bin: usize) -> Vec<f64> {
    if distinct.len() <= max_bin {
        return distinct.windows(2).map(|w| midpoint(w[0].0, w[1].0)).collect();
    }
    let per_bin = total as f64 / max_bin as f64;
    let mut out = Vec::with_capacity(max_bin - 1);
    let mut cum = 0usize;
    for k in 0..distinct.len() - 1 {
        cum += distinct[k].1;
        if out.len() + 1 < max_bin && cum as f64 >= per_bin * (out.len() + 1) as f64 {
            out.push(midpoint(distinct[k].0, distinct[k + 1].0));
        }
    }
    out
}

/// Training features mapped to bins, stored sparsely: only entries outside
/// their column's zero bin are kept.
#[derive(Clone, Debug)]
pub struct BinnedMatrix {
    pub n_rows: usize,
    pub columns: Vec<ColumnBins>,
    rows: Vec<Vec<(u32, u16)>>,
    /// Column-major copy of all bins, kept for moderately sparse data when it
    /// is small enough; makes row partitioning a single lookup.
    dense: Option<Vec<u8>>,
    /// Average number of stored entries per row.
    pub mean_nnz: f64,
}

const DENSE_LIMIT: usize = 1 << 26;

impl BinnedMatrix {
    pub fn new(x: &FeatureMatrix, max_bin: usize) -> Self {
        let max_bin = max_bin.max(2);
        let n = x.n_rows();
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); x.n_cols()];
        for i in 0..n {
            for &(c, v) in x.row(i) {
                values[c as usize].push(v);
            }
        }
        let columns: Vec<ColumnBins> = values
            .into_iter()
            .map(|mut vals| {
                let zeros = n - vals.len();
                if zeros > 0 {
                    vals.push(0.0);
                }
                vals.sort_by(f64::total_cmp);
                let mut distinct: Vec<(f64, usize)> = Vec::new();
                for v in vals {
                    let weight = if v == 0.0 && zeros > 0 { 0 } else { 1 };
                    match distinct.last_mut() {
                        Some(last) if last.0 == v => last.1 += weight,
                        _ => distinct.push((v, weight)),
                    }
                }
                if let Some(z) = distinct.iter_mut().find(|d| d.0 == 0.0) {
                    z.1 += zeros;
                }
                let thresholds = cut_points(&distinct, n, max_bin);
                let mut col = ColumnBins {
                    thresholds,
                    zero_bin: 0,
                };
                col.zero_bin = col.bin(0.0);
                col
            })
            .collect();
        let rows: Vec<Vec<(u32, u16)>> = (0..n)
            .map(|i| {
                x.row(i)
                    .iter()
                    .filter_map(|&(c, v)| {
                        let col = &columns[c as usize];
                        let b = col.bin(v);
                        (b != col.zero_bin).then_some((c, b))
                    })
                    .collect()
            })
            .collect();
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mean_nnz = nnz as f64 / n.max(1) as f64;
        let worth_it = columns.len() as f64 <= 16.0 * mean_nnz.max(1.0);
        let dense = (worth_it && columns.iter().all(|c| c.n_bins() <= 256) && n * columns.len() <= DENSE_LIMIT).then(|| {
            let mut d = Vec::with_capacity(n * columns.len());
            for c in &columns {
                d.extend(std::iter::repeat_n(c.zero_bin as u8, n));
            }
            for (i, row) in rows.iter().enumerate() {
                for &(c, b) in row {
                    d[c as usize * n + i] = b as u8;
                }
            }
            d
        });
        BinnedMatrix {
            n_rows: n,
            columns,
            rows,
            dense,
            mean_nnz,
        }
    }

    /// Column-major bins (`col * n_rows + row`), if materialized.
    pub fn dense_bins(&self) -> Option<&[u8]> {
        self.dense.as_deref()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[(u32, u16)] {
        &self.rows[i]
    }

    pub fn bin(&self, row: usize, col: u32) -> u16 {
        if let Some(d) = &self.dense {
            return d[col as usize * self.n_rows + row] as u16;
        }
        let r = &self.rows[row];
        match r.binary_search_by_key(&col, |e| e.0) {
            Ok(k) => r[k].1,
            Err(_) => self.columns[col as usize].zero_bin,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_values_get_own_bins() {
        let x = FeatureMatrix::from_column(&[3.0, 0.0, 1.0, 1.0, 2.0]);
        let b = BinnedMatrix::new(&x, 16);
        assert_eq!(b.columns[0].thresholds, vec![0.5, 1.5, 2.5]);
        assert_eq!(b.columns[0].zero_bin, 0);
        let bins: Vec<u16> = (0..5).map(|i| b.bin(i, 0)).collect();
        assert_eq!(bins, vec![3, 0, 1, 1, 2]);
    }

    #[test]
    fn quantile_bins_respect_max_bin_and_ties() {
        let vals: Vec<f64> = (0..1000).map(|i| (i / 3) as f64).collect();
        let x = FeatureMatrix::from_column(&vals);
        let b = BinnedMatrix::new(&x, 10);
        let col = &b.columns[0];
        assert!(col.n_bins() <= 10);
        assert!(col.n_bins() >= 9);
        // equal values never straddle a boundary
        for i in 0..999 {
            if vals[i] == vals[i + 1] {
                assert_eq!(b.bin(i, 0), b.bin(i + 1, 0));
            }
        }
        for w in col.thresholds.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn negative_values_and_zero_bin() {
        let x = FeatureMatrix::from_column(&[-1.0, 0.0, 0.0, 2.0]);
        let b = BinnedMatrix::new(&x, 8);
        assert_eq!(b.columns[0].zero_bin, 1);
        assert_eq!(b.bin(0, 0), 0);
        assert_eq!(b.bin(1, 0), 1);
        assert_eq!(b.bin(3, 0), 2);
        assert!(b.row(1).is_empty());
    }
}
