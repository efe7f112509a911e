use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{bail, Result};

pub const DEFAULT_BINS: usize = 32;
pub const MAX_BINS: usize = 255;

/// Per-feature bin boundaries. Bin `b` holds values `v` with
/// `edges[b-1] < v <= edges[b]`; the last bin is unbounded above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBinning {
    pub edges: Vec<Vec<f64>>,
    pub zero_bin: Vec<u8>,
}

impl FeatureBinning {
    pub fn n_features(&self) -> usize {
        self.edges.len()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.edges[feature].len() + 1
    }

    /// Bin of `value`. Values outside the training range clamp to the first
    /// or last bin; NaN is treated as zero.
    pub fn bin_of(&self, feature: usize, value: f64) -> u8 {
        let v = if value.is_nan() { 0.0 } else { value };
        self.edges[feature].partition_point(|e| *e < v) as u8
    }

    /// Raw value at the right boundary of `bin`, i.e. instances with
    /// `value <= threshold` fall in bins `0..=bin`.
    pub fn threshold(&self, feature: usize, bin: u8) -> f64 {
        self.edges[feature]
            .get(bin as usize)
            .copied()
            .unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowEntry {
    pub feature: u32,
    pub bin: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnEntry {
    pub row: u32,
    pub bin: u8,
}

/// Sparse binned feature matrix. Entries whose raw value is exactly zero
/// are not stored; their bin is the feature's `zero_bin`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedMatrix {
    n_rows: usize,
    binning: FeatureBinning,
    row_ptr: Vec<usize>,
    row_entries: Vec<RowEntry>,
    col_ptr: Vec<usize>,
    col_entries: Vec<ColumnEntry>,
}

/// Quantile cut points over the sorted column.
fn quantile_edges(mut column: Vec<f64>, n_bins: usize) -> Vec<f64> {
    for v in column.iter_mut() {
        if v.is_nan() {
            *v = 0.0;
        }
    }
    column.sort_by(f64::total_cmp);
    let n = column.len();
    if n == 0 {
        return Vec::new();
    }
    let max = column[n - 1];
    let mut edges: Vec<f64> = Vec::with_capacity(n_bins - 1);
    for i in 1..n_bins {
        let idx = (i * n).div_ceil(n_bins).saturating_sub(1);
        let e = column[idx];
        if e >= max {
            break;
        }
        if edges.last().is_none_or(|&last| e > last) {
            edges.push(e);
        }
    }
    edges
}

/// Bin every feature at its empirical quantiles.
pub fn quantile_bin(features: &FeatureMatrix, n_bins: usize) -> Result<BinnedMatrix> {
    if !(2..=MAX_BINS).contains(&n_bins) {
        bail!(Config, "n_bins must be within 2..={MAX_BINS}, got {n_bins}");
    }
    let mut edges = Vec::with_capacity(features.n_cols());
    for f in 0..features.n_cols() {
        let e = quantile_edges(features.column(f), n_bins);
        if e.is_empty() && features.n_rows() > 0 {
            log::warn!("feature {f} is constant; it gets a single bin");
        }
        edges.push(e);
    }
    let zero_bin = (0..edges.len())
        .map(|f| edges[f].partition_point(|e| *e < 0.0) as u8)
        .collect();
    BinnedMatrix::from_binning(features, FeatureBinning { edges, zero_bin })
}

impl BinnedMatrix {
    /// Apply an existing binning (e.g. from a trained model) to new data.
    pub fn from_binning(features: &FeatureMatrix, binning: FeatureBinning) -> Result<Self> {
        if binning.n_features() != features.n_cols() {
            bail!(
                Dataset,
                "binning covers {} features, data has {}",
                binning.n_features(),
                features.n_cols()
            );
        }
        let n_rows = features.n_rows();
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut row_entries = Vec::new();
        row_ptr.push(0);
        let mut col_counts = vec![0usize; features.n_cols()];
        for r in 0..n_rows {
            for (f, &v) in features.row(r).iter().enumerate() {
                if v == 0.0 || v.is_nan() {
                    continue;
                }
                row_entries.push(RowEntry {
                    feature: f as u32,
                    bin: binning.bin_of(f, v),
                });
                col_counts[f] += 1;
            }
            row_ptr.push(row_entries.len());
        }
        let mut col_ptr = Vec::with_capacity(col_counts.len() + 1);
        col_ptr.push(0);
        for c in &col_counts {
            col_ptr.push(col_ptr.last().unwrap() + c);
        }
        let mut fill = col_ptr.clone();
        let mut col_entries = vec![ColumnEntry { row: 0, bin: 0 }; row_entries.len()];
        for r in 0..n_rows {
            for e in &row_entries[row_ptr[r]..row_ptr[r + 1]] {
                let slot = &mut fill[e.feature as usize];
                col_entries[*slot] = ColumnEntry { row: r as u32, bin: e.bin };
                *slot += 1;
            }
        }
        Ok(Self {
            n_rows,
            binning,
            row_ptr,
            row_entries,
            col_ptr,
            col_entries,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.binning.n_features()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.binning.n_bins(feature)
    }

    pub fn binning(&self) -> &FeatureBinning {
        &self.binning
    }

    pub fn zero_bin(&self, feature: usize) -> u8 {
        self.binning.zero_bin[feature]
    }

    pub fn row(&self, row: usize) -> &[RowEntry] {
        &self.row_entries[self.row_ptr[row]..self.row_ptr[row + 1]]
    }

    pub fn column(&self, feature: usize) -> &[ColumnEntry] {
        &self.col_entries[self.col_ptr[feature]..self.col_ptr[feature + 1]]
    }

    pub fn stored_entries(&self) -> usize {
        self.row_entries.len()
    }

    /// Bin of one cell, including omitted zeros.
    pub fn bin(&self, row: usize, feature: usize) -> u8 {
        let entries = self.row(row);
        match entries.binary_search_by_key(&(feature as u32), |e| e.feature) {
            Ok(i) => entries[i].bin,
            Err(_) => self.zero_bin(feature),
        }
    }

    /// Dense `n_rows × n_features` bin indices, row-major.
    pub fn densify(&self) -> Vec<u8> {
        let d = self.n_features();
        let mut out = Vec::with_capacity(self.n_rows * d);
        for r in 0..self.n_rows {
            out.extend((0..d).map(|f| self.zero_bin(f)));
            for e in self.row(r) {
                out[r * d + e.feature as usize] = e.bin;
            }
        }
        out
    }
}
