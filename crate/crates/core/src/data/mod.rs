//! Party datasets, instance alignment and vertical splitting.

mod binning;

pub use binning::{quantile_bin, BinnedMatrix, FeatureBinning, DEFAULT_BINS, MAX_BINS};

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::error::{bail, Result};

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            bail!(Dataset, "matrix of {n_rows}x{n_cols} needs {} values, got {}", n_rows * n_cols, values.len());
        }
        Ok(Self { n_rows, n_cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            bail!(Dataset, "ragged rows");
        }
        Self::new(rows.len(), n_cols, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, col)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        Self { n_rows: rows.len(), n_cols: self.n_cols, values }
    }

    pub fn select_cols(&self, cols: core::ops::Range<usize>) -> Self {
        let width = cols.len();
        let mut values = Vec::with_capacity(self.n_rows * width);
        for r in 0..self.n_rows {
            values.extend_from_slice(&self.row(r)[cols.clone()]);
        }
        Self { n_rows: self.n_rows, n_cols: width, values }
    }
}

/// One party's share of a vertically partitioned dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PartyDataset {
    pub ids: Vec<String>,
    pub features: FeatureMatrix,
    /// Present on the guest only.
    pub labels: Option<Vec<f64>>,
    pub feature_names: Vec<String>,
}

impl PartyDataset {
    pub fn new(
        ids: Vec<String>,
        features: FeatureMatrix,
        labels: Option<Vec<f64>>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if ids.len() != features.n_rows() {
            bail!(Dataset, "{} ids for {} rows", ids.len(), features.n_rows());
        }
        if feature_names.len() != features.n_cols() {
            bail!(Dataset, "{} feature names for {} columns", feature_names.len(), features.n_cols());
        }
        if let Some(labels) = &labels {
            if labels.len() != ids.len() {
                bail!(Dataset, "{} labels for {} rows", labels.len(), ids.len());
            }
        }
        let mut seen = BTreeSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                bail!(Dataset, "duplicate instance id {id:?}");
            }
        }
        Ok(Self { ids, features, labels, feature_names })
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn is_guest(&self) -> bool {
        self.labels.is_some()
    }

    /// Keep only `ids`, in that order. Every id must be present.
    pub fn align_to(&self, ids: &[String]) -> Result<Self> {
        let position: BTreeMap<&str, usize> =
            self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let rows = ids
            .iter()
            .map(|id| {
                position.get(id.as_str()).copied().ok_or_else(|| {
                    crate::Error::Dataset(alloc::format!("id {id:?} missing from party data"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            ids: ids.to_vec(),
            features: self.features.select_rows(&rows),
            labels: self.labels.as_ref().map(|l| rows.iter().map(|&r| l[r]).collect()),
            feature_names: self.feature_names.clone(),
        })
    }
}

/// Ids common to every list, in the order of the first list.
pub fn intersect_ids<T: Ord + Clone>(lists: &[&[T]]) -> Result<Vec<T>> {
    if lists.len() < 2 {
        bail!(Dataset, "id intersection needs at least two parties, got {}", lists.len());
    }
    let others: Vec<BTreeSet<&T>> = lists[1..].iter().map(|l| l.iter().collect()).collect();
    let common: Vec<T> = lists[0]
        .iter()
        .filter(|id| others.iter().all(|s| s.contains(id)))
        .cloned()
        .collect();
    if common.is_empty() {
        bail!(Dataset, "instance id intersection is empty");
    }
    Ok(common)
}

/// Salted SHA-256 of an instance id; parties exchange these instead of raw ids.
pub fn hash_id(salt: &[u8], id: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update((salt.len() as u32).to_be_bytes());
    hasher.update(salt);
    hasher.update(id.as_bytes());
    hasher.finalize().into()
}

/// Partition the feature columns of `dataset` by `fractions`. The first
/// part is the guest and keeps the labels.
pub fn vertical_split(dataset: &PartyDataset, fractions: &[f64]) -> Result<Vec<PartyDataset>> {
    if fractions.len() < 2 || fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        bail!(Config, "need at least two fractions within [0, 1]");
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        bail!(Config, "fractions must sum to 1, got {total}");
    }
    let d = dataset.features.n_cols();
    let mut cumulative = 0.0;
    let mut start = 0usize;
    let mut parts = Vec::with_capacity(fractions.len());
    for (k, f) in fractions.iter().enumerate() {
        cumulative += f;
        let end = if k + 1 == fractions.len() {
            d
        } else {
            (libm::round(cumulative * d as f64) as usize).clamp(start, d)
        };
        parts.push(PartyDataset {
            ids: dataset.ids.clone(),
            features: dataset.features.select_cols(start..end),
            labels: if k == 0 { dataset.labels.clone() } else { None },
            feature_names: dataset.feature_names[start..end].to_vec(),
        });
        start = end;
    }
    Ok(parts)
}
