//! Per-party model shards. The guest shard holds the topology, its own
//! splits and all leaf weights; each host shard maps its anonymous split
//! ids to local (feature, bin) thresholds.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::params::{Objective, TrainParams};
use crate::data::FeatureBinning;
use crate::error::{bail, Result};
use crate::tree::{softmax, sigmoid, SplitRule, Tree};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuestModel {
    pub format_version: u32,
    pub objective: Objective,
    pub n_hosts: u16,
    pub init_score: Vec<f64>,
    pub feature_names: Vec<String>,
    pub binning: FeatureBinning,
    /// Learning rate already applied to the leaf weights.
    pub trees: Vec<Tree>,
    pub params: TrainParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HostSplit {
    pub feature: u32,
    pub bin: u8,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostModel {
    pub format_version: u32,
    pub party: u16,
    pub feature_names: Vec<String>,
    pub binning: FeatureBinning,
    pub splits: BTreeMap<u64, HostSplit>,
}

impl GuestModel {
    pub fn outputs(&self) -> usize {
        self.objective.outputs()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            bail!(Corruption, "unsupported model format version {}", self.format_version);
        }
        let k = self.outputs();
        if self.init_score.len() != k {
            bail!(Corruption, "init score has {} entries, expected {k}", self.init_score.len());
        }
        for t in &self.trees {
            let width = if t.output.is_some() { 1 } else { k };
            if t.output.is_some_and(|o| o as usize >= k) {
                bail!(Corruption, "tree output index out of range");
            }
            t.validate(width)?;
            for n in &t.nodes {
                if let crate::tree::NodeKind::Internal { rule: SplitRule::Host { party, .. }, .. } = &n.kind {
                    if *party == 0 || *party > self.n_hosts {
                        bail!(Corruption, "split references unknown host {party}");
                    }
                }
                if let crate::tree::NodeKind::Internal { rule: SplitRule::Guest { feature, .. }, .. } = &n.kind {
                    if *feature as usize >= self.binning.n_features() {
                        bail!(Corruption, "split references unknown guest feature {feature}");
                    }
                }
            }
        }
        Ok(())
    }

    /// Raw scores → class probabilities (binary: probability of class 1).
    pub fn transform(&self, raw: &[f64]) -> Vec<f64> {
        match self.objective {
            Objective::Binary => raw.iter().map(|&s| sigmoid(s)).collect(),
            Objective::Multiclass { classes } => raw.chunks(classes as usize).flat_map(softmax).collect(),
        }
    }
}

impl HostModel {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            bail!(Corruption, "unsupported model format version {}", self.format_version);
        }
        if self.splits.values().any(|s| s.feature as usize >= self.binning.n_features()) {
            bail!(Corruption, "split references unknown host feature");
        }
        Ok(())
    }
}
