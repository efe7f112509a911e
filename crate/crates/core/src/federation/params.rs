//! Training parameters shared by the guest and echoed into the model.

use serde::{Deserialize, Serialize};

use crate::data::MAX_BINS;
use crate::encoding::DEFAULT_PRECISION;
use crate::error::{bail, Result};
use crate::modes::Mode;
use crate::paillier::MIN_KEY_BITS;
use crate::tree::{DEFAULT_LAMBDA, DEFAULT_OTHER_RATE, DEFAULT_TOP_RATE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Objective {
    /// Labels 0/1, logistic loss.
    Binary,
    /// Labels `0..classes`, softmax cross-entropy.
    Multiclass { classes: u32 },
}

impl Objective {
    /// Binary when every label is 0 or 1, otherwise `max + 1` classes.
    pub fn infer(labels: &[f64]) -> Result<Self> {
        let mut max = 0u32;
        for &y in labels {
            if !(y >= 0.0 && y == libm::trunc(y) && y < 65536.0) {
                bail!(Dataset, "label {y} is not a class index");
            }
            max = max.max(y as u32);
        }
        Ok(if max <= 1 { Objective::Binary } else { Objective::Multiclass { classes: max + 1 } })
    }

    /// Score columns.
    pub fn outputs(&self) -> usize {
        match self {
            Objective::Binary => 1,
            Objective::Multiclass { classes } => *classes as usize,
        }
    }

    pub fn check_labels(&self, labels: &[f64]) -> Result<()> {
        let k = self.outputs().max(2) as f64;
        if let Some(y) = labels.iter().find(|&&y| !(y >= 0.0 && y < k && y == libm::trunc(y))) {
            bail!(Dataset, "label {y} outside 0..{k}");
        }
        Ok(())
    }
}

/// The three cipher optimizations, individually switchable so the
/// unoptimized pipeline can be measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CipherOptions {
    pub gh_packing: bool,
    pub hist_subtraction: bool,
    /// Requires `gh_packing`; ignored for multi-output trees.
    pub compression: bool,
}

impl Default for CipherOptions {
    fn default() -> Self {
        Self { gh_packing: true, hist_subtraction: true, compression: true }
    }
}

impl CipherOptions {
    pub fn baseline() -> Self {
        Self { gh_packing: false, hist_subtraction: false, compression: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GossParams {
    pub top_rate: f64,
    pub other_rate: f64,
}

impl Default for GossParams {
    fn default() -> Self {
        Self { top_rate: DEFAULT_TOP_RATE, other_rate: DEFAULT_OTHER_RATE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub tree_num: u32,
    pub max_depth: u32,
    pub learning_rate: f64,
    pub max_bins: u16,
    pub lambda: f64,
    /// Splits must gain strictly more than this.
    pub min_gain: f64,
    /// Nodes with fewer (sampled) instances become leaves.
    pub min_samples: u32,
    pub precision: u32,
    pub key_bits: u64,
    pub goss: Option<GossParams>,
    pub mode: Mode,
    pub cipher: CipherOptions,
    /// Inferred from the labels when absent.
    pub objective: Option<Objective>,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            tree_num: 25,
            max_depth: 5,
            learning_rate: 0.3,
            max_bins: 32,
            lambda: DEFAULT_LAMBDA,
            min_gain: 1e-4,
            min_samples: 2,
            precision: DEFAULT_PRECISION,
            key_bits: 1024,
            goss: None,
            mode: Mode::Default,
            cipher: CipherOptions::default(),
            objective: None,
            seed: 0,
        }
    }
}

impl TrainParams {
    pub fn validate(&self, n_hosts: usize) -> Result<()> {
        if self.tree_num == 0 || self.max_depth == 0 || self.max_depth > 16 {
            bail!(Config, "tree_num must be positive and max_depth within 1..=16");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            bail!(Config, "learning_rate must be positive");
        }
        if !(2..=MAX_BINS as u16).contains(&self.max_bins) {
            bail!(Config, "max_bins must be within 2..={MAX_BINS}");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) || !self.min_gain.is_finite() {
            bail!(Config, "lambda must be non-negative and min_gain finite");
        }
        if !(1..=60).contains(&self.precision) {
            bail!(Config, "precision must be within 1..=60");
        }
        if self.key_bits < MIN_KEY_BITS || self.key_bits % 2 != 0 {
            bail!(Config, "key_bits must be even and at least {MIN_KEY_BITS}");
        }
        if let Some(g) = self.goss {
            if !(g.top_rate > 0.0 && g.top_rate <= 1.0) || !(0.0..=1.0).contains(&g.other_rate) {
                bail!(Config, "GOSS rates out of range");
            }
            if g.top_rate + g.other_rate > 1.0 + 1e-12 || (g.top_rate < 1.0 && g.other_rate == 0.0) {
                bail!(Config, "GOSS needs top_rate + other_rate <= 1 and a positive other_rate");
            }
        }
        if self.mode == Mode::MultiOutput && !self.cipher.gh_packing {
            bail!(Config, "multi-output mode requires gh_packing");
        }
        if self.cipher.compression && !self.cipher.gh_packing {
            bail!(Config, "compression requires gh_packing");
        }
        self.mode.validate(self.max_depth, n_hosts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_inference() {
        assert_eq!(Objective::infer(&[0.0, 1.0, 1.0]).unwrap(), Objective::Binary);
        assert_eq!(Objective::infer(&[0.0, 4.0]).unwrap(), Objective::Multiclass { classes: 5 });
        assert!(Objective::infer(&[0.5]).is_err());
        assert!(Objective::infer(&[-1.0]).is_err());
        assert!(Objective::Binary.check_labels(&[2.0]).is_err());
    }

    #[test]
    fn defaults_validate() {
        let p = TrainParams::default();
        p.validate(1).unwrap();
        assert_eq!((p.tree_num, p.max_depth, p.max_bins, p.key_bits), (25, 5, 32, 1024));
        assert!(TrainParams { key_bits: 128, ..p.clone() }.validate(1).is_err());
        assert!(TrainParams { cipher: CipherOptions { gh_packing: false, ..Default::default() }, ..p.clone() }
            .validate(1)
            .is_err());
        assert!(TrainParams { goss: Some(GossParams { top_rate: 0.9, other_rate: 0.2 }), ..p }.validate(1).is_err());
    }
}
