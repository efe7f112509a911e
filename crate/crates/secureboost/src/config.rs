//! Training configuration file (TOML, flat keys). Relative paths resolve
//! against the file's directory.
//!
//! ```toml
//! guest = "guest.csv"          # labelled party
//! hosts = ["host1.csv"]        # one file per host, rank = position + 1
//! output_dir = "model"
//!
//! tree_num = 25
//! max_depth = 5
//! learning_rate = 0.3
//! max_bins = 32
//! lambda = 0.1
//! min_gain = 1e-4
//! min_samples = 2              # smallest node that may still split
//! precision = 53               # fixed-point bits r
//! key_bits = 1024
//! seed = 0
//! objective = "auto"           # auto | binary | multiclass
//! num_classes = 0              # multiclass only; 0 infers from labels
//!
//! goss = false
//! top_rate = 0.2
//! other_rate = 0.1
//!
//! gh_packing = true
//! hist_subtraction = true
//! compression = true
//!
//! mode = "default"             # default | mix | layered | mo
//! tree_per_party = 1           # mix
//! guest_depth = 2              # layered
//! host_depth = 3               # layered
//!
//! transport = "inproc"         # inproc | tcp
//! host_addresses = []          # tcp: host k listens on entry k-1
//! timeout_secs = 3600
//! ```

use std::path::{Path, PathBuf};

use secureboost_core::federation::{CipherOptions, GossParams, Objective, TrainParams};
use secureboost_core::modes::Mode;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Default,
    Mix,
    Layered,
    #[serde(alias = "multi_output")]
    Mo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveName {
    Auto,
    Binary,
    Multiclass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    Inproc,
    Tcp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub guest: PathBuf,
    pub hosts: Vec<PathBuf>,
    pub output_dir: PathBuf,

    pub tree_num: u32,
    pub max_depth: u32,
    pub learning_rate: f64,
    pub max_bins: u16,
    pub lambda: f64,
    pub min_gain: f64,
    pub min_samples: u32,
    pub precision: u32,
    pub key_bits: u64,
    pub seed: u64,
    pub objective: ObjectiveName,
    pub num_classes: u32,

    pub goss: bool,
    pub top_rate: f64,
    pub other_rate: f64,

    pub gh_packing: bool,
    pub hist_subtraction: bool,
    pub compression: bool,

    pub mode: ModeName,
    pub tree_per_party: u32,
    pub guest_depth: u32,
    pub host_depth: u32,

    pub transport: TransportKind,
    pub host_addresses: Vec<String>,
    pub timeout_secs: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let p = TrainParams::default();
        let g = GossParams::default();
        let c = CipherOptions::default();
        Self {
            guest: PathBuf::new(),
            hosts: Vec::new(),
            output_dir: PathBuf::from("model"),
            tree_num: p.tree_num,
            max_depth: p.max_depth,
            learning_rate: p.learning_rate,
            max_bins: p.max_bins,
            lambda: p.lambda,
            min_gain: p.min_gain,
            min_samples: p.min_samples,
            precision: p.precision,
            key_bits: p.key_bits,
            seed: p.seed,
            objective: ObjectiveName::Auto,
            num_classes: 0,
            goss: false,
            top_rate: g.top_rate,
            other_rate: g.other_rate,
            gh_packing: c.gh_packing,
            hist_subtraction: c.hist_subtraction,
            compression: c.compression,
            mode: ModeName::Default,
            tree_per_party: 1,
            guest_depth: 2,
            host_depth: 3,
            transport: TransportKind::Inproc,
            host_addresses: Vec::new(),
            timeout_secs: 3600,
        }
    }
}

impl TrainConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| Error::parse(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.guest);
        cfg.hosts.iter_mut().for_each(resolve);
        resolve(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn mode(&self) -> Mode {
        match self.mode {
            ModeName::Default => Mode::Default,
            ModeName::Mix => Mode::Mix { tree_per_party: self.tree_per_party },
            ModeName::Layered => Mode::Layered { guest_depth: self.guest_depth, host_depth: self.host_depth },
            ModeName::Mo => Mode::MultiOutput,
        }
    }

    /// Core parameters, validated for this config's host count.
    pub fn params(&self) -> Result<TrainParams> {
        let objective = match (self.objective, self.num_classes) {
            (ObjectiveName::Auto, _) | (ObjectiveName::Multiclass, 0) => None,
            (ObjectiveName::Binary, _) => Some(Objective::Binary),
            (ObjectiveName::Multiclass, k) => Some(Objective::Multiclass { classes: k }),
        };
        let params = TrainParams {
            tree_num: self.tree_num,
            max_depth: self.max_depth,
            learning_rate: self.learning_rate,
            max_bins: self.max_bins,
            lambda: self.lambda,
            min_gain: self.min_gain,
            min_samples: self.min_samples,
            precision: self.precision,
            key_bits: self.key_bits,
            goss: self.goss.then_some(GossParams { top_rate: self.top_rate, other_rate: self.other_rate }),
            mode: self.mode(),
            cipher: CipherOptions {
                gh_packing: self.gh_packing,
                hist_subtraction: self.hist_subtraction,
                compression: self.compression,
            },
            objective,
            seed: self.seed,
        };
        params.validate(self.hosts.len())?;
        if self.transport == TransportKind::Tcp && self.host_addresses.len() != self.hosts.len() {
            return Err(Error::Config(format!(
                "tcp transport needs one address per host ({} addresses, {} hosts)",
                self.host_addresses.len(),
                self.hosts.len()
            )));
        }
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_hyperparameters() {
        let cfg = TrainConfig::parse("guest = 'g.csv'\nhosts = ['h.csv']").unwrap();
        let p = cfg.params().unwrap();
        assert_eq!((p.tree_num, p.max_depth, p.max_bins, p.key_bits, p.precision), (25, 5, 32, 1024, 53));
        assert_eq!(p.learning_rate, 0.3);
        assert_eq!(p.mode, Mode::Default);
        assert!(p.goss.is_none());
    }

    #[test]
    fn mode_keys() {
        let cfg = TrainConfig::parse("hosts=['h']\nmode='layered'\nguest_depth=2\nhost_depth=3").unwrap();
        assert_eq!(cfg.params().unwrap().mode, Mode::Layered { guest_depth: 2, host_depth: 3 });
        let cfg = TrainConfig::parse("hosts=['h']\nmode='mix'\ntree_per_party=2").unwrap();
        assert_eq!(cfg.mode(), Mode::Mix { tree_per_party: 2 });
        let cfg = TrainConfig::parse("hosts=['h']\nmode='mo'").unwrap();
        assert_eq!(cfg.mode(), Mode::MultiOutput);
        // layered depths must add up to max_depth
        let cfg = TrainConfig::parse("hosts=['h']\nmode='layered'\nguest_depth=1\nhost_depth=1").unwrap();
        assert!(matches!(cfg.params(), Err(Error::Core(secureboost_core::Error::Config(_)))));
    }

    #[test]
    fn rejects_unknown_keys_and_short_keys() {
        assert!(TrainConfig::parse("tree_number = 3").is_err());
        let cfg = TrainConfig::parse("hosts=['h']\nkey_bits=128").unwrap();
        assert_eq!(cfg.params().unwrap_err().exit_code(), 2);
    }
}
