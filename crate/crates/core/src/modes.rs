//! Training-mechanism modes: which parties may split which trees and layers.

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::tree::TreeRole;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    /// Every tree considers every party's features.
    #[default]
    Default,
    /// Parties take turns building whole trees on local features.
    Mix { tree_per_party: u32 },
    /// Hosts split the top `host_depth` layers, the guest the remaining
    /// `guest_depth`.
    Layered { guest_depth: u32, host_depth: u32 },
    /// One multi-output tree per epoch.
    MultiOutput,
}

impl Mode {
    pub fn validate(&self, max_depth: u32, n_hosts: usize) -> Result<()> {
        match *self {
            Mode::Mix { tree_per_party } => {
                if tree_per_party == 0 {
                    bail!(Config, "tree_per_party must be positive");
                }
                if n_hosts == 0 {
                    bail!(Config, "mix mode needs at least one host");
                }
            }
            Mode::Layered { guest_depth, host_depth } => {
                if guest_depth + host_depth != max_depth {
                    bail!(
                        Config,
                        "layered mode needs guest_depth + host_depth = max_depth ({guest_depth} + {host_depth} != {max_depth})"
                    );
                }
                if host_depth > 0 && n_hosts == 0 {
                    bail!(Config, "layered mode with host layers needs a host");
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Role of the trees grown in `epoch` with `n_parties` parties (guest
    /// included).
    pub fn tree_role(&self, epoch: u32, n_parties: usize) -> TreeRole {
        match *self {
            Mode::Mix { tree_per_party } => match mix_schedule(epoch, n_parties, tree_per_party) {
                0 => TreeRole::GuestLocal,
                k => TreeRole::HostLocal { party: k as u16 },
            },
            Mode::Layered { host_depth, .. } => TreeRole::Layered { host_depth },
            _ => TreeRole::Federated,
        }
    }
}

/// Owner party (0 = guest) of the trees of `epoch`: round-robin,
/// `tree_per_party` consecutive epochs each.
pub fn mix_schedule(epoch: u32, n_parties: usize, tree_per_party: u32) -> usize {
    ((epoch / tree_per_party.max(1)) as usize) % n_parties.max(1)
}

/// Which side may propose splits for a layer of a tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerParties {
    pub guest: bool,
    /// `None` = every host, `Some(k)` = only host `k` (1-based rank).
    pub hosts: Option<HostSet>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HostSet {
    All,
    Only(u16),
}

pub fn layer_parties(role: TreeRole, depth: u32) -> LayerParties {
    match role {
        TreeRole::Federated => LayerParties { guest: true, hosts: Some(HostSet::All) },
        TreeRole::GuestLocal => LayerParties { guest: true, hosts: None },
        TreeRole::HostLocal { party } => LayerParties { guest: false, hosts: Some(HostSet::Only(party)) },
        TreeRole::Layered { host_depth } if depth < host_depth => {
            LayerParties { guest: false, hosts: Some(HostSet::All) }
        }
        TreeRole::Layered { .. } => LayerParties { guest: true, hosts: None },
    }
}

/// Hosts taking part in any layer of a tree.
pub fn tree_hosts(role: TreeRole) -> Option<HostSet> {
    match role {
        TreeRole::GuestLocal | TreeRole::Layered { host_depth: 0 } => None,
        TreeRole::HostLocal { party } => Some(HostSet::Only(party)),
        _ => Some(HostSet::All),
    }
}

impl HostSet {
    pub fn contains(&self, party: u16) -> bool {
        match self {
            HostSet::All => true,
            HostSet::Only(k) => *k == party,
        }
    }
}
