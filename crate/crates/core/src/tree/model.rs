//! Tree structure shared by all parties. Leaves are guest-held; host
//! splits are opaque references resolved by the owning host.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitRule {
    /// A guest feature; instances with `bin <= self.bin` go left.
    Guest { feature: u32, bin: u8, threshold: f64 },
    /// A host split known to the guest only by the host's anonymous id.
    Host { party: u16, split_id: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Leaf { weight: Vec<f64> },
    Internal { rule: SplitRule, left: u32, right: u32, gain: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: u32,
    pub depth: u32,
    pub sample_count: u32,
    pub kind: NodeKind,
}

/// Which parties' features a tree may split on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TreeRole {
    /// Any party (the standard federated tree).
    Federated,
    /// Guest features only.
    GuestLocal,
    /// One host's features only.
    HostLocal { party: u16 },
    /// Hosts split the top `host_depth` layers, the guest the rest.
    Layered { host_depth: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node `i` has id `i`; the root is node 0.
    pub nodes: Vec<TreeNode>,
    pub role: TreeRole,
    /// Output index this tree contributes to when one tree is grown per
    /// class; `None` when the leaves carry every output.
    pub output: Option<u32>,
}

impl Tree {
    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n.kind, NodeKind::Leaf { .. })).count()
    }

    pub fn depth(&self) -> u32 {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    /// Walk from the root; `go_left` decides each internal node.
    pub fn leaf_weight<F>(&self, mut go_left: F) -> Result<&[f64]>
    where
        F: FnMut(&TreeNode, &SplitRule) -> Result<bool>,
    {
        let mut id = 0usize;
        // a well-formed tree reaches a leaf within nodes.len() steps
        for _ in 0..=self.nodes.len() {
            let node = self
                .nodes
                .get(id)
                .ok_or_else(|| crate::Error::Corruption(alloc::format!("tree references missing node {id}")))?;
            match &node.kind {
                NodeKind::Leaf { weight } => return Ok(weight),
                NodeKind::Internal { rule, left, right, .. } => {
                    id = if go_left(node, rule)? { *left } else { *right } as usize;
                }
            }
        }
        bail!(Corruption, "tree contains a cycle")
    }

    /// Structural check used after deserialization.
    pub fn validate(&self, outputs: usize) -> Result<()> {
        if self.nodes.is_empty() {
            bail!(Corruption, "empty tree");
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id as usize != i {
                bail!(Corruption, "node {i} carries id {}", n.id);
            }
            match &n.kind {
                NodeKind::Leaf { weight } if weight.len() != outputs => {
                    bail!(Corruption, "leaf {i} has {} outputs, expected {outputs}", weight.len())
                }
                NodeKind::Internal { left, right, .. } => {
                    for c in [left, right] {
                        let child = self.nodes.get(*c as usize);
                        if *c as usize <= i || child.is_none_or(|ch| ch.depth != n.depth + 1) {
                            bail!(Corruption, "node {i} has a bad child {c}");
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn stump() -> Tree {
        Tree {
            nodes: vec![
                TreeNode {
                    id: 0,
                    depth: 0,
                    sample_count: 4,
                    kind: NodeKind::Internal {
                        rule: SplitRule::Guest { feature: 0, bin: 1, threshold: 0.5 },
                        left: 1,
                        right: 2,
                        gain: 1.0,
                    },
                },
                TreeNode { id: 1, depth: 1, sample_count: 2, kind: NodeKind::Leaf { weight: vec![-1.0] } },
                TreeNode { id: 2, depth: 1, sample_count: 2, kind: NodeKind::Leaf { weight: vec![1.0] } },
            ],
            role: TreeRole::Federated,
            output: None,
        }
    }

    #[test]
    fn walks_to_leaves() {
        let t = stump();
        assert_eq!(t.leaf_weight(|_, _| Ok(true)).unwrap(), &[-1.0]);
        assert_eq!(t.leaf_weight(|_, _| Ok(false)).unwrap(), &[1.0]);
        assert_eq!((t.n_leaves(), t.depth()), (2, 1));
        t.validate(1).unwrap();
        assert!(t.validate(2).is_err());
    }

    #[test]
    fn rejects_cycles() {
        let mut t = stump();
        if let NodeKind::Internal { left, .. } = &mut t.nodes[0].kind {
            *left = 0;
        }
        assert!(t.validate(1).is_err());
        assert!(t.leaf_weight(|_, _| Ok(true)).is_err());
    }
}
