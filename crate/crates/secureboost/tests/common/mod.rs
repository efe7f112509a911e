//! Shared fixtures: a centralized plaintext GBDT used as the oracle for
//! federated training, and helpers to flatten federated models into the
//! same shape.

#![allow(dead_code)]

use secureboost::core::data::{quantile_bin, PartyDataset};
use secureboost::core::federation::{GuestModel, HostModel, TrainParams};
use secureboost::core::tree::{NodeKind, SplitRule};

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split { party: u16, feature: u32, bin: u8, left: u32, right: u32 },
    Leaf(Vec<f64>),
}

/// Per-tree node lists, node ids as indices.
pub type Forest = Vec<(Option<u32>, Vec<Node>)>;

/// Dense bins of every party's features: `bins[party][feature][row]`, plus
/// the number of bins per feature.
pub struct Binned {
    pub bins: Vec<Vec<Vec<u8>>>,
    pub n_bins: Vec<Vec<usize>>,
}

pub fn bin_parties(parties: &[PartyDataset], max_bins: usize) -> Binned {
    let mut bins = Vec::new();
    let mut n_bins = Vec::new();
    for p in parties {
        let b = quantile_bin(&p.features, max_bins).unwrap();
        let dense = b.densify();
        let d = b.n_features();
        bins.push((0..d).map(|f| (0..b.n_rows()).map(|r| dense[r * d + f]).collect()).collect());
        n_bins.push((0..d).map(|f| b.n_bins(f)).collect());
    }
    Binned { bins, n_bins }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub struct Oracle<'a> {
    pub data: &'a Binned,
    pub lambda: f64,
    pub min_gain: f64,
    pub min_samples: usize,
    pub max_depth: u32,
    pub lr: f64,
}

impl Oracle<'_> {
    pub fn from_params<'a>(data: &'a Binned, p: &TrainParams) -> Oracle<'a> {
        Oracle {
            data,
            lambda: p.lambda,
            min_gain: p.min_gain,
            min_samples: p.min_samples.max(2) as usize,
            max_depth: p.max_depth,
            lr: p.learning_rate,
        }
    }

    /// Σ_j G_j² / (H_j + λ) over outputs.
    fn score(&self, g: &[f64], h: &[f64]) -> f64 {
        g.iter().zip(h).map(|(g, h)| g * g / (h + self.lambda)).sum()
    }

    /// One tree on per-row gradient vectors `g[row]`, `h[row]`.
    pub fn grow(&self, g: &[Vec<f64>], h: &[Vec<f64>]) -> Vec<Node> {
        let n = g.len();
        let m = g[0].len();
        let sum = |rows: &[usize]| {
            let mut gs = vec![0.0; m];
            let mut hs = vec![0.0; m];
            for &r in rows {
                for j in 0..m {
                    gs[j] += g[r][j];
                    hs[j] += h[r][j];
                }
            }
            (gs, hs)
        };
        let mut nodes: Vec<Option<Node>> = vec![None];
        let mut members: Vec<Vec<usize>> = vec![(0..n).collect()];
        let mut frontier = vec![0usize];
        for _depth in 0..self.max_depth {
            let mut next = Vec::new();
            for &id in &frontier {
                let rows = members[id].clone();
                if rows.len() < self.min_samples {
                    continue;
                }
                let (gt, ht) = sum(&rows);
                let parent = self.score(&gt, &ht);
                let mut best: Option<(f64, u16, u32, u8)> = None;
                for (party, feats) in self.data.bins.iter().enumerate() {
                    for (f, col) in feats.iter().enumerate() {
                        for b in 0..self.data.n_bins[party][f].saturating_sub(1) {
                            let left: Vec<usize> = rows.iter().copied().filter(|&r| col[r] <= b as u8).collect();
                            if left.is_empty() || left.len() == rows.len() {
                                continue;
                            }
                            let (gl, hl) = sum(&left);
                            let gr: Vec<f64> = gt.iter().zip(&gl).map(|(a, b)| a - b).collect();
                            let hr: Vec<f64> = ht.iter().zip(&hl).map(|(a, b)| a - b).collect();
                            let gain = 0.5 * (self.score(&gl, &hl) + self.score(&gr, &hr) - parent);
                            if best.map_or(true, |(bg, ..)| gain > bg) {
                                best = Some((gain, party as u16, f as u32, b as u8));
                            }
                        }
                    }
                }
                let Some((gain, party, feature, bin)) = best else { continue };
                if !(gain > self.min_gain) {
                    continue;
                }
                let (left, right) = (nodes.len() as u32, nodes.len() as u32 + 1);
                let col = &self.data.bins[party as usize][feature as usize];
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| col[r] <= bin);
                nodes[id] = Some(Node::Split { party, feature, bin, left, right });
                nodes.push(None);
                nodes.push(None);
                members.push(l);
                members.push(r);
                next.push(left as usize);
                next.push(right as usize);
            }
            frontier = next;
        }
        nodes
            .into_iter()
            .enumerate()
            .map(|(id, n)| {
                n.unwrap_or_else(|| {
                    let (gs, hs) = sum(&members[id]);
                    Node::Leaf(gs.iter().zip(&hs).map(|(g, h)| -g / (h + self.lambda) * self.lr).collect())
                })
            })
            .collect()
    }

    fn leaf_of<'t>(&self, tree: &'t [Node], row: usize) -> &'t [f64] {
        let mut id = 0;
        loop {
            match &tree[id] {
                Node::Leaf(w) => return w,
                Node::Split { party, feature, bin, left, right } => {
                    let v = self.data.bins[*party as usize][*feature as usize][row];
                    id = if v <= *bin { *left } else { *right } as usize;
                }
            }
        }
    }

    pub fn train_binary(&self, y: &[f64], trees: u32) -> (Forest, Vec<f64>) {
        let p = (y.iter().sum::<f64>() / y.len() as f64).clamp(1e-6, 1.0 - 1e-6);
        let mut score = vec![(p / (1.0 - p)).ln(); y.len()];
        let mut forest = Vec::new();
        for _ in 0..trees {
            let g: Vec<Vec<f64>> = (0..y.len()).map(|i| vec![sigmoid(score[i]) - y[i]]).collect();
            let h: Vec<Vec<f64>> = (0..y.len())
                .map(|i| {
                    let p = sigmoid(score[i]);
                    vec![p * (1.0 - p)]
                })
                .collect();
            let tree = self.grow(&g, &h);
            for (i, s) in score.iter_mut().enumerate() {
                *s += self.leaf_of(&tree, i)[0];
            }
            forest.push((None, tree));
        }
        (forest, score)
    }

    /// Softmax boosting; one tree per class per epoch, or one multi-output
    /// tree per epoch when `multi_output`.
    pub fn train_multiclass(&self, y: &[f64], k: usize, epochs: u32, multi_output: bool) -> (Forest, Vec<Vec<f64>>) {
        let n = y.len();
        let prior: Vec<f64> = (0..k)
            .map(|c| (y.iter().filter(|&&v| v as usize == c).count() as f64 / n as f64).clamp(1e-6, 1.0 - 1e-6).ln())
            .collect();
        let mut score = vec![prior; n];
        let mut forest = Vec::new();
        for _ in 0..epochs {
            let mut g = vec![vec![0.0; k]; n];
            let mut h = vec![vec![0.0; k]; n];
            for i in 0..n {
                let max = score[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = score[i].iter().map(|s| (s - max).exp()).collect();
                let z: f64 = e.iter().sum();
                for c in 0..k {
                    let p = e[c] / z;
                    g[i][c] = p - if y[i] as usize == c { 1.0 } else { 0.0 };
                    h[i][c] = p * (1.0 - p);
                }
            }
            if multi_output {
                let tree = self.grow(&g, &h);
                for i in 0..n {
                    let w = self.leaf_of(&tree, i).to_vec();
                    for c in 0..k {
                        score[i][c] += w[c];
                    }
                }
                forest.push((None, tree));
            } else {
                for c in 0..k {
                    let gc: Vec<Vec<f64>> = g.iter().map(|r| vec![r[c]]).collect();
                    let hc: Vec<Vec<f64>> = h.iter().map(|r| vec![r[c]]).collect();
                    let tree = self.grow(&gc, &hc);
                    for i in 0..n {
                        score[i][c] += self.leaf_of(&tree, i)[0];
                    }
                    forest.push((Some(c as u32), tree));
                }
            }
        }
        (forest, score)
    }
}

/// The federated model in oracle shape: host splits resolved through the
/// host shards.
pub fn flatten(guest: &GuestModel, hosts: &[HostModel]) -> Forest {
    guest
        .trees
        .iter()
        .map(|t| {
            let nodes = t
                .nodes
                .iter()
                .map(|n| match &n.kind {
                    NodeKind::Leaf { weight } => Node::Leaf(weight.clone()),
                    NodeKind::Internal { rule, left, right, .. } => {
                        let (party, feature, bin) = match *rule {
                            SplitRule::Guest { feature, bin, .. } => (0, feature, bin),
                            SplitRule::Host { party, split_id } => {
                                let s = hosts[party as usize - 1].splits[&split_id];
                                (party, s.feature, s.bin)
                            }
                        };
                        Node::Split { party, feature, bin, left: *left, right: *right }
                    }
                })
                .collect();
            (t.output, nodes)
        })
        .collect()
}

/// First disagreement between two forests, if any: structure must match
/// exactly and leaf weights within `rel` relative error.
pub fn forest_mismatch(got: &Forest, want: &Forest, rel: f64) -> Option<String> {
    if got.len() != want.len() {
        return Some(format!("{} trees vs {}", got.len(), want.len()));
    }
    for (t, ((go, gn), (wo, wn))) in got.iter().zip(want).enumerate() {
        if go != wo || gn.len() != wn.len() {
            return Some(format!("tree {t}: output {go:?}/{wo:?}, {} nodes vs {}", gn.len(), wn.len()));
        }
        for (i, (a, b)) in gn.iter().zip(wn).enumerate() {
            match (a, b) {
                (Node::Leaf(x), Node::Leaf(y)) => {
                    for (u, v) in x.iter().zip(y) {
                        if (u - v).abs() > rel * v.abs().max(u.abs()) {
                            return Some(format!("tree {t} node {i}: weight {u} vs {v}"));
                        }
                    }
                }
                _ if a == b => {}
                _ => return Some(format!("tree {t} node {i}: {a:?} vs {b:?}")),
            }
        }
    }
    None
}

pub fn small_params(trees: u32, depth: u32) -> TrainParams {
    TrainParams { tree_num: trees, max_depth: depth, key_bits: 512, seed: 7, ..TrainParams::default() }
}
