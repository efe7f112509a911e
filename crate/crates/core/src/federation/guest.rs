//! Guest side of training: gradients, encryption, global split selection
//! and leaf weights.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::message::{EpochGh, IdHash, Message, MessageKind, NodeSplit, SessionStart};
use super::model::{GuestModel, MODEL_FORMAT_VERSION};
use super::params::{Objective, TrainParams};
use super::transport::{Endpoint, MessageStats, Rank, Transport, GUEST};
use super::wire::BitVec;
use crate::counters::{CountingSecret, OpCounters, OpCounts};
use crate::data::{hash_id, intersect_ids, quantile_bin, BinnedMatrix, PartyDataset};
use crate::encoding::{compress_capacity, decompress_package, CipherLayout, MultiClassLayout, PackState};
use crate::error::{bail, Result};
use crate::modes::{layer_parties, tree_hosts, Mode};
use crate::paillier::{keygen, KeyPair};
use crate::tree::{
    build_histograms, cross_entropy, goss_sample, informative_candidates, leaf_weight, logloss, logloss_grad_hess,
    mo_gain, mo_leaf_weight, softmax_grad_hess, split_gain, NodeKind, PlainOps, SplitRule, Tree, TreeNode, TreeRole,
    NO_SLOT,
};

/// Seconds since an arbitrary origin; the core crate has no clock.
pub type Clock<'a> = &'a dyn Fn() -> f64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeStats {
    pub epoch: u32,
    pub tree: u32,
    pub role: TreeRole,
    pub output: Option<u32>,
    pub sampled: u32,
    pub leaves: u32,
    pub depth: u32,
    pub guest_splits: u32,
    pub host_splits: u32,
    pub seconds: f64,
    pub messages_sent: u64,
    pub split_info_messages: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u32,
    /// Mean training loss after the epoch's trees.
    pub loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub trees: Vec<TreeStats>,
    pub epochs: Vec<EpochStats>,
}

#[derive(Debug, Clone)]
pub struct GuestOutcome {
    pub model: GuestModel,
    pub log: TrainingLog,
    pub ops: OpCounts,
    pub messages: MessageStats,
    /// Training instances after alignment, in model order.
    pub ids: Vec<String>,
    /// Raw training scores, row-major `n × outputs`.
    pub train_scores: Vec<f64>,
}

/// Run the guest through a whole training session with `n_hosts` hosts.
pub fn train_guest<T: Transport>(
    transport: T,
    data: &PartyDataset,
    n_hosts: u16,
    params: &TrainParams,
    clock: Option<Clock<'_>>,
) -> Result<GuestOutcome> {
    params.validate(n_hosts as usize)?;
    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    let keys = keygen(params.key_bits, &mut rng)?;
    let session_id = rng.next_u64();
    let mut guest = Guest {
        ep: Endpoint::new(transport, GUEST, Some(session_id)),
        params: params.clone(),
        n_hosts,
        keys,
        counters: OpCounters::default(),
        rng,
        clock,
    };
    match guest.train(data) {
        Ok(outcome) => Ok(outcome),
        Err(e) => {
            guest.ep.abort(1..=n_hosts, &e.to_string());
            Err(e)
        }
    }
}

struct Guest<'c, T> {
    ep: Endpoint<T>,
    params: TrainParams,
    n_hosts: u16,
    keys: KeyPair,
    counters: OpCounters,
    rng: ChaCha20Rng,
    clock: Option<Clock<'c>>,
}

/// Everything fixed for the duration of one tree.
struct TreeCtx<'a> {
    epoch: u32,
    role: TreeRole,
    /// Gradient columns this tree fits.
    width: usize,
    sampled: &'a [bool],
    /// Per row `[g.., h..]` after sampling weights; zeros for unsampled rows.
    values: &'a [Vec<f64>],
    /// Hosts holding this tree's encrypted gradients.
    hosts: Vec<Rank>,
    cipher: Option<CipherState>,
}

struct CipherState {
    layout: CipherLayout,
    state: PackState,
    capacity: u32,
}

#[derive(Debug, Clone)]
struct Frontier {
    id: u32,
    count: u32,
    sums: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Choice {
    gain: f64,
    rank: Rank,
    id: u64,
    left_count: u32,
    guest_split: Option<(u32, u8)>,
}

impl Choice {
    fn beats(&self, other: &Option<Choice>) -> bool {
        match other {
            None => true,
            Some(o) => self.gain > o.gain || (self.gain == o.gain && (self.rank, self.id) < (o.rank, o.id)),
        }
    }
}

fn node_gain(sums: &[f64], left_g: &[f64], left_h: &[f64], lambda: f64) -> f64 {
    let m = left_g.len();
    let (g, h) = sums.split_at(m);
    if m == 1 {
        return split_gain(left_g[0], left_h[0], g[0] - left_g[0], h[0] - left_h[0], g[0], h[0], lambda);
    }
    let rg: Vec<f64> = g.iter().zip(left_g).map(|(a, b)| a - b).collect();
    let rh: Vec<f64> = h.iter().zip(left_h).map(|(a, b)| a - b).collect();
    mo_gain((g, h), (left_g, left_h), (&rg, &rh), lambda)
}

/// Log-odds of the positive rate, or log class frequencies.
pub fn init_score(labels: &[f64], objective: Objective) -> Vec<f64> {
    let n = labels.len().max(1) as f64;
    let clamp = |p: f64| p.clamp(1e-6, 1.0 - 1e-6);
    match objective {
        Objective::Binary => {
            let p = clamp(labels.iter().sum::<f64>() / n);
            vec![libm::log(p / (1.0 - p))]
        }
        Objective::Multiclass { classes } => (0..classes as usize)
            .map(|c| libm::log(clamp(labels.iter().filter(|&&y| y as usize == c).count() as f64 / n)))
            .collect(),
    }
}

impl<T: Transport> Guest<'_, T> {
    fn now(&self) -> f64 {
        self.clock.map_or(0.0, |c| c())
    }

    fn hosts(&self) -> impl Iterator<Item = Rank> {
        1..=self.n_hosts
    }

    fn align(&mut self, data: &PartyDataset) -> Result<PartyDataset> {
        if self.n_hosts == 0 {
            return Ok(data.clone());
        }
        let mut salt = vec![0u8; 16];
        self.rng.fill_bytes(&mut salt);
        let start = Message::SessionStart(SessionStart {
            modulus: self.keys.public.n().clone(),
            max_bins: self.params.max_bins,
            id_salt: salt.clone(),
            hist_subtraction: self.params.cipher.hist_subtraction,
            compression: self.params.cipher.compression,
        });
        for k in self.hosts() {
            self.ep.send(k, 0, 0, &start)?;
        }
        let own: Vec<IdHash> = data.ids.iter().map(|id| hash_id(&salt, id)).collect();
        let mut lists = vec![own.clone()];
        for k in self.hosts() {
            match self.ep.expect(k, MessageKind::IdHashes, 0, 0)? {
                Message::IdHashes(h) => lists.push(h),
                _ => unreachable!("kind checked"),
            }
        }
        let refs: Vec<&[IdHash]> = lists.iter().map(Vec::as_slice).collect();
        let common = intersect_ids(&refs)?;
        for k in self.hosts() {
            self.ep.send(k, 0, 0, &Message::AlignedIds(common.clone()))?;
        }
        let by_hash: BTreeMap<&IdHash, &String> = own.iter().zip(&data.ids).collect();
        let ids: Vec<String> = common.iter().map(|h| by_hash[h].clone()).collect();
        log::info!("aligned {} of {} guest instances", ids.len(), data.n_rows());
        data.align_to(&ids)
    }

    fn train(&mut self, data: &PartyDataset) -> Result<GuestOutcome> {
        let Some(labels) = data.labels.as_ref() else {
            bail!(Dataset, "guest data must carry labels");
        };
        let objective = match self.params.objective {
            Some(o) => {
                o.check_labels(labels)?;
                o
            }
            None => Objective::infer(labels)?,
        };
        let data = self.align(data)?;
        let labels = data.labels.clone().expect("aligned guest data keeps labels");
        let binned = quantile_bin(&data.features, self.params.max_bins as usize)?;
        let n = data.n_rows();
        let k = objective.outputs();
        let init = init_score(&labels, objective);
        let mut scores: Vec<f64> = (0..n).flat_map(|_| init.iter().copied()).collect();
        let class_labels: Vec<usize> = labels.iter().map(|&y| y as usize).collect();
        let mut trees = Vec::new();
        let mut log = TrainingLog::default();

        for epoch in 0..self.params.tree_num {
            let epoch_start = self.now();
            let (g, h) = match objective {
                Objective::Binary => {
                    let gh = logloss_grad_hess(&labels, &scores);
                    (gh.iter().map(|x| x.g).collect::<Vec<_>>(), gh.iter().map(|x| x.h).collect::<Vec<_>>())
                }
                Objective::Multiclass { .. } => softmax_grad_hess(&class_labels, &scores, k),
            };
            let role = self.params.mode.tree_role(epoch, self.n_hosts as usize + 1);
            let groups: Vec<(Option<u32>, Vec<usize>)> = if k > 1 && self.params.mode != Mode::MultiOutput {
                (0..k).map(|c| (Some(c as u32), vec![c])).collect()
            } else {
                vec![(None, (0..k).collect())]
            };
            for (t, (output, cols)) in groups.into_iter().enumerate() {
                let start = self.now();
                let sent_before = self.ep.stats().total_sent().messages;
                let split_infos_before = self.ep.stats().received_of(MessageKind::SplitInfoPackages).messages;
                let sample = self.sample(&g, k, &cols)?;
                let mut sampled = vec![false; n];
                let mut values = vec![vec![0.0; 2 * cols.len()]; n];
                for &(row, w) in &sample {
                    sampled[row] = true;
                    for (j, &c) in cols.iter().enumerate() {
                        values[row][j] = g[row * k + c] * w;
                        values[row][cols.len() + j] = h[row * k + c] * w;
                    }
                }
                let (tree, leaf_of) =
                    self.grow_tree(epoch, t as u32, role, output, cols.len(), &binned, &sampled, &values)?;
                for row in 0..n {
                    if let NodeKind::Leaf { weight } = &tree.nodes[leaf_of[row] as usize].kind {
                        for (j, &c) in cols.iter().enumerate() {
                            scores[row * k + c] += weight[j];
                        }
                    }
                }
                let (mut guest_splits, mut host_splits) = (0, 0);
                for node in &tree.nodes {
                    match node.kind {
                        NodeKind::Internal { rule: SplitRule::Guest { .. }, .. } => guest_splits += 1,
                        NodeKind::Internal { rule: SplitRule::Host { .. }, .. } => host_splits += 1,
                        _ => {}
                    }
                }
                log.trees.push(TreeStats {
                    epoch,
                    tree: t as u32,
                    role,
                    output,
                    sampled: sample.len() as u32,
                    leaves: tree.n_leaves() as u32,
                    depth: tree.depth(),
                    guest_splits,
                    host_splits,
                    seconds: self.now() - start,
                    messages_sent: self.ep.stats().total_sent().messages - sent_before,
                    split_info_messages: self.ep.stats().received_of(MessageKind::SplitInfoPackages).messages
                        - split_infos_before,
                });
                trees.push(tree);
            }
            let loss = match objective {
                Objective::Binary => logloss(&labels, &scores),
                Objective::Multiclass { .. } => cross_entropy(&class_labels, &scores, k),
            };
            log::debug!("epoch {epoch}: loss {loss:.6}");
            log.epochs.push(EpochStats { epoch, loss, seconds: self.now() - epoch_start });
        }
        for host in self.hosts() {
            self.ep.send(host, self.params.tree_num, 0, &Message::Finish)?;
        }
        let model = GuestModel {
            format_version: MODEL_FORMAT_VERSION,
            objective,
            n_hosts: self.n_hosts,
            init_score: init,
            feature_names: data.feature_names.clone(),
            binning: binned.binning().clone(),
            trees,
            params: self.params.clone(),
        };
        Ok(GuestOutcome {
            model,
            log,
            ops: self.counters.snapshot(),
            messages: self.ep.stats().clone(),
            ids: data.ids.clone(),
            train_scores: scores,
        })
    }

    /// (row, weight) pairs of the instances used by one tree, ascending.
    fn sample(&mut self, g: &[f64], k: usize, cols: &[usize]) -> Result<Vec<(usize, f64)>> {
        let n = g.len() / k;
        let Some(goss) = self.params.goss else {
            return Ok((0..n).map(|r| (r, 1.0)).collect());
        };
        // L2 norm over the tree's gradient columns (plain |g| for one column)
        let mags: Vec<f64> = (0..n)
            .map(|r| libm::sqrt(cols.iter().map(|&c| g[r * k + c] * g[r * k + c]).sum::<f64>()))
            .collect();
        let s = goss_sample(&mags, goss.top_rate, goss.other_rate, &mut self.rng)?;
        Ok(s.indices.into_iter().zip(s.weights).collect())
    }

    fn send_epoch_gh(&mut self, epoch: u32, tree: u32, ctx: &mut TreeCtx<'_>) -> Result<()> {
        let iota = self.keys.public.max_plaintext_bits();
        let m = ctx.width;
        let rows: Vec<usize> = (0..ctx.sampled.len()).filter(|&r| ctx.sampled[r]).collect();
        let gs: Vec<f64> = rows.iter().flat_map(|&r| ctx.values[r][..m].iter().copied()).collect();
        let hs: Vec<f64> = rows.iter().flat_map(|&r| ctx.values[r][m..].iter().copied()).collect();
        let state = PackState::compute(&gs, &hs, rows.len() as u64, self.params.precision, iota)?;
        let layout = if self.params.mode == Mode::MultiOutput {
            CipherLayout::MultiClass(MultiClassLayout::new(m, iota, state.gh_bits)?)
        } else if self.params.cipher.gh_packing {
            CipherLayout::Packed
        } else {
            CipherLayout::Separate
        };
        let capacity = if self.params.cipher.compression && layout == CipherLayout::Packed {
            compress_capacity(iota, state.gh_bits)? as u32
        } else {
            1
        };
        let secret = CountingSecret::new(&self.keys.secret, &self.counters);
        let mut ciphers = Vec::with_capacity(rows.len() * layout.width());
        for &r in &rows {
            for plain in layout.encode(&ctx.values[r][..m], &ctx.values[r][m..], &state)? {
                ciphers.push(secret.encrypt(&plain, &mut self.rng)?);
            }
        }
        let msg = Message::EpochGh(EpochGh {
            tree,
            layout: layout.clone(),
            state: state.clone(),
            capacity,
            sampled: BitVec::from_fn(ctx.sampled.len(), |r| ctx.sampled[r]),
            ciphers,
        });
        for &host in &ctx.hosts {
            self.ep.send(host, epoch, 0, &msg)?;
        }
        ctx.cipher = Some(CipherState { layout, state, capacity });
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn grow_tree(
        &mut self,
        epoch: u32,
        tree_index: u32,
        role: TreeRole,
        output: Option<u32>,
        width: usize,
        binned: &BinnedMatrix,
        sampled: &[bool],
        values: &[Vec<f64>],
    ) -> Result<(Tree, Vec<u32>)> {
        let n = sampled.len();
        let hosts: Vec<Rank> = match tree_hosts(role) {
            None => Vec::new(),
            Some(set) => self.hosts().filter(|&h| set.contains(h)).collect(),
        };
        let mut ctx = TreeCtx { epoch, role, width, sampled, values, hosts, cipher: None };
        if !ctx.hosts.is_empty() {
            self.send_epoch_gh(epoch, tree_index, &mut ctx)?;
        }
        let lambda = self.params.lambda;
        let mut node_of = vec![0u32; n];
        let mut root_sums = vec![0.0; 2 * width];
        for r in (0..n).filter(|&r| sampled[r]) {
            for (s, v) in root_sums.iter_mut().zip(&values[r]) {
                *s += v;
            }
        }
        let root_count = sampled.iter().filter(|&&s| s).count() as u32;
        let mut kinds: Vec<Option<NodeKind>> = vec![None];
        let mut meta: Vec<(u32, u32, Vec<f64>)> = vec![(0, root_count, root_sums.clone())];
        let mut frontier = vec![Frontier { id: 0, count: root_count, sums: root_sums }];
        let min_samples = self.params.min_samples.max(2);

        for depth in 0..self.params.max_depth {
            let splittable: Vec<Frontier> = frontier.drain(..).filter(|f| f.count >= min_samples).collect();
            if splittable.is_empty() {
                break;
            }
            let parties = layer_parties(role, depth);
            let layer_hosts: Vec<Rank> = match parties.hosts {
                Some(set) => ctx.hosts.iter().copied().filter(|&h| set.contains(h)).collect(),
                None => Vec::new(),
            };
            let mut best: Vec<Option<Choice>> = vec![None; splittable.len()];
            if parties.guest {
                self.guest_candidates(&ctx, binned, &splittable, &node_of, &mut best)?;
            }
            if !layer_hosts.is_empty() {
                self.host_candidates(&ctx, depth, &layer_hosts, &splittable, &mut best)?;
            }
            for b in best.iter_mut() {
                if b.as_ref().is_some_and(|c| !(c.gain > self.params.min_gain)) {
                    *b = None;
                }
            }
            let host_bits = self.collect_host_assignments(&ctx, depth, &layer_hosts, &splittable, &best)?;

            let mut assignments = Vec::new();
            for (i, node) in splittable.iter().enumerate() {
                let Some(choice) = &best[i] else { continue };
                let left_bits = match choice.guest_split {
                    Some((f, bin)) => BitVec::from_fn(n, |r| {
                        node_of[r] == node.id && binned.bin(r, f as usize) <= bin
                    }),
                    None => host_bits[&node.id].clone(),
                };
                let (left, right) = (kinds.len() as u32, kinds.len() as u32 + 1);
                let mut sums = [vec![0.0; 2 * width], vec![0.0; 2 * width]];
                let mut counts = [0u32; 2];
                for r in 0..n {
                    if node_of[r] != node.id {
                        if left_bits.get(r) {
                            bail!(Protocol, "assignment for node {} includes an instance outside it", node.id);
                        }
                        continue;
                    }
                    let side = if left_bits.get(r) { 0 } else { 1 };
                    node_of[r] = [left, right][side];
                    if sampled[r] {
                        counts[side] += 1;
                        for (s, v) in sums[side].iter_mut().zip(&values[r]) {
                            *s += v;
                        }
                    }
                }
                if counts[0] != choice.left_count {
                    bail!(
                        Protocol,
                        "split of node {} sends {} sampled instances left, candidate declared {}",
                        node.id,
                        counts[0],
                        choice.left_count
                    );
                }
                let rule = match choice.guest_split {
                    Some((feature, bin)) => SplitRule::Guest {
                        feature,
                        bin,
                        threshold: binned.binning().threshold(feature as usize, bin),
                    },
                    None => SplitRule::Host { party: choice.rank, split_id: choice.id },
                };
                kinds[node.id as usize] = Some(NodeKind::Internal { rule, left, right, gain: choice.gain });
                let [ls, rs] = sums;
                for (id, count, s) in [(left, counts[0], ls), (right, counts[1], rs)] {
                    kinds.push(None);
                    meta.push((depth + 1, count, s.clone()));
                    frontier.push(Frontier { id, count, sums: s });
                }
                assignments.push(NodeSplit { node: node.id, left, right, left_bits });
            }
            // hosts only need memberships if they work on a later layer
            let next = depth + 1;
            if next < self.params.max_depth && !assignments.is_empty() {
                if let Some(set) = layer_parties(role, next).hosts {
                    let msg = Message::NodeAssignments(assignments);
                    for &h in ctx.hosts.iter().filter(|&&h| set.contains(h)) {
                        self.ep.send(h, epoch, depth, &msg)?;
                    }
                }
            }
        }

        let lr = self.params.learning_rate;
        let nodes = kinds
            .into_iter()
            .zip(meta)
            .enumerate()
            .map(|(id, (kind, (depth, count, sums)))| {
                let kind = kind.unwrap_or_else(|| {
                    let (g, h) = sums.split_at(width);
                    let weight = if width == 1 {
                        vec![leaf_weight(g[0], h[0], lambda) * lr]
                    } else {
                        mo_leaf_weight(g, h, lambda).into_iter().map(|w| w * lr).collect()
                    };
                    NodeKind::Leaf { weight }
                });
                TreeNode { id: id as u32, depth, sample_count: count, kind }
            })
            .collect();
        let tree = Tree { nodes, role: ctx.role, output };
        Ok((tree, node_of))
    }

    fn guest_candidates(
        &mut self,
        ctx: &TreeCtx<'_>,
        binned: &BinnedMatrix,
        nodes: &[Frontier],
        node_of: &[u32],
        best: &mut [Option<Choice>],
    ) -> Result<()> {
        let slot: BTreeMap<u32, u32> = nodes.iter().enumerate().map(|(i, f)| (f.id, i as u32)).collect();
        let slot_of: Vec<u32> = (0..node_of.len())
            .map(|r| if ctx.sampled[r] { slot.get(&node_of[r]).copied().unwrap_or(NO_SLOT) } else { NO_SLOT })
            .collect();
        let ids: Vec<u32> = nodes.iter().map(|f| f.id).collect();
        let ops = PlainOps { outputs: ctx.width };
        let hists = build_histograms(&ops, binned, &slot_of, &ids, ctx.values)?;
        for (i, hist) in hists.iter().enumerate() {
            for (idx, c) in informative_candidates(&ops, hist)?.into_iter().enumerate() {
                let (lg, lh) = c.left.split_at(ctx.width);
                let choice = Choice {
                    gain: node_gain(&nodes[i].sums, lg, lh, self.params.lambda),
                    rank: GUEST,
                    id: idx as u64,
                    left_count: c.left_count,
                    guest_split: Some((c.feature, c.bin)),
                };
                if choice.beats(&best[i]) {
                    best[i] = Some(choice);
                }
            }
        }
        Ok(())
    }

    fn host_candidates(
        &mut self,
        ctx: &TreeCtx<'_>,
        depth: u32,
        hosts: &[Rank],
        nodes: &[Frontier],
        best: &mut [Option<Choice>],
    ) -> Result<()> {
        let cipher = ctx.cipher.as_ref().expect("hosts hold encrypted gradients");
        let batch: Vec<u32> = nodes.iter().map(|f| f.id).collect();
        for &h in hosts {
            self.ep.send(h, ctx.epoch, depth, &Message::NodeBatch(batch.clone()))?;
        }
        let secret = CountingSecret::new(&self.keys.secret, &self.counters);
        for &h in hosts {
            let Message::SplitInfoPackages(per_node) =
                self.ep.expect(h, MessageKind::SplitInfoPackages, ctx.epoch, depth)?
            else {
                unreachable!("kind checked")
            };
            if per_node.iter().map(|p| p.node).ne(batch.iter().copied()) {
                bail!(Protocol, "host {h} answered for a different node batch");
            }
            for (i, np) in per_node.iter().enumerate() {
                let total = nodes[i].count;
                for package in &np.packages {
                    let recovered: Vec<(u64, u32, Vec<f64>, Vec<f64>)> =
                        if cipher.layout == CipherLayout::Packed && package.ciphers.len() == 1 {
                            if package.entries.is_empty() || package.entries.len() > cipher.capacity as usize {
                                bail!(Protocol, "package with {} entries exceeds capacity", package.entries.len());
                            }
                            let plain = secret.decrypt(&package.ciphers[0])?;
                            decompress_package(&plain, &package.entries, &cipher.state)?
                                .into_iter()
                                .map(|s| (s.id, s.sample_count, vec![s.g], vec![s.h]))
                                .collect()
                        } else {
                            if package.ciphers.len() != cipher.layout.width() || package.entries.len() != 1 {
                                bail!(Protocol, "malformed uncompressed split-info from host {h}");
                            }
                            let plains =
                                package.ciphers.iter().map(|c| secret.decrypt(c)).collect::<Result<Vec<_>>>()?;
                            let meta = package.entries[0];
                            let (g, hh) = cipher.layout.decode(&plains, &cipher.state, meta.sample_count as u64)?;
                            vec![(meta.id, meta.sample_count, g, hh)]
                        };
                    for (id, count, lg, lh) in recovered {
                        if count == 0 || count >= total {
                            bail!(Protocol, "host {h} sent a degenerate candidate for node {}", np.node);
                        }
                        let choice = Choice {
                            gain: node_gain(&nodes[i].sums, &lg, &lh, self.params.lambda),
                            rank: h,
                            id,
                            left_count: count,
                            guest_split: None,
                        };
                        if choice.beats(&best[i]) {
                            best[i] = Some(choice);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Tell each host which of its candidates won and collect the resulting
    /// left memberships, keyed by node.
    fn collect_host_assignments(
        &mut self,
        ctx: &TreeCtx<'_>,
        depth: u32,
        hosts: &[Rank],
        nodes: &[Frontier],
        best: &[Option<Choice>],
    ) -> Result<BTreeMap<u32, BitVec>> {
        let mut bits = BTreeMap::new();
        for &h in hosts {
            let picks: Vec<(u32, u64)> = nodes
                .iter()
                .zip(best)
                .filter_map(|(f, c)| c.as_ref().filter(|c| c.guest_split.is_none() && c.rank == h).map(|c| (f.id, c.id)))
                .collect();
            self.ep.send(h, ctx.epoch, depth, &Message::BestSplitIds(picks))?;
        }
        for &h in hosts {
            let Message::HostAssignments(a) = self.ep.expect(h, MessageKind::HostAssignments, ctx.epoch, depth)?
            else {
                unreachable!("kind checked")
            };
            for (node, b) in a {
                let owned = nodes
                    .iter()
                    .zip(best)
                    .any(|(f, c)| f.id == node && c.as_ref().is_some_and(|c| c.guest_split.is_none() && c.rank == h));
                if !owned || b.len() != ctx.sampled.len() || bits.insert(node, b).is_some() {
                    bail!(Protocol, "unexpected assignment for node {node} from host {h}");
                }
            }
        }
        let expected = best.iter().flatten().filter(|c| c.guest_split.is_none()).count();
        if bits.len() != expected {
            bail!(Protocol, "missing host assignments: got {}, expected {expected}", bits.len());
        }
        Ok(bits)
    }
}
