//! Host side of training: encrypted histograms, anonymous split-infos and
//! left-assignments for the splits it wins.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::message::{EpochGh, IdHash, Message, NodePackages, NodeSplit, SessionStart, WirePackage};
use super::model::{HostModel, HostSplit, MODEL_FORMAT_VERSION};
use super::transport::{Endpoint, MessageStats, Rank, Transport, GUEST};
use super::wire::BitVec;
use crate::counters::{CountingKey, OpCounters, OpCounts};
use crate::data::{hash_id, quantile_bin, BinnedMatrix, PartyDataset};
use crate::encoding::{compress_split_infos, CipherLayout, SplitMeta};
use crate::error::{bail, Result};
use crate::paillier::{Ciphertext, PublicKey};
use crate::tree::{build_histograms, histogram_subtract, informative_candidates, CipherOps, Histogram, NO_SLOT};

#[derive(Debug, Clone)]
pub struct HostOutcome {
    pub model: HostModel,
    pub ops: OpCounts,
    pub messages: MessageStats,
    /// Aligned instance ids, in the guest's order.
    pub ids: Vec<String>,
}

/// Serve one training session as host `rank` until the guest finishes.
pub fn run_host<T: Transport>(transport: T, rank: Rank, data: &PartyDataset, seed: u64) -> Result<HostOutcome> {
    if rank == GUEST {
        bail!(Config, "host rank must be at least 1");
    }
    let mut host = Host {
        ep: Endpoint::new(transport, rank, None),
        rank,
        counters: OpCounters::default(),
        rng: ChaCha20Rng::seed_from_u64(seed ^ (u64::from(rank) << 48)),
    };
    match host.serve(data) {
        Ok(o) => Ok(o),
        Err(e) => {
            // an abort from the guest needs no reply
            if !matches!(e, crate::Error::Protocol(ref m) if m.starts_with(&alloc::format!("party {GUEST} aborted"))) {
                host.ep.abort([GUEST], &e.to_string());
            }
            Err(e)
        }
    }
}

struct Host<T> {
    ep: Endpoint<T>,
    rank: Rank,
    counters: OpCounters,
    rng: ChaCha20Rng,
}

/// Per-tree state.
struct TreeState {
    layout: CipherLayout,
    gh_bits: u64,
    capacity: usize,
    sampled: BitVec,
    /// Ciphertexts per row; empty for unsampled rows.
    values: Vec<Vec<Ciphertext>>,
    node_of: Vec<u32>,
    /// child -> (parent, sibling, is_left) from the last assignments.
    family: BTreeMap<u32, (u32, u32, bool)>,
    cache: BTreeMap<u32, Histogram<Vec<Ciphertext>>>,
    /// Split ids offered this layer -> (node, feature, bin).
    offered: BTreeMap<u64, (u32, u32, u8)>,
}

impl<T: Transport> Host<T> {
    fn serve(&mut self, data: &PartyDataset) -> Result<HostOutcome> {
        if data.is_guest() {
            bail!(Dataset, "host data must not carry labels");
        }
        let Message::SessionStart(start) = self.ep.expect(GUEST, super::MessageKind::SessionStart, 0, 0)? else {
            unreachable!("kind checked")
        };
        let SessionStart { modulus, max_bins, id_salt, hist_subtraction, .. } = start;
        let pk = PublicKey::from_modulus(modulus)?;
        let own: Vec<IdHash> = data.ids.iter().map(|id| hash_id(&id_salt, id)).collect();
        self.ep.send(GUEST, 0, 0, &Message::IdHashes(own.clone()))?;
        let Message::AlignedIds(common) = self.ep.expect(GUEST, super::MessageKind::AlignedIds, 0, 0)? else {
            unreachable!("kind checked")
        };
        let by_hash: BTreeMap<&IdHash, &String> = own.iter().zip(&data.ids).collect();
        let ids = common
            .iter()
            .map(|h| by_hash.get(h).map(|s| (*s).clone()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| crate::Error::Protocol("aligned id unknown to this host".into()))?;
        let data = data.align_to(&ids)?;
        let binned = quantile_bin(&data.features, max_bins as usize)?;
        log::info!("host {}: {} aligned instances, {} features", self.rank, ids.len(), binned.n_features());

        let mut splits = BTreeMap::new();
        let mut tree: Option<TreeState> = None;
        loop {
            let (header, msg) = self.ep.recv(GUEST)?;
            let (epoch, layer) = (header.epoch, header.layer);
            match msg {
                Message::EpochGh(gh) => tree = Some(self.start_tree(&pk, gh, binned.n_rows())?),
                Message::NodeBatch(nodes) => {
                    let t = tree.as_mut().ok_or_else(|| no_tree("NodeBatch"))?;
                    let reply = self.split_infos(&pk, t, &binned, &nodes, hist_subtraction)?;
                    self.ep.send(GUEST, epoch, layer, &Message::SplitInfoPackages(reply))?;
                }
                Message::BestSplitIds(picks) => {
                    let t = tree.as_mut().ok_or_else(|| no_tree("BestSplitIds"))?;
                    let mut out = Vec::with_capacity(picks.len());
                    for (node, id) in picks {
                        let Some(&(owner, feature, bin)) = t.offered.get(&id) else {
                            bail!(Protocol, "split id {id} was not offered");
                        };
                        if owner != node {
                            bail!(Protocol, "split id {id} belongs to node {owner}, not {node}");
                        }
                        splits.insert(
                            id,
                            HostSplit { feature, bin, threshold: binned.binning().threshold(feature as usize, bin) },
                        );
                        let bits = BitVec::from_fn(binned.n_rows(), |r| {
                            t.node_of[r] == node && binned.bin(r, feature as usize) <= bin
                        });
                        out.push((node, bits));
                    }
                    t.offered.clear();
                    self.ep.send(GUEST, epoch, layer, &Message::HostAssignments(out))?;
                }
                Message::NodeAssignments(a) => {
                    let t = tree.as_mut().ok_or_else(|| no_tree("NodeAssignments"))?;
                    apply_assignments(t, &a)?;
                }
                Message::Finish => break,
                other => bail!(Protocol, "unexpected {:?} during training", other.kind()),
            }
        }
        let model = HostModel {
            format_version: MODEL_FORMAT_VERSION,
            party: self.rank,
            feature_names: data.feature_names.clone(),
            binning: binned.binning().clone(),
            splits,
        };
        Ok(HostOutcome { model, ops: self.counters.snapshot(), messages: self.ep.stats().clone(), ids })
    }

    fn start_tree(&mut self, pk: &PublicKey, gh: EpochGh, n: usize) -> Result<TreeState> {
        let EpochGh { layout, state, capacity, sampled, ciphers, .. } = gh;
        if sampled.len() != n {
            bail!(Protocol, "sample mask covers {} instances, expected {n}", sampled.len());
        }
        let width = layout.width();
        if ciphers.len() != sampled.count_ones() * width {
            bail!(Protocol, "{} ciphertexts for {} sampled instances", ciphers.len(), sampled.count_ones());
        }
        if capacity == 0 || (capacity > 1 && layout != CipherLayout::Packed) {
            bail!(Protocol, "invalid compression capacity {capacity}");
        }
        for c in &ciphers {
            c.validate(pk)?;
        }
        let mut values = vec![Vec::new(); n];
        let mut it = ciphers.into_iter();
        for r in sampled.ones() {
            values[r] = it.by_ref().take(width).collect();
        }
        Ok(TreeState {
            layout,
            gh_bits: state.gh_bits,
            capacity: capacity as usize,
            sampled,
            values,
            node_of: vec![0; n],
            family: BTreeMap::new(),
            cache: BTreeMap::new(),
            offered: BTreeMap::new(),
        })
    }

    fn histograms(
        &self,
        ops: &CipherOps<'_>,
        t: &TreeState,
        binned: &BinnedMatrix,
        nodes: &[u32],
        subtraction: bool,
    ) -> Result<Vec<Histogram<Vec<Ciphertext>>>> {
        let sampled_count = |id: u32| (0..t.node_of.len()).filter(|&r| t.node_of[r] == id && t.sampled.get(r)).count();
        let in_batch: BTreeSet<u32> = nodes.iter().copied().collect();
        // nodes derived by subtraction: (node, parent, built sibling)
        let mut derived: BTreeMap<u32, (u32, u32)> = BTreeMap::new();
        if subtraction {
            for &id in nodes {
                let Some(&(parent, sibling, is_left)) = t.family.get(&id) else { continue };
                if !t.cache.contains_key(&parent) || !in_batch.contains(&sibling) || derived.contains_key(&sibling) {
                    continue;
                }
                let (mine, theirs) = (sampled_count(id), sampled_count(sibling));
                // build the smaller child; ties build the left one
                let build_me = mine < theirs || (mine == theirs && is_left);
                if !build_me {
                    derived.insert(id, (parent, sibling));
                }
            }
        }
        let direct: Vec<u32> = nodes.iter().copied().filter(|id| !derived.contains_key(id)).collect();
        let slot: BTreeMap<u32, u32> = direct.iter().enumerate().map(|(i, &id)| (id, i as u32)).collect();
        let slot_of: Vec<u32> = (0..t.node_of.len())
            .map(|r| if t.sampled.get(r) { slot.get(&t.node_of[r]).copied().unwrap_or(NO_SLOT) } else { NO_SLOT })
            .collect();
        let built = build_histograms(ops, binned, &slot_of, &direct, &t.values)?;
        let mut by_id: BTreeMap<u32, Histogram<Vec<Ciphertext>>> = built.into_iter().map(|h| (h.node_id, h)).collect();
        for (&id, &(parent, sibling)) in &derived {
            let h = histogram_subtract(ops, &t.cache[&parent], &by_id[&sibling], id)?;
            by_id.insert(id, h);
        }
        Ok(nodes.iter().map(|id| by_id.remove(id).expect("every batch node built")).collect())
    }

    fn split_infos(
        &mut self,
        pk: &PublicKey,
        t: &mut TreeState,
        binned: &BinnedMatrix,
        nodes: &[u32],
        subtraction: bool,
    ) -> Result<Vec<NodePackages>> {
        let ops = CipherOps { key: CountingKey::new(pk, &self.counters), width: t.layout.width() };
        let hists = self.histograms(&ops, t, binned, nodes, subtraction)?;
        let mut out = Vec::with_capacity(nodes.len());
        for hist in &hists {
            let mut infos: Vec<(Vec<Ciphertext>, SplitMeta)> = Vec::new();
            for c in informative_candidates(&ops, hist)? {
                let id = loop {
                    let id = self.rng.gen::<u64>();
                    if !t.offered.contains_key(&id) {
                        break id;
                    }
                };
                t.offered.insert(id, (hist.node_id, c.feature, c.bin));
                infos.push((c.left, SplitMeta { id, sample_count: c.left_count }));
            }
            // hide the (feature, bin) order from the guest
            infos.shuffle(&mut self.rng);
            let packages = if t.capacity > 1 {
                let single: Vec<(Ciphertext, SplitMeta)> =
                    infos.into_iter().map(|(mut c, m)| (c.swap_remove(0), m)).collect();
                compress_split_infos(&single, t.capacity, t.gh_bits, ops.key)?
                    .into_iter()
                    .map(|p| {
                        Ok(WirePackage { ciphers: vec![ops.key.obfuscate(&p.cipher, &mut self.rng)?], entries: p.entries })
                    })
                    .collect::<Result<Vec<_>>>()?
            } else {
                infos
                    .into_iter()
                    .map(|(cs, m)| {
                        let ciphers =
                            cs.iter().map(|c| ops.key.obfuscate(c, &mut self.rng)).collect::<Result<Vec<_>>>()?;
                        Ok(WirePackage { ciphers, entries: vec![m] })
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            out.push(NodePackages { node: hist.node_id, packages });
        }
        t.cache = hists.into_iter().map(|h| (h.node_id, h)).collect();
        Ok(out)
    }
}

fn no_tree(kind: &str) -> crate::Error {
    crate::Error::Protocol(alloc::format!("{kind} before any EpochGh"))
}

fn apply_assignments(t: &mut TreeState, splits: &[NodeSplit]) -> Result<()> {
    t.family.clear();
    let n = t.node_of.len();
    for s in splits {
        if s.left_bits.len() != n {
            bail!(Protocol, "assignment for node {} covers {} instances", s.node, s.left_bits.len());
        }
        for r in 0..n {
            if t.node_of[r] == s.node {
                t.node_of[r] = if s.left_bits.get(r) { s.left } else { s.right };
            } else if s.left_bits.get(r) {
                bail!(Protocol, "assignment for node {} includes an instance outside it", s.node);
            }
        }
        t.family.insert(s.left, (s.node, s.right, true));
        t.family.insert(s.right, (s.node, s.left, false));
    }
    Ok(())
}
