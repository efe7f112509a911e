//! Federated inference. Hosts evaluate their own split thresholds and
//! return one left-bit vector per split; the guest walks the trees.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::message::{IdHash, Message, MessageKind};
use super::model::{GuestModel, HostModel};
use super::transport::{Endpoint, MessageStats, Rank, Transport, GUEST};
use super::wire::BitVec;
use crate::data::{hash_id, intersect_ids, PartyDataset};
use crate::error::{bail, Result};
use crate::tree::SplitRule;

#[derive(Debug, Clone)]
pub struct Prediction {
    /// Instances scored, in the guest's order.
    pub ids: Vec<String>,
    /// Raw margins, row-major `n × outputs`.
    pub raw: Vec<f64>,
    pub outputs: usize,
    pub messages: MessageStats,
}

impl Prediction {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.raw[i * self.outputs..(i + 1) * self.outputs]
    }
}

fn check_columns(names: &[String], data: &PartyDataset) -> Result<()> {
    if names.len() != data.features.n_cols() {
        bail!(Dataset, "model expects {} features, data has {}", names.len(), data.features.n_cols());
    }
    Ok(())
}

/// Score `data` with a guest model, consulting `n_hosts` hosts.
pub fn predict_guest<T: Transport>(
    transport: T,
    model: &GuestModel,
    data: &PartyDataset,
    seed: u64,
) -> Result<Prediction> {
    model.validate()?;
    check_columns(&model.feature_names, data)?;
    let n_hosts = model.n_hosts;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut ep = Endpoint::new(transport, GUEST, Some(rng.next_u64()));
    let run = |ep: &mut Endpoint<T>, rng: &mut ChaCha20Rng| -> Result<(PartyDataset, BTreeMap<(Rank, u64), BitVec>)> {
        if n_hosts == 0 {
            return Ok((data.clone(), BTreeMap::new()));
        }
        let mut salt = vec![0u8; 16];
        rng.fill_bytes(&mut salt);
        for h in 1..=n_hosts {
            ep.send(h, 0, 0, &Message::PredictRequest { id_salt: salt.clone() })?;
        }
        let own: Vec<IdHash> = data.ids.iter().map(|id| hash_id(&salt, id)).collect();
        let mut lists = vec![own.clone()];
        for h in 1..=n_hosts {
            let Message::IdHashes(l) = ep.expect(h, MessageKind::IdHashes, 0, 0)? else { unreachable!("kind checked") };
            lists.push(l);
        }
        let refs: Vec<&[IdHash]> = lists.iter().map(Vec::as_slice).collect();
        let common = intersect_ids(&refs)?;
        for h in 1..=n_hosts {
            ep.send(h, 0, 0, &Message::AlignedIds(common.clone()))?;
        }
        let by_hash: BTreeMap<&IdHash, &String> = own.iter().zip(&data.ids).collect();
        let ids: Vec<String> = common.iter().map(|h| by_hash[h].clone()).collect();
        let mut bits = BTreeMap::new();
        for h in 1..=n_hosts {
            let Message::PredictResponse(r) = ep.expect(h, MessageKind::PredictResponse, 0, 0)? else {
                unreachable!("kind checked")
            };
            for (id, b) in r {
                if b.len() != ids.len() {
                    bail!(Protocol, "host {h} answered split {id} for {} instances", b.len());
                }
                bits.insert((h, id), b);
            }
        }
        for h in 1..=n_hosts {
            ep.send(h, 0, 0, &Message::Finish)?;
        }
        Ok((data.align_to(&ids)?, bits))
    };
    let (aligned, bits) = match run(&mut ep, &mut rng) {
        Ok(v) => v,
        Err(e) => {
            ep.abort(1..=n_hosts, &e.to_string());
            return Err(e);
        }
    };
    let k = model.outputs();
    let n = aligned.n_rows();
    let mut raw: Vec<f64> = (0..n).flat_map(|_| model.init_score.iter().copied()).collect();
    for row in 0..n {
        let x = aligned.features.row(row);
        for tree in &model.trees {
            let w = tree.leaf_weight(|_, rule| match *rule {
                SplitRule::Guest { feature, bin, .. } => Ok(model.binning.bin_of(feature as usize, x[feature as usize]) <= bin),
                SplitRule::Host { party, split_id } => bits
                    .get(&(party, split_id))
                    .map(|b| b.get(row))
                    .ok_or_else(|| crate::Error::Protocol(alloc::format!("host {party} has no split {split_id}"))),
            })?;
            match tree.output {
                Some(c) => raw[row * k + c as usize] += w[0],
                None => {
                    for (s, v) in raw[row * k..(row + 1) * k].iter_mut().zip(w) {
                        *s += v;
                    }
                }
            }
        }
    }
    Ok(Prediction { ids: aligned.ids, raw, outputs: k, messages: ep.into_stats() })
}

/// Answer one prediction session as host `rank`.
pub fn serve_host_predict<T: Transport>(
    transport: T,
    rank: Rank,
    model: &HostModel,
    data: &PartyDataset,
) -> Result<MessageStats> {
    model.validate()?;
    check_columns(&model.feature_names, data)?;
    let mut ep = Endpoint::new(transport, rank, None);
    let run = |ep: &mut Endpoint<T>| -> Result<()> {
        let (_, msg) = ep.recv(GUEST)?;
        let Message::PredictRequest { id_salt } = msg else {
            bail!(Protocol, "expected PredictRequest, got {:?}", msg.kind());
        };
        let own: Vec<IdHash> = data.ids.iter().map(|id| hash_id(&id_salt, id)).collect();
        ep.send(GUEST, 0, 0, &Message::IdHashes(own.clone()))?;
        let Message::AlignedIds(common) = ep.expect(GUEST, MessageKind::AlignedIds, 0, 0)? else {
            unreachable!("kind checked")
        };
        let by_hash: BTreeMap<&IdHash, usize> = own.iter().enumerate().map(|(i, h)| (h, i)).collect();
        let rows = common
            .iter()
            .map(|h| by_hash.get(h).copied())
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| crate::Error::Protocol("aligned id unknown to this host".into()))?;
        let answer = model
            .splits
            .iter()
            .map(|(&id, s)| {
                let f = s.feature as usize;
                (id, BitVec::from_fn(rows.len(), |i| model.binning.bin_of(f, data.features.get(rows[i], f)) <= s.bin))
            })
            .collect();
        ep.send(GUEST, 0, 0, &Message::PredictResponse(answer))?;
        ep.expect(GUEST, MessageKind::Finish, 0, 0)?;
        Ok(())
    };
    match run(&mut ep) {
        Ok(()) => Ok(ep.into_stats()),
        Err(e) => {
            ep.abort([GUEST], &e.to_string());
            Err(e)
        }
    }
}
