//! Protocol messages and their binary layout.
//!
//! Every frame is an envelope followed by a kind-specific payload:
//!
//! ```text
//! version u8 | kind u8 | session_id u64 | epoch u32 | layer u32 | sender u16 | payload
//! ```
//!
//! Integers are big-endian. Sequences are a `u32` count followed by the
//! items; byte strings and big integers are a `u32` length followed by the
//! big-endian bytes. A ciphertext is a length-prefixed value followed by its
//! 8-byte key fingerprint. A bit vector is a `u32` bit count followed by
//! `⌈len/8⌉` bytes, least significant bit first.

use alloc::string::String;
use alloc::vec::Vec;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::wire::{BitVec, Reader, Writer};
use crate::encoding::{CipherLayout, MultiClassLayout, PackState, SplitMeta};
use crate::error::{bail, Result};
use crate::paillier::Ciphertext;

pub const PROTOCOL_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 1 + 1 + 8 + 4 + 4 + 2;

pub type IdHash = [u8; 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum MessageKind {
    SessionStart = 1,
    IdHashes = 2,
    AlignedIds = 3,
    EpochGh = 4,
    NodeBatch = 5,
    SplitInfoPackages = 6,
    BestSplitIds = 7,
    HostAssignments = 8,
    NodeAssignments = 9,
    PredictRequest = 10,
    PredictResponse = 11,
    Finish = 12,
    Abort = 13,
}

impl MessageKind {
    pub const ALL: [MessageKind; 13] = [
        MessageKind::SessionStart,
        MessageKind::IdHashes,
        MessageKind::AlignedIds,
        MessageKind::EpochGh,
        MessageKind::NodeBatch,
        MessageKind::SplitInfoPackages,
        MessageKind::BestSplitIds,
        MessageKind::HostAssignments,
        MessageKind::NodeAssignments,
        MessageKind::PredictRequest,
        MessageKind::PredictResponse,
        MessageKind::Finish,
        MessageKind::Abort,
    ];

    fn from_u8(b: u8) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| *k as u8 == b)
            .ok_or_else(|| crate::Error::Decode(alloc::format!("unknown message kind {b}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub kind: MessageKind,
    pub session_id: u64,
    pub epoch: u32,
    pub layer: u32,
    pub sender: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionStart {
    /// Paillier modulus `n` of the guest's key.
    pub modulus: BigUint,
    pub max_bins: u16,
    pub id_salt: Vec<u8>,
    pub hist_subtraction: bool,
    pub compression: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochGh {
    /// Index of the tree within its epoch.
    pub tree: u32,
    pub layout: CipherLayout,
    pub state: PackState,
    /// Split-infos per compressed package; 1 disables compression.
    pub capacity: u32,
    /// Instances contributing to histograms this tree.
    pub sampled: BitVec,
    /// `layout.width()` ciphertexts per sampled instance, in instance order.
    pub ciphers: Vec<Ciphertext>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WirePackage {
    /// One ciphertext for a compressed package, else `layout.width()`.
    pub ciphers: Vec<Ciphertext>,
    pub entries: Vec<SplitMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodePackages {
    pub node: u32,
    pub packages: Vec<WirePackage>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSplit {
    pub node: u32,
    pub left: u32,
    pub right: u32,
    /// Over all aligned instances; set bits go left.
    pub left_bits: BitVec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    SessionStart(SessionStart),
    IdHashes(Vec<IdHash>),
    AlignedIds(Vec<IdHash>),
    EpochGh(EpochGh),
    /// Nodes whose split-infos are requested this layer.
    NodeBatch(Vec<u32>),
    SplitInfoPackages(Vec<NodePackages>),
    /// (node, winning anonymous split id) pairs owned by the receiver.
    BestSplitIds(Vec<(u32, u64)>),
    /// (node, left membership) for each split the sender owns.
    HostAssignments(Vec<(u32, BitVec)>),
    NodeAssignments(Vec<NodeSplit>),
    PredictRequest { id_salt: Vec<u8> },
    /// Left-going bits of every split the sender holds.
    PredictResponse(Vec<(u64, BitVec)>),
    Finish,
    Abort(String),
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::SessionStart(_) => MessageKind::SessionStart,
            Message::IdHashes(_) => MessageKind::IdHashes,
            Message::AlignedIds(_) => MessageKind::AlignedIds,
            Message::EpochGh(_) => MessageKind::EpochGh,
            Message::NodeBatch(_) => MessageKind::NodeBatch,
            Message::SplitInfoPackages(_) => MessageKind::SplitInfoPackages,
            Message::BestSplitIds(_) => MessageKind::BestSplitIds,
            Message::HostAssignments(_) => MessageKind::HostAssignments,
            Message::NodeAssignments(_) => MessageKind::NodeAssignments,
            Message::PredictRequest { .. } => MessageKind::PredictRequest,
            Message::PredictResponse(_) => MessageKind::PredictResponse,
            Message::Finish => MessageKind::Finish,
            Message::Abort(_) => MessageKind::Abort,
        }
    }

    /// Number of ciphertexts carried.
    pub fn cipher_count(&self) -> usize {
        match self {
            Message::EpochGh(e) => e.ciphers.len(),
            Message::SplitInfoPackages(nodes) => {
                nodes.iter().flat_map(|n| &n.packages).map(|p| p.ciphers.len()).sum()
            }
            _ => 0,
        }
    }

    pub fn encode(&self, header: &Header) -> Vec<u8> {
        debug_assert_eq!(header.kind, self.kind());
        let mut w = Writer::new();
        w.u8(PROTOCOL_VERSION);
        w.u8(self.kind() as u8);
        w.u64(header.session_id);
        w.u32(header.epoch);
        w.u32(header.layer);
        w.u16(header.sender);
        self.write_payload(&mut w);
        w.finish()
    }

    pub fn decode(frame: &[u8]) -> Result<(Header, Message)> {
        let mut r = Reader::new(frame);
        let version = r.u8()?;
        if version != PROTOCOL_VERSION {
            bail!(Decode, "unsupported protocol version {version}");
        }
        let header = Header {
            kind: MessageKind::from_u8(r.u8()?)?,
            session_id: r.u64()?,
            epoch: r.u32()?,
            layer: r.u32()?,
            sender: r.u16()?,
        };
        let msg = Self::read_payload(header.kind, &mut r)?;
        r.done()?;
        Ok((header, msg))
    }

    fn write_payload(&self, w: &mut Writer) {
        let hashes = |w: &mut Writer, hs: &[IdHash]| {
            w.len(hs.len());
            for h in hs {
                for b in h {
                    w.u8(*b);
                }
            }
        };
        match self {
            Message::SessionStart(s) => {
                w.biguint(&s.modulus);
                w.u16(s.max_bins);
                w.bytes(&s.id_salt);
                w.bool(s.hist_subtraction);
                w.bool(s.compression);
            }
            Message::IdHashes(hs) | Message::AlignedIds(hs) => hashes(w, hs),
            Message::EpochGh(e) => {
                w.u32(e.tree);
                write_layout(w, &e.layout);
                write_state(w, &e.state);
                w.u32(e.capacity);
                w.bits(&e.sampled);
                w.len(e.ciphers.len());
                for c in &e.ciphers {
                    w.cipher(c);
                }
            }
            Message::NodeBatch(nodes) => {
                w.len(nodes.len());
                for n in nodes {
                    w.u32(*n);
                }
            }
            Message::SplitInfoPackages(nodes) => {
                w.len(nodes.len());
                for n in nodes {
                    w.u32(n.node);
                    w.len(n.packages.len());
                    for p in &n.packages {
                        w.len(p.ciphers.len());
                        for c in &p.ciphers {
                            w.cipher(c);
                        }
                        w.len(p.entries.len());
                        for e in &p.entries {
                            w.u64(e.id);
                            w.u32(e.sample_count);
                        }
                    }
                }
            }
            Message::BestSplitIds(picks) => {
                w.len(picks.len());
                for (node, id) in picks {
                    w.u32(*node);
                    w.u64(*id);
                }
            }
            Message::HostAssignments(a) => {
                w.len(a.len());
                for (node, bits) in a {
                    w.u32(*node);
                    w.bits(bits);
                }
            }
            Message::NodeAssignments(splits) => {
                w.len(splits.len());
                for s in splits {
                    w.u32(s.node);
                    w.u32(s.left);
                    w.u32(s.right);
                    w.bits(&s.left_bits);
                }
            }
            Message::PredictRequest { id_salt } => w.bytes(id_salt),
            Message::PredictResponse(entries) => {
                w.len(entries.len());
                for (id, bits) in entries {
                    w.u64(*id);
                    w.bits(bits);
                }
            }
            Message::Finish => {}
            Message::Abort(reason) => w.str(reason),
        }
    }

    fn read_payload(kind: MessageKind, r: &mut Reader<'_>) -> Result<Message> {
        let hash = |r: &mut Reader<'_>| -> Result<IdHash> {
            let mut h = [0u8; 32];
            for b in h.iter_mut() {
                *b = r.u8()?;
            }
            Ok(h)
        };
        Ok(match kind {
            MessageKind::SessionStart => Message::SessionStart(SessionStart {
                modulus: r.biguint()?,
                max_bins: r.u16()?,
                id_salt: r.bytes()?.to_vec(),
                hist_subtraction: r.bool()?,
                compression: r.bool()?,
            }),
            MessageKind::IdHashes => Message::IdHashes(r.seq(hash)?),
            MessageKind::AlignedIds => Message::AlignedIds(r.seq(hash)?),
            MessageKind::EpochGh => Message::EpochGh(EpochGh {
                tree: r.u32()?,
                layout: read_layout(r)?,
                state: read_state(r)?,
                capacity: r.u32()?,
                sampled: r.bits()?,
                ciphers: r.seq(|r| r.cipher())?,
            }),
            MessageKind::NodeBatch => Message::NodeBatch(r.seq(|r| r.u32())?),
            MessageKind::SplitInfoPackages => Message::SplitInfoPackages(r.seq(|r| {
                Ok(NodePackages {
                    node: r.u32()?,
                    packages: r.seq(|r| {
                        Ok(WirePackage {
                            ciphers: r.seq(|r| r.cipher())?,
                            entries: r.seq(|r| Ok(SplitMeta { id: r.u64()?, sample_count: r.u32()? }))?,
                        })
                    })?,
                })
            })?),
            MessageKind::BestSplitIds => Message::BestSplitIds(r.seq(|r| Ok((r.u32()?, r.u64()?)))?),
            MessageKind::HostAssignments => Message::HostAssignments(r.seq(|r| Ok((r.u32()?, r.bits()?)))?),
            MessageKind::NodeAssignments => Message::NodeAssignments(r.seq(|r| {
                Ok(NodeSplit { node: r.u32()?, left: r.u32()?, right: r.u32()?, left_bits: r.bits()? })
            })?),
            MessageKind::PredictRequest => Message::PredictRequest { id_salt: r.bytes()?.to_vec() },
            MessageKind::PredictResponse => Message::PredictResponse(r.seq(|r| Ok((r.u64()?, r.bits()?)))?),
            MessageKind::Finish => Message::Finish,
            MessageKind::Abort => Message::Abort(r.str()?),
        })
    }
}

fn write_layout(w: &mut Writer, layout: &CipherLayout) {
    match layout {
        CipherLayout::Packed => w.u8(0),
        CipherLayout::Separate => w.u8(1),
        CipherLayout::MultiClass(m) => {
            w.u8(2);
            w.u32(m.classes as u32);
            w.u32(m.per_cipher as u32);
            w.u32(m.ciphers as u32);
        }
    }
}

fn read_layout(r: &mut Reader<'_>) -> Result<CipherLayout> {
    Ok(match r.u8()? {
        0 => CipherLayout::Packed,
        1 => CipherLayout::Separate,
        2 => {
            let (classes, per_cipher, ciphers) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
            if classes == 0 || per_cipher == 0 || ciphers != classes.div_ceil(per_cipher) {
                bail!(Decode, "inconsistent multi-class layout");
            }
            CipherLayout::MultiClass(MultiClassLayout { classes, per_cipher, ciphers })
        }
        t => bail!(Decode, "unknown cipher layout {t}"),
    })
}

fn write_state(w: &mut Writer, s: &PackState) {
    w.u32(s.precision);
    w.f64(s.g_offset);
    w.f64(s.g_max);
    w.f64(s.h_max);
    w.u64(s.g_bits);
    w.u64(s.h_bits);
    w.u64(s.gh_bits);
    w.u64(s.n_instances);
}

fn read_state(r: &mut Reader<'_>) -> Result<PackState> {
    let s = PackState {
        precision: r.u32()?,
        g_offset: r.f64()?,
        g_max: r.f64()?,
        h_max: r.f64()?,
        g_bits: r.u64()?,
        h_bits: r.u64()?,
        gh_bits: r.u64()?,
        n_instances: r.u64()?,
    };
    if s.g_bits + s.h_bits != s.gh_bits || s.gh_bits == 0 {
        bail!(Decode, "inconsistent pack state bit widths");
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paillier::keygen_seeded;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn header(kind: MessageKind) -> Header {
        Header { kind, session_id: 0xfeed, epoch: 3, layer: 2, sender: 1 }
    }

    fn roundtrip(m: Message) {
        let h = header(m.kind());
        let frame = m.encode(&h);
        let (h2, m2) = Message::decode(&frame).unwrap();
        assert_eq!(h2, h);
        assert_eq!(m2, m);
        // every strict prefix is rejected
        for cut in [0, 1, HEADER_LEN - 1, frame.len() - 1] {
            if cut < frame.len() && !(cut == HEADER_LEN && matches!(m, Message::Finish)) {
                assert!(Message::decode(&frame[..cut]).is_err(), "prefix {cut} of {:?}", m.kind());
            }
        }
    }

    #[test]
    fn all_kinds_roundtrip() {
        let kp = keygen_seeded(256, 1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let c = kp.public.encrypt(&BigUint::from(42u32), &mut rng).unwrap();
        let state = PackState::from_bounds(100, -1.0, 1.0, 0.25, 53, 255).unwrap();
        roundtrip(Message::SessionStart(SessionStart {
            modulus: kp.public.n().clone(),
            max_bins: 32,
            id_salt: vec![1, 2, 3],
            hist_subtraction: true,
            compression: false,
        }));
        roundtrip(Message::IdHashes(vec![[7u8; 32], [9u8; 32]]));
        roundtrip(Message::AlignedIds(vec![]));
        for layout in [
            CipherLayout::Packed,
            CipherLayout::Separate,
            CipherLayout::MultiClass(MultiClassLayout { classes: 5, per_cipher: 2, ciphers: 3 }),
        ] {
            roundtrip(Message::EpochGh(EpochGh {
                tree: 1,
                layout,
                state: state.clone(),
                capacity: 2,
                sampled: BitVec::from_fn(13, |i| i != 4),
                ciphers: vec![c.clone(), c.clone()],
            }));
        }
        roundtrip(Message::NodeBatch(vec![1, 2]));
        roundtrip(Message::SplitInfoPackages(vec![NodePackages {
            node: 3,
            packages: vec![WirePackage {
                ciphers: vec![c.clone()],
                entries: vec![SplitMeta { id: 99, sample_count: 4 }, SplitMeta { id: 7, sample_count: 1 }],
            }],
        }]));
        roundtrip(Message::BestSplitIds(vec![(1, u64::MAX)]));
        roundtrip(Message::HostAssignments(vec![(1, BitVec::from_fn(9, |i| i < 3))]));
        roundtrip(Message::NodeAssignments(vec![NodeSplit {
            node: 0,
            left: 1,
            right: 2,
            left_bits: BitVec::from_fn(17, |i| i % 2 == 0),
        }]));
        roundtrip(Message::PredictRequest { id_salt: vec![5; 16] });
        roundtrip(Message::PredictResponse(vec![(12, BitVec::zeros(3))]));
        roundtrip(Message::Finish);
        roundtrip(Message::Abort("boom".into()));
    }

    #[test]
    fn rejects_bad_envelopes() {
        let frame = Message::Finish.encode(&header(MessageKind::Finish));
        let mut bad = frame.clone();
        bad[0] = 9;
        assert!(Message::decode(&bad).is_err());
        let mut bad = frame.clone();
        bad[1] = 200;
        assert!(Message::decode(&bad).is_err());
        let mut long = frame;
        long.push(0);
        assert!(Message::decode(&long).is_err());
    }
}
