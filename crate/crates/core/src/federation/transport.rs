//! Transport abstraction and a checked, counting endpoint over it.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::message::{Header, Message, MessageKind};
use crate::error::{bail, Result};

/// Party rank: 0 is the guest, `1..=n` the hosts.
pub type Rank = u16;

pub const GUEST: Rank = 0;

/// Point-to-point delivery of opaque frames. Frames between one pair of
/// parties arrive in the order they were sent.
pub trait Transport {
    fn send(&mut self, to: Rank, frame: Vec<u8>) -> Result<()>;
    fn recv(&mut self, from: Rank) -> Result<Vec<u8>>;
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn send(&mut self, to: Rank, frame: Vec<u8>) -> Result<()> {
        (**self).send(to, frame)
    }
    fn recv(&mut self, from: Rank) -> Result<Vec<u8>> {
        (**self).recv(from)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&mut self, to: Rank, frame: Vec<u8>) -> Result<()> {
        (**self).send(to, frame)
    }
    fn recv(&mut self, from: Rank) -> Result<Vec<u8>> {
        (**self).recv(from)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindStats {
    pub messages: u64,
    pub bytes: u64,
    pub ciphertexts: u64,
}

impl KindStats {
    fn add(&mut self, bytes: usize, ciphertexts: usize) {
        self.messages += 1;
        self.bytes += bytes as u64;
        self.ciphertexts += ciphertexts as u64;
    }
}

/// Per-kind traffic seen by one party.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageStats {
    pub sent: BTreeMap<MessageKind, KindStats>,
    pub received: BTreeMap<MessageKind, KindStats>,
}

impl MessageStats {
    pub fn sent_of(&self, kind: MessageKind) -> KindStats {
        self.sent.get(&kind).copied().unwrap_or_default()
    }

    pub fn received_of(&self, kind: MessageKind) -> KindStats {
        self.received.get(&kind).copied().unwrap_or_default()
    }

    fn total(map: &BTreeMap<MessageKind, KindStats>) -> KindStats {
        map.values().fold(KindStats::default(), |a, s| KindStats {
            messages: a.messages + s.messages,
            bytes: a.bytes + s.bytes,
            ciphertexts: a.ciphertexts + s.ciphertexts,
        })
    }

    pub fn total_sent(&self) -> KindStats {
        Self::total(&self.sent)
    }

    pub fn total_received(&self) -> KindStats {
        Self::total(&self.received)
    }
}

/// Typed, checked messaging for one party.
pub struct Endpoint<T> {
    transport: T,
    rank: Rank,
    session_id: Option<u64>,
    stats: MessageStats,
}

impl<T: Transport> Endpoint<T> {
    pub fn new(transport: T, rank: Rank, session_id: Option<u64>) -> Self {
        Self { transport, rank, session_id, stats: MessageStats::default() }
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn stats(&self) -> &MessageStats {
        &self.stats
    }

    pub fn into_stats(self) -> MessageStats {
        self.stats
    }

    pub fn send(&mut self, to: Rank, epoch: u32, layer: u32, msg: &Message) -> Result<()> {
        let header = Header {
            kind: msg.kind(),
            session_id: self.session_id.unwrap_or(0),
            epoch,
            layer,
            sender: self.rank,
        };
        let frame = msg.encode(&header);
        self.stats.sent.entry(msg.kind()).or_default().add(frame.len(), msg.cipher_count());
        self.transport.send(to, frame)
    }

    /// Next message from `from`. The first message fixes the session id
    /// when none was given; a peer's abort surfaces as a protocol error.
    pub fn recv(&mut self, from: Rank) -> Result<(Header, Message)> {
        let frame = self.transport.recv(from)?;
        let (header, msg) = Message::decode(&frame)?;
        self.stats.received.entry(header.kind).or_default().add(frame.len(), msg.cipher_count());
        if header.sender != from {
            bail!(Protocol, "frame from party {from} claims sender {}", header.sender);
        }
        match self.session_id {
            Some(id) if id != header.session_id => {
                bail!(Protocol, "session id mismatch: expected {id:#x}, got {:#x}", header.session_id)
            }
            None => self.session_id = Some(header.session_id),
            _ => {}
        }
        if let Message::Abort(reason) = &msg {
            bail!(Protocol, "party {from} aborted: {reason}");
        }
        Ok((header, msg))
    }

    /// Receive a message that must be `kind` at (`epoch`, `layer`).
    pub fn expect(&mut self, from: Rank, kind: MessageKind, epoch: u32, layer: u32) -> Result<Message> {
        let (h, msg) = self.recv(from)?;
        if h.kind != kind || h.epoch != epoch || h.layer != layer {
            bail!(
                Protocol,
                "expected {kind:?} at epoch {epoch} layer {layer} from party {from}, got {:?} at epoch {} layer {}",
                h.kind,
                h.epoch,
                h.layer
            );
        }
        Ok(msg)
    }

    /// Best-effort notice to peers that this party is giving up.
    pub fn abort(&mut self, peers: impl IntoIterator<Item = Rank>, reason: &str) {
        for p in peers {
            let _ = self.send(p, 0, 0, &Message::Abort(reason.into()));
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use alloc::collections::VecDeque;
    use alloc::rc::Rc;
    use core::cell::RefCell;

    /// Single-threaded loopback between two ranks, for unit tests.
    #[derive(Clone, Default)]
    pub struct Loopback {
        pub queues: Rc<RefCell<BTreeMap<(Rank, Rank), VecDeque<Vec<u8>>>>>,
        pub me: Rank,
    }

    impl Transport for Loopback {
        fn send(&mut self, to: Rank, frame: Vec<u8>) -> Result<()> {
            self.queues.borrow_mut().entry((self.me, to)).or_default().push_back(frame);
            Ok(())
        }
        fn recv(&mut self, from: Rank) -> Result<Vec<u8>> {
            self.queues
                .borrow_mut()
                .get_mut(&(from, self.me))
                .and_then(|q| q.pop_front())
                .ok_or_else(|| crate::Error::Transport("no frame queued".into()))
        }
    }

    fn pair() -> (Endpoint<Loopback>, Endpoint<Loopback>) {
        let shared = Loopback::default();
        let g = Loopback { me: 0, ..shared.clone() };
        let h = Loopback { me: 1, ..shared };
        (Endpoint::new(g, 0, Some(7)), Endpoint::new(h, 1, None))
    }

    #[test]
    fn counts_and_checks_order() {
        let (mut g, mut h) = pair();
        g.send(1, 0, 0, &Message::NodeBatch(alloc::vec![0])).unwrap();
        g.send(1, 0, 1, &Message::Finish).unwrap();
        assert!(matches!(h.expect(0, MessageKind::NodeBatch, 0, 0).unwrap(), Message::NodeBatch(_)));
        // wrong layer is a protocol error
        assert!(matches!(h.expect(0, MessageKind::Finish, 0, 0), Err(crate::Error::Protocol(_))));
        assert_eq!(g.stats().sent_of(MessageKind::NodeBatch).messages, 1);
        assert_eq!(h.stats().total_received().messages, 2);
    }

    #[test]
    fn session_and_abort() {
        let (mut g, mut h) = pair();
        g.send(1, 0, 0, &Message::Finish).unwrap();
        h.recv(0).unwrap();
        // a frame from another session is rejected
        let mut other = Endpoint::new(Loopback { me: 0, ..g.transport.clone() }, 0, Some(8));
        other.send(1, 0, 0, &Message::Finish).unwrap();
        assert!(matches!(h.recv(0), Err(crate::Error::Protocol(_))));
        g.abort([1], "bad");
        let err = h.recv(0).unwrap_err();
        assert!(matches!(err, crate::Error::Protocol(ref m) if m.contains("bad")));
    }
}
