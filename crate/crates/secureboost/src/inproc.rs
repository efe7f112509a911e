//! In-process transport: one thread per party, a channel per ordered pair.

use std::collections::BTreeMap;
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use secureboost_core::federation::{Rank, Transport};
use secureboost_core::Error;

/// A frame as it crossed the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub from: Rank,
    pub to: Rank,
    pub bytes: Vec<u8>,
}

pub type Tamper = Arc<dyn Fn(&mut Frame) + Send + Sync>;

#[derive(Clone, Default)]
pub struct Tap {
    pub log: Option<Arc<Mutex<Vec<Frame>>>>,
    /// Applied to every frame before delivery (fault injection).
    pub tamper: Option<Tamper>,
}

impl Tap {
    pub fn recording() -> (Self, Arc<Mutex<Vec<Frame>>>) {
        let log = Arc::new(Mutex::new(Vec::new()));
        (Tap { log: Some(log.clone()), tamper: None }, log)
    }
}

pub struct InprocTransport {
    rank: Rank,
    out: BTreeMap<Rank, Sender<Vec<u8>>>,
    inbox: BTreeMap<Rank, Receiver<Vec<u8>>>,
    timeout: Duration,
    tap: Tap,
}

/// Fully connected endpoints for ranks `0..parties`, in rank order.
pub fn mesh(parties: usize, timeout: Duration, tap: Tap) -> Vec<InprocTransport> {
    let mut ends: Vec<InprocTransport> = (0..parties)
        .map(|r| InprocTransport {
            rank: r as Rank,
            out: BTreeMap::new(),
            inbox: BTreeMap::new(),
            timeout,
            tap: tap.clone(),
        })
        .collect();
    for from in 0..parties {
        for to in 0..parties {
            if from != to {
                let (tx, rx) = channel();
                ends[from].out.insert(to as Rank, tx);
                ends[to].inbox.insert(from as Rank, rx);
            }
        }
    }
    ends
}

impl Transport for InprocTransport {
    fn send(&mut self, to: Rank, bytes: Vec<u8>) -> secureboost_core::Result<()> {
        let mut frame = Frame { from: self.rank, to, bytes };
        if let Some(t) = &self.tap.tamper {
            t(&mut frame);
        }
        if let Some(log) = &self.tap.log {
            log.lock().expect("frame log poisoned").push(frame.clone());
        }
        self.out
            .get(&to)
            .ok_or_else(|| Error::Transport(format!("no party {to}")))?
            .send(frame.bytes)
            .map_err(|_| Error::Transport(format!("party {to} hung up")))
    }

    fn recv(&mut self, from: Rank) -> secureboost_core::Result<Vec<u8>> {
        let rx = self.inbox.get(&from).ok_or_else(|| Error::Transport(format!("no party {from}")))?;
        rx.recv_timeout(self.timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => Error::Transport(format!("timed out waiting for party {from}")),
            RecvTimeoutError::Disconnected => Error::Transport(format!("party {from} hung up")),
        })
    }
}
