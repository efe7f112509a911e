//! TCP transport for a star topology: the guest dials every host, frames
//! are a 4-byte big-endian length followed by the bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use secureboost_core::federation::{Rank, Transport, GUEST};
use secureboost_core::Error;

/// Frames above this are rejected before allocation.
pub const MAX_FRAME: u32 = 1 << 30;

pub struct TcpTransport {
    peers: BTreeMap<Rank, TcpStream>,
}

fn transport_err(what: &str, e: std::io::Error) -> Error {
    Error::Transport(format!("{what}: {e}"))
}

impl TcpTransport {
    /// Guest side: connect to host `k` at `hosts[k-1]`, retrying until
    /// `patience` runs out. Each connection opens with the host's rank.
    pub fn connect(hosts: &[String], patience: Duration) -> Result<Self, Error> {
        let mut peers = BTreeMap::new();
        for (i, addr) in hosts.iter().enumerate() {
            let rank = (i + 1) as Rank;
            let deadline = Instant::now() + patience;
            let mut stream = loop {
                let addrs: Vec<_> =
                    addr.to_socket_addrs().map_err(|e| transport_err(&format!("resolve {addr}"), e))?.collect();
                match TcpStream::connect(&addrs[..]) {
                    Ok(s) => break s,
                    Err(e) if Instant::now() < deadline => {
                        log::debug!("host {rank} at {addr} not up yet: {e}");
                        std::thread::sleep(Duration::from_millis(200));
                    }
                    Err(e) => return Err(transport_err(&format!("connect {addr}"), e)),
                }
            };
            stream.set_nodelay(true).ok();
            stream.write_all(&rank.to_be_bytes()).map_err(|e| transport_err("handshake", e))?;
            peers.insert(rank, stream);
        }
        Ok(Self { peers })
    }

    /// Host side: accept the guest's connection and check it addresses
    /// this host's rank.
    pub fn accept(listener: &TcpListener, rank: Rank) -> Result<Self, Error> {
        let (mut stream, peer) = listener.accept().map_err(|e| transport_err("accept", e))?;
        stream.set_nodelay(true).ok();
        let mut b = [0u8; 2];
        stream.read_exact(&mut b).map_err(|e| transport_err("handshake", e))?;
        if u16::from_be_bytes(b) != rank {
            return Err(Error::Protocol(format!("{peer} dialled rank {} but this is host {rank}", u16::from_be_bytes(b))));
        }
        Ok(Self { peers: BTreeMap::from([(GUEST, stream)]) })
    }

    fn stream(&mut self, rank: Rank) -> secureboost_core::Result<&mut TcpStream> {
        self.peers.get_mut(&rank).ok_or_else(|| Error::Transport(format!("no connection to party {rank}")))
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, to: Rank, frame: Vec<u8>) -> secureboost_core::Result<()> {
        if frame.len() as u64 >= MAX_FRAME as u64 {
            return Err(Error::Transport(format!("frame of {} bytes too large", frame.len())));
        }
        let s = self.stream(to)?;
        s.write_all(&(frame.len() as u32).to_be_bytes()).map_err(|e| transport_err("send", e))?;
        s.write_all(&frame).map_err(|e| transport_err("send", e))?;
        s.flush().map_err(|e| transport_err("send", e))
    }

    fn recv(&mut self, from: Rank) -> secureboost_core::Result<Vec<u8>> {
        let s = self.stream(from)?;
        let mut len = [0u8; 4];
        s.read_exact(&mut len).map_err(|e| transport_err("recv", e))?;
        let len = u32::from_be_bytes(len);
        if len >= MAX_FRAME {
            return Err(Error::Transport(format!("peer announced a {len}-byte frame")));
        }
        let mut buf = vec![0u8; len as usize];
        s.read_exact(&mut buf).map_err(|e| transport_err("recv", e))?;
        Ok(buf)
    }
}
