//! Whole sessions: every party as a thread of one process over the
//! in-process transport, or one party of a TCP deployment.

use std::net::TcpListener;
use std::time::{Duration, Instant};

use secureboost_core::data::PartyDataset;
use secureboost_core::federation::{
    predict_guest, run_host, serve_host_predict, train_guest, GuestModel, GuestOutcome, HostModel, HostOutcome,
    Prediction, Rank, TrainParams, GUEST,
};

use crate::error::{Error, Result};
use crate::inproc::{mesh, Tap};
use crate::tcp::TcpTransport;

#[derive(Clone)]
pub struct InprocOptions {
    pub timeout: Duration,
    pub tap: Tap,
}

impl Default for InprocOptions {
    fn default() -> Self {
        Self { timeout: Duration::from_secs(3600), tap: Tap::default() }
    }
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub guest: GuestOutcome,
    pub hosts: Vec<HostOutcome>,
    pub seconds: f64,
}

/// Prefer the failing party's own error over the guest's report of its
/// abort.
fn root_cause<T>(guest: secureboost_core::Error, hosts: Vec<secureboost_core::Result<T>>) -> Error {
    for (i, h) in hosts.into_iter().enumerate() {
        let rank = (i + 1) as Rank;
        if let Err(e) = h {
            let relayed = matches!(&guest, secureboost_core::Error::Protocol(m) if m.starts_with(&format!("party {rank} aborted")));
            if relayed {
                return Error::Party { party: rank, message: e.to_string(), category: e.category() };
            }
        }
    }
    Error::Core(guest)
}

fn join_all<T>(handles: Vec<std::thread::ScopedJoinHandle<'_, secureboost_core::Result<T>>>) -> Vec<secureboost_core::Result<T>> {
    handles.into_iter().map(|h| h.join().expect("party thread panicked")).collect()
}

pub fn train_inproc(
    guest: &PartyDataset,
    hosts: &[PartyDataset],
    params: &TrainParams,
    opts: &InprocOptions,
) -> Result<SessionOutcome> {
    let start = Instant::now();
    let mut ends = mesh(hosts.len() + 1, opts.timeout, opts.tap.clone()).into_iter();
    let guest_end = ends.next().expect("guest endpoint");
    let clock = move || start.elapsed().as_secs_f64();
    let (g, h) = std::thread::scope(|s| {
        let handles: Vec<_> = ends
            .zip(hosts)
            .enumerate()
            .map(|(i, (t, data))| s.spawn(move || run_host(t, (i + 1) as Rank, data, params.seed)))
            .collect();
        let g = train_guest(guest_end, guest, hosts.len() as u16, params, Some(&clock));
        (g, join_all(handles))
    });
    match g {
        Ok(guest) => {
            let hosts = h
                .into_iter()
                .enumerate()
                .map(|(i, r)| {
                    r.map_err(|e| Error::Party { party: (i + 1) as Rank, message: e.to_string(), category: e.category() })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SessionOutcome { guest, hosts, seconds: start.elapsed().as_secs_f64() })
        }
        Err(e) => Err(root_cause(e, h)),
    }
}

pub fn predict_inproc(
    guest_model: &GuestModel,
    host_models: &[HostModel],
    guest: &PartyDataset,
    hosts: &[PartyDataset],
    seed: u64,
    opts: &InprocOptions,
) -> Result<Prediction> {
    if host_models.len() != hosts.len() || guest_model.n_hosts as usize != hosts.len() {
        return Err(Error::Config(format!(
            "model expects {} hosts; got {} host models and {} host datasets",
            guest_model.n_hosts,
            host_models.len(),
            hosts.len()
        )));
    }
    let mut ends = mesh(hosts.len() + 1, opts.timeout, opts.tap.clone()).into_iter();
    let guest_end = ends.next().expect("guest endpoint");
    let (g, h) = std::thread::scope(|s| {
        let handles: Vec<_> = ends
            .zip(host_models.iter().zip(hosts))
            .enumerate()
            .map(|(i, (t, (m, d)))| s.spawn(move || serve_host_predict(t, (i + 1) as Rank, m, d)))
            .collect();
        let g = predict_guest(guest_end, guest_model, guest, seed);
        (g, join_all(handles))
    });
    g.map_err(|e| root_cause(e, h))
}

/// Guest of a TCP session; dials every host.
pub fn train_tcp_guest(
    guest: &PartyDataset,
    addresses: &[String],
    params: &TrainParams,
    patience: Duration,
) -> Result<GuestOutcome> {
    let start = Instant::now();
    let clock = move || start.elapsed().as_secs_f64();
    let t = TcpTransport::connect(addresses, patience)?;
    Ok(train_guest(t, guest, addresses.len() as u16, params, Some(&clock))?)
}

/// Host `rank` of a TCP session, listening on `listen`.
pub fn train_tcp_host(data: &PartyDataset, rank: Rank, listen: &str, seed: u64) -> Result<HostOutcome> {
    if rank == GUEST {
        return Err(Error::Config("host rank must be at least 1".into()));
    }
    let listener = TcpListener::bind(listen).map_err(|e| Error::io(listen, e))?;
    let t = TcpTransport::accept(&listener, rank)?;
    Ok(run_host(t, rank, data, seed)?)
}

pub fn predict_tcp_guest(model: &GuestModel, data: &PartyDataset, addresses: &[String], seed: u64, patience: Duration) -> Result<Prediction> {
    let t = TcpTransport::connect(addresses, patience)?;
    Ok(predict_guest(t, model, data, seed)?)
}

pub fn predict_tcp_host(model: &HostModel, data: &PartyDataset, rank: Rank, listen: &str) -> Result<()> {
    let listener = TcpListener::bind(listen).map_err(|e| Error::io(listen, e))?;
    let t = TcpTransport::accept(&listener, rank)?;
    serve_host_predict(t, rank, model, data)?;
    Ok(())
}
