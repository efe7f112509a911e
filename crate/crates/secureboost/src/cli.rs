//! Command-line front end.

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use secureboost_core::cost::{estimate_baseline, estimate_optimized, reduction, CostEstimate, CostParams};
use secureboost_core::data::PartyDataset;
use secureboost_core::encoding::DEFAULT_PRECISION;
use secureboost_core::federation::{GuestModel, Objective, Prediction, Rank, TrainingLog, GUEST};
use secureboost_core::paillier::keygen;
use secureboost_core::tree::{sigmoid, softmax};
use serde::Serialize;

use crate::artifact::{guest_model_path, host_model_path, load_guest_model, load_host_model, save_json};
use crate::config::{TrainConfig, TransportKind};
use crate::error::{Error, Result};
use crate::io::{load_dataset, write_csv, write_scores};
use crate::metrics::{accuracy, argmax_rows, auc};
use crate::session::{
    predict_inproc, predict_tcp_guest, predict_tcp_host, train_inproc, train_tcp_guest, train_tcp_host, InprocOptions,
};

#[derive(Debug, Parser)]
#[command(name = "secureboost", version, about = "Vertical federated gradient boosting over Paillier encryption")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train from a config file; writes one model shard per party.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Role in a tcp session: `guest` or `host:<k>`.
        #[arg(long, default_value = "guest", value_parser = parse_party)]
        party: Rank,
    },
    /// Score a dataset with trained shards.
    Predict {
        #[command(flatten)]
        session: PredictArgs,
        /// Output CSV of probabilities (guest only).
        #[arg(long)]
        out: PathBuf,
        /// Write raw margins instead of probabilities.
        #[arg(long)]
        raw: bool,
    },
    /// Score a labelled dataset and report AUC or accuracy.
    Eval {
        #[command(flatten)]
        session: PredictArgs,
    },
    /// Print the closed-form cipher cost of one tree, baseline vs optimized.
    CostEstimate {
        #[arg(long, default_value_t = 1_000_000)]
        instances: u64,
        #[arg(long, default_value_t = 2000)]
        features: u64,
        #[arg(long, default_value_t = 32)]
        bins: u64,
        #[arg(long, default_value_t = 5)]
        depth: u32,
        #[arg(long, default_value_t = 1024)]
        key_bits: u64,
        #[arg(long, default_value_t = DEFAULT_PRECISION)]
        precision: u32,
    },
    /// Generate a Paillier key pair and print its public parameters.
    Keygen {
        #[arg(long, default_value_t = 1024)]
        bits: u64,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the key pair (including the secret primes) as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset split vertically into guest and host CSVs.
    Synth {
        #[arg(long, default_value = "binary")]
        kind: String,
        #[arg(long, default_value_t = 2000)]
        rows: usize,
        #[arg(long, default_value_t = 20)]
        features: usize,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 2)]
        parties: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Directory holding guest.json and host_<k>.json.
    #[arg(long)]
    model_dir: PathBuf,
    /// Guest dataset (inproc, or the guest in tcp mode).
    #[arg(long)]
    guest: Option<PathBuf>,
    /// Host datasets in rank order (inproc), or this host's dataset (tcp).
    #[arg(long = "host")]
    hosts: Vec<PathBuf>,
    /// `guest` or `host:<k>`; with addresses or --listen selects tcp mode.
    #[arg(long, default_value = "guest", value_parser = parse_party)]
    party: Rank,
    /// tcp guest: host addresses in rank order.
    #[arg(long = "address")]
    addresses: Vec<String>,
    /// tcp host: address to listen on.
    #[arg(long)]
    listen: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn parse_party(s: &str) -> std::result::Result<Rank, String> {
    if s == "guest" {
        return Ok(GUEST);
    }
    s.strip_prefix("host:")
        .and_then(|k| k.parse::<Rank>().ok())
        .filter(|&k| k >= 1)
        .ok_or_else(|| format!("expected `guest` or `host:<k>` with k >= 1, got {s:?}"))
}

fn log_path(dir: &Path) -> PathBuf {
    dir.join("training_log.json")
}

#[derive(Serialize)]
struct LogFile<'a> {
    log: &'a TrainingLog,
    guest_messages: &'a secureboost_core::federation::MessageStats,
    guest_ops: &'a secureboost_core::counters::OpCounts,
    host_ops: Vec<secureboost_core::counters::OpCounts>,
    seconds: f64,
}

fn train(config: &Path, party: Rank) -> Result<()> {
    let cfg = TrainConfig::load(config)?;
    let params = cfg.params()?;
    let out = &cfg.output_dir;
    let patience = Duration::from_secs(cfg.timeout_secs);
    match (cfg.transport, party) {
        (TransportKind::Inproc, GUEST) => {
            let guest = load_dataset(&cfg.guest)?;
            let hosts = cfg.hosts.iter().map(|p| load_dataset(p)).collect::<Result<Vec<_>>>()?;
            let opts = InprocOptions { timeout: patience, ..Default::default() };
            let s = train_inproc(&guest, &hosts, &params, &opts)?;
            save_json(&guest_model_path(out), &s.guest.model)?;
            for h in &s.hosts {
                save_json(&host_model_path(out, h.model.party), &h.model)?;
            }
            save_json(
                &log_path(out),
                &LogFile {
                    log: &s.guest.log,
                    guest_messages: &s.guest.messages,
                    guest_ops: &s.guest.ops,
                    host_ops: s.hosts.iter().map(|h| h.ops).collect(),
                    seconds: s.seconds,
                },
            )?;
            report_training(&s.guest.log, s.seconds);
        }
        (TransportKind::Inproc, _) => return Err(Error::Config("--party host:<k> needs transport = \"tcp\"".into())),
        (TransportKind::Tcp, GUEST) => {
            let guest = load_dataset(&cfg.guest)?;
            let g = train_tcp_guest(&guest, &cfg.host_addresses, &params, patience)?;
            save_json(&guest_model_path(out), &g.model)?;
            let seconds = g.log.epochs.last().map_or(0.0, |e| e.seconds);
            save_json(
                &log_path(out),
                &LogFile { log: &g.log, guest_messages: &g.messages, guest_ops: &g.ops, host_ops: vec![], seconds },
            )?;
            report_training(&g.log, g.log.trees.iter().map(|t| t.seconds).sum());
        }
        (TransportKind::Tcp, k) => {
            let i = k as usize - 1;
            let (data, addr) = cfg
                .hosts
                .get(i)
                .zip(cfg.host_addresses.get(i))
                .ok_or_else(|| Error::Config(format!("no dataset/address configured for host {k}")))?;
            let h = train_tcp_host(&load_dataset(data)?, k, addr, params.seed)?;
            save_json(&host_model_path(out, k), &h.model)?;
            println!("host {k}: {} splits stored", h.model.splits.len());
        }
    }
    Ok(())
}

fn report_training(log: &TrainingLog, seconds: f64) {
    for e in &log.epochs {
        println!("epoch {:>3}  loss {:.6}", e.epoch, e.loss);
    }
    println!("{} trees in {:.1}s", log.trees.len(), seconds);
}

/// Runs the prediction session; `None` on a tcp host.
fn run_predict(a: &PredictArgs) -> Result<Option<(GuestModel, Prediction, PartyDataset)>> {
    if a.party != GUEST {
        let listen = a.listen.as_deref().ok_or_else(|| Error::Config("a tcp host needs --listen".into()))?;
        let [data] = a.hosts.as_slice() else {
            return Err(Error::Config("a tcp host takes exactly one --host dataset".into()));
        };
        let model = load_host_model(&host_model_path(&a.model_dir, a.party))?;
        predict_tcp_host(&model, &load_dataset(data)?, a.party, listen)?;
        return Ok(None);
    }
    let model = load_guest_model(&guest_model_path(&a.model_dir))?;
    let data = load_dataset(a.guest.as_deref().ok_or_else(|| Error::Config("--guest dataset required".into()))?)?;
    let pred = if a.addresses.is_empty() {
        let host_models = (1..=model.n_hosts)
            .map(|k| load_host_model(&host_model_path(&a.model_dir, k)))
            .collect::<Result<Vec<_>>>()?;
        let hosts = a.hosts.iter().map(|p| load_dataset(p)).collect::<Result<Vec<_>>>()?;
        predict_inproc(&model, &host_models, &data, &hosts, a.seed, &InprocOptions::default())?
    } else {
        predict_tcp_guest(&model, &data, &a.addresses, a.seed, Duration::from_secs(600))?
    };
    Ok(Some((model, pred, data)))
}

fn probabilities(model: &GuestModel, p: &Prediction) -> Vec<f64> {
    match model.objective {
        Objective::Binary => p.raw.iter().map(|&s| sigmoid(s)).collect(),
        Objective::Multiclass { .. } => p.raw.chunks(p.outputs).flat_map(softmax).collect(),
    }
}

fn cost_table(p: &CostParams) -> Result<String> {
    let base = estimate_baseline(p)?;
    let opt = estimate_optimized(p)?;
    let red = reduction(&base, &opt);
    let row = |name: &str, f: fn(&CostEstimate) -> f64| {
        format!("{name:<28}{:>16.6e}{:>16.6e}{:>11.2}%\n", f(&base), f(&opt), 100.0 * f(&red))
    };
    let mut s = format!("{:<28}{:>16}{:>16}{:>12}\n", "component", "baseline", "optimized", "reduction");
    s += &row("homomorphic additions", |c| c.comp);
    s += &row("encryptions+decryptions", |c| c.ende);
    s += &row("ciphertexts transferred", |c| c.comm);
    Ok(s)
}

#[derive(Serialize)]
struct KeyFile {
    key_bits: u64,
    fingerprint: String,
    n: String,
    p: String,
    q: String,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, party } => train(&config, party),
        Command::Predict { session, out, raw } => {
            if let Some((model, pred, _)) = run_predict(&session)? {
                let k = pred.outputs;
                let columns: Vec<String> = match model.objective {
                    Objective::Binary => vec![if raw { "margin".into() } else { "probability".into() }],
                    Objective::Multiclass { .. } => (0..k).map(|c| format!("class_{c}")).collect(),
                };
                let scores = if raw { pred.raw.clone() } else { probabilities(&model, &pred) };
                write_scores(&out, &pred.ids, &columns, &scores)?;
                println!("scored {} instances -> {}", pred.ids.len(), out.display());
            }
            Ok(())
        }
        Command::Eval { session } => {
            if let Some((model, pred, data)) = run_predict(&session)? {
                let aligned = data.align_to(&pred.ids)?;
                let labels = aligned.labels.ok_or_else(|| Error::Config("evaluation needs a labelled guest dataset".into()))?;
                match model.objective {
                    Objective::Binary => match auc(&labels, &pred.raw) {
                        Some(a) => println!("auc {a:.6}"),
                        None => println!("auc undefined: only one class present"),
                    },
                    Objective::Multiclass { .. } => {
                        println!("accuracy {:.6}", accuracy(&labels, &argmax_rows(&pred.raw, pred.outputs)))
                    }
                }
            }
            Ok(())
        }
        Command::CostEstimate { instances, features, bins, depth, key_bits, precision } => {
            let p = CostParams::for_key(instances, features, bins, depth, key_bits, precision)?;
            println!(
                "n_i={instances} n_f={features} n_b={bins} h={depth} key={key_bits} r={precision} -> eta_s={}\n",
                p.eta_s
            );
            print!("{}", cost_table(&p)?);
            Ok(())
        }
        Command::Keygen { bits, seed, out } => {
            let started = std::time::Instant::now();
            let keys = match seed {
                Some(s) => secureboost_core::paillier::keygen_seeded(bits, s)?,
                None => keygen(bits, &mut rand::rngs::OsRng)?,
            };
            let fingerprint = keys.public.fingerprint().to_string();
            println!(
                "{bits}-bit key {fingerprint}, plaintext capacity {} bits, generated in {:.2}s",
                keys.max_plaintext_bits(),
                started.elapsed().as_secs_f64()
            );
            if let Some(out) = out {
                let (p, q) = keys.secret.primes();
                let file = KeyFile {
                    key_bits: bits,
                    fingerprint,
                    n: keys.public.n().to_str_radix(16),
                    p: p.to_str_radix(16),
                    q: q.to_str_radix(16),
                };
                save_json(&out, &file)?;
            }
            Ok(())
        }
        Command::Synth { kind, rows, features, classes, parties, seed, out_dir } => {
            let data = match kind.as_str() {
                "binary" => crate::synth::binary(rows, features, 0.1, seed)?,
                "multiclass" => crate::synth::multiclass(rows, features, classes, seed)?,
                other => return Err(Error::Config(format!("unknown synthetic kind {other:?}"))),
            };
            if parties < 2 {
                return Err(Error::Config("need at least two parties".into()));
            }
            let parts = secureboost_core::data::vertical_split(&data, &vec![1.0 / parties as f64; parties])?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            for (i, part) in parts.iter().enumerate() {
                let name = if i == 0 { "guest.csv".to_string() } else { format!("host_{i}.csv") };
                write_csv(&out_dir.join(name), part)?;
            }
            println!("wrote {parties} party files to {}", out_dir.display());
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn party_syntax() {
        assert_eq!(parse_party("guest"), Ok(0));
        assert_eq!(parse_party("host:2"), Ok(2));
        assert!(parse_party("host:0").is_err());
        assert!(parse_party("host").is_err());
    }

    #[test]
    fn cost_table_shows_reductions() {
        let p = CostParams { n_i: 1_000_000, n_f: 2000, n_b: 32, h: 5, eta_s: 6 };
        let t = cost_table(&p).unwrap();
        // 1 − (5e9 + 2.048e6) / 2.0004096e10 = 0.74995
        assert!(t.contains("74.99%"), "{t}");
        assert!(t.contains("78.00%"), "{t}");
    }
}
