//! Command-line front end.

use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dealer::{bundle_file_name, BundleSource, DirSource, InlineSource, Manifest, SegmentParams};
use crate::error::{Error, Result};
use crate::ring::FixedPointConfig;
use crate::ring::RingMatrix;
use crate::sharing::{PartyId, PrgSeed};
use crate::sigmoid::{
    approx_error, approx_error_fixed, benchmark_grid, sigmoid_eval, sigmoid_eval_fixed, SigmoidVariant,
};
use crate::trainer::{load_csv, run_party, schedule, simulate, Dataset, Protocol, TrainConfig, TrainReport};
use crate::transport::{tcp_accept, tcp_connect};

#[derive(Debug, Parser)]
#[command(name = "fsslr", version, about = "Two-party secure logistic regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the dealer and both parties in one process.
    Simulate(SimulateArgs),
    /// Write every party's preprocessing to a directory.
    Dealer(DealerArgs),
    /// Run one party over TCP.
    Party(PartyArgs),
    /// Approximation error and timing of the sigmoid variants.
    SigmoidBench(SigmoidBenchArgs),
    /// Online communication and time on synthetic data.
    CommBench(CommBenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Label column name; defaults to the last column.
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long, default_value = "fss-v1")]
    pub protocol: Protocol,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 1)]
    pub epochs: u32,
    /// Half-width of the linear segment.
    #[arg(long, default_value_t = 4.0)]
    pub epsilon: f64,
    /// The linear segment's slope is 2^-k.
    #[arg(long, default_value_t = 2)]
    pub slope_log2: u32,
    #[arg(long, default_value_t = 64)]
    pub ell: u32,
    #[arg(long, default_value_t = 12)]
    pub frac: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stop when the AUC changes less than this between epochs.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub holdout: f64,
    #[arg(long)]
    pub no_bias: bool,
    /// Plaintext activation.
    #[arg(long, default_value = "taylor1")]
    pub activation: SigmoidVariant,
    /// Round plaintext intermediates to the fixed-point grid.
    #[arg(long)]
    pub quantize: bool,
}

impl TrainArgs {
    pub fn config(&self) -> Result<TrainConfig> {
        let fixed = FixedPointConfig::new(self.ell, self.frac)?;
        let segment = SegmentParams { epsilon: self.epsilon, slope_log2: self.slope_log2 };
        Ok(TrainConfig {
            batch: self.batch,
            lr: self.lr,
            epochs: self.epochs,
            protocol: self.protocol,
            segment,
            fixed,
            seed: self.seed,
            tol: self.tol,
            holdout: self.holdout,
            bias: !self.no_bias,
            activation: self.activation,
            quantize: self.quantize,
        })
    }

    pub fn dataset(&self) -> Result<Dataset> {
        load_csv(&self.dataset, self.label.as_deref())
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DealerArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("addr").required(true).args(["listen", "connect"])))]
pub struct PartyArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub role: u8,
    #[arg(long)]
    pub listen: Option<String>,
    #[arg(long)]
    pub connect: Option<String>,
    /// Directory written by `dealer`; without it the dealer runs inline.
    #[arg(long)]
    pub bundles: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SigmoidBenchArgs {
    #[arg(long, default_value_t = 64)]
    pub ell: u32,
    #[arg(long, default_value_t = 12)]
    pub frac: u32,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CommBenchArgs {
    /// Comma-separated `rows x features` pairs.
    #[arg(long, value_delimiter = ',', default_value = "1000x100,10000x100")]
    pub sizes: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "ss,fss-v1")]
    pub protocols: Vec<Protocol>,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 1)]
    pub epochs: u32,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Exit status for an error: 2 for bad input, 1 for protocol failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Dataset(_) | Error::Csv(_) | Error::Io(_) => 2,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => {
            let ds = a.train.dataset()?;
            let report = simulate(&ds, &a.train.config()?)?;
            info!("{} {}: auc {:.6}, {} rounds", report.dataset, report.protocol, report.auc, report.comm.rounds);
            emit(a.output.as_deref(), &report.to_json())
        }
        Command::Dealer(a) => dealer(&a),
        Command::Party(a) => party(&a),
        Command::SigmoidBench(a) => emit(a.output.as_deref(), &sigmoid_bench(&FixedPointConfig::new(a.ell, a.frac)?)?),
        Command::CommBench(a) => emit(a.output.as_deref(), &comm_bench(&a)?),
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                out.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn manifest(cfg: &TrainConfig, ds: &Dataset, rows: usize) -> Result<Manifest> {
    let dealer = cfg.dealer(ds).ok_or_else(|| Error::Config("plaintext training needs no dealer".into()))?;
    Ok(Manifest {
        seed: cfg.seed.to_string(),
        kind: dealer.kind,
        m: dealer.m,
        n: dealer.n,
        epsilon: cfg.segment.epsilon,
        slope_log2: cfg.segment.slope_log2,
        ell: cfg.fixed.ell,
        frac: cfg.fixed.frac,
        epochs: cfg.epochs,
        batches_per_epoch: cfg.batches_per_epoch(rows) as u32,
    })
}

fn dealer(a: &DealerArgs) -> Result<()> {
    let ds = a.train.dataset()?;
    let cfg = a.train.config()?;
    let (train, _) = cfg.partition(&ds)?;
    cfg.validate(train.rows())?;
    let man = manifest(&cfg, &ds, train.rows())?;
    let dealer = cfg.dealer(&ds).expect("checked by manifest");
    fs::create_dir_all(&a.out_dir)?;
    let mut count = 0;
    for id in schedule(&cfg, train.rows()) {
        let (b0, b1) = dealer.pair(id)?;
        b0.write_file(&a.out_dir.join(bundle_file_name(PartyId::P0, id)))?;
        b1.write_file(&a.out_dir.join(bundle_file_name(PartyId::P1, id)))?;
        count += 1;
    }
    let json = serde_json::to_string_pretty(&man).expect("manifest serializes");
    fs::write(a.out_dir.join("manifest.json"), json)?;
    info!("wrote {count} bundle pairs to {}", a.out_dir.display());
    Ok(())
}

fn party(a: &PartyArgs) -> Result<()> {
    let ds = a.train.dataset()?;
    let cfg = a.train.config()?;
    if cfg.protocol == Protocol::Plaintext {
        return Err(Error::Config("party needs a secure protocol".into()));
    }
    let party = PartyId::from_bit(a.role)?;
    let mut source: Box<dyn BundleSource> = match &a.bundles {
        Some(dir) => {
            let (train, _) = cfg.partition(&ds)?;
            let want = manifest(&cfg, &ds, train.rows())?;
            let text = fs::read_to_string(dir.join("manifest.json"))?;
            let got: Manifest =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("manifest.json: {e}")))?;
            if got != want {
                return Err(Error::Config(format!("bundles in {} were made for another run", dir.display())));
            }
            Box::new(DirSource { dir: dir.clone(), party })
        }
        None => Box::new(InlineSource { dealer: cfg.dealer(&ds).expect("secure protocol"), party }),
    };
    let mut channel = match (&a.listen, &a.connect) {
        (Some(addr), _) => {
            let listener = TcpListener::bind(addr)?;
            info!("party {party} listening on {addr}");
            tcp_accept(&listener)?
        }
        (None, Some(addr)) => tcp_connect(addr, 100)?,
        (None, None) => return Err(Error::Config("party needs --listen or --connect".into())),
    };
    let report = run_party(party, &ds, &cfg, &mut channel, source.as_mut())?;
    emit(a.output.as_deref(), &report.to_json())
}

/// CSV: variant, plaintext error, fixed-point error, timings in ms.
pub fn sigmoid_bench(cfg: &FixedPointConfig) -> Result<String> {
    let grid = benchmark_grid();
    let x = RingMatrix::encode(1, grid.len(), &grid, cfg)?;
    let mut out = String::from("variant,plain_error,fixed_error,plain_ms,fixed_ms\n");
    for v in SigmoidVariant::approximations().into_iter().chain([SigmoidVariant::Exact]) {
        let t = Instant::now();
        let s: f64 = grid.iter().map(|&g| sigmoid_eval(v, g)).sum();
        std::hint::black_box(s);
        let plain_ms = t.elapsed().as_secs_f64() * 1e3;
        let (fixed_err, fixed_ms) = if v == SigmoidVariant::Exact {
            (String::new(), String::new())
        } else {
            let t = Instant::now();
            std::hint::black_box(sigmoid_eval_fixed(v, &x, cfg)?);
            let ms = t.elapsed().as_secs_f64() * 1e3;
            (format!("{:.6}", approx_error_fixed(v, cfg)?), format!("{ms:.3}"))
        };
        out += &format!("{v},{:.6},{fixed_err},{plain_ms:.3},{fixed_ms}\n", approx_error(v));
    }
    Ok(out)
}

/// Standard-normal features labelled by a random hyperplane.
pub fn synthetic(rows: usize, dim: usize, seed: u64) -> Result<Dataset> {
    let mut rng = PrgSeed::from_u64(seed).derive("synthetic", 0).rng();
    let plane: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let raw: Vec<f64> = (0..rows * dim).map(|_| rng.sample(StandardNormal)).collect();
    let mut labels: Vec<u8> =
        raw.chunks(dim).map(|r| (r.iter().zip(&plane).map(|(a, b)| a * b).sum::<f64>() > 0.0) as u8).collect();
    // keep both classes present for the AUC
    if let [first, second, ..] = labels.as_mut_slice() {
        *first = 0;
        *second = 1;
    }
    Dataset::from_raw(&format!("synthetic_{rows}x{dim}"), raw, labels, dim)
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("size {s:?} is not ROWSxFEATURES"));
    let (r, d) = s.trim().split_once('x').ok_or_else(bad)?;
    Ok((r.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?))
}

pub fn comm_bench_row(rows: usize, dim: usize, protocol: Protocol, a: &CommBenchArgs) -> Result<TrainReport> {
    let ds = synthetic(rows, dim, a.seed)?;
    let cfg = TrainConfig {
        batch: a.batch,
        lr: a.lr,
        epochs: a.epochs,
        protocol,
        seed: a.seed,
        bias: false,
        ..TrainConfig::default()
    };
    simulate(&ds, &cfg)
}

/// CSV: n, d, protocol, online_s, total_s, bytes, rounds.
pub fn comm_bench(a: &CommBenchArgs) -> Result<String> {
    let mut out = String::from("n,d,protocol,online_s,total_s,bytes,rounds\n");
    for s in &a.sizes {
        let (rows, dim) = parse_size(s)?;
        for &p in &a.protocols {
            if p == Protocol::Plaintext {
                return Err(Error::Config("comm-bench compares secure protocols only".into()));
            }
            let r = comm_bench_row(rows, dim, p, a)?;
            info!("{rows}x{dim} {p}: {} bytes in {} rounds", r.comm.bytes_sent, r.comm.rounds);
            out += &format!(
                "{rows},{dim},{p},{:.4},{:.4},{},{}\n",
                r.timings.online_seconds, r.timings.total_seconds, r.comm.bytes_sent, r.comm.rounds
            );
        }
    }
    Ok(out)
}
