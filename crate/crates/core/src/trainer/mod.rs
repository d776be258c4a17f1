//! Mini-batch SGD over the plaintext, Beaver and FSS gradient gates.

mod dataset;

pub use dataset::{auc, load_csv, Dataset};

use std::fmt;
use std::str::FromStr;
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dealer::{Bundle, BundleId, BundleKind, BundleSource, Dealer, QueueSource, SegmentParams};
use crate::error::{Error, Result};
use crate::lrgate::{BatchInput, GateParams, Session};
use crate::ring::{FixedPointConfig, RingMatrix};
use crate::sharing::{share, PartyId, PrgSeed, ShareMatrix};
use crate::sigmoid::{sigmoid_eval, SigmoidVariant};
use crate::transport::{memory_pair, Channel, CommStats, Frame, Ledger, MsgTag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Plaintext,
    Ss,
    FssV1,
    FssV2,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Plaintext => "plaintext",
            Protocol::Ss => "ss",
            Protocol::FssV1 => "fss-v1",
            Protocol::FssV2 => "fss-v2",
        }
    }

    pub fn bundle_kind(self) -> Option<BundleKind> {
        match self {
            Protocol::Plaintext => None,
            Protocol::Ss => Some(BundleKind::Ss),
            Protocol::FssV1 => Some(BundleKind::V1),
            Protocol::FssV2 => Some(BundleKind::V2),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "plaintext" => Protocol::Plaintext,
            "ss" => Protocol::Ss,
            "fss-v1" => Protocol::FssV1,
            "fss-v2" => Protocol::FssV2,
            _ => return Err(Error::Config(format!("unknown protocol {s:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch: usize,
    pub lr: f64,
    pub epochs: u32,
    pub protocol: Protocol,
    pub segment: SegmentParams,
    pub fixed: FixedPointConfig,
    pub seed: u64,
    /// Stop once the AUC moves less than this between epochs.
    pub tol: Option<f64>,
    /// Fraction of rows held out for evaluation; 0 evaluates on the training set.
    pub holdout: f64,
    /// Append a constant-1 feature.
    pub bias: bool,
    /// Activation of the plaintext trainer.
    pub activation: SigmoidVariant,
    /// Round every plaintext intermediate to the fixed-point grid.
    pub quantize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch: 128,
            lr: 0.5,
            epochs: 1,
            protocol: Protocol::FssV1,
            segment: SegmentParams::default(),
            fixed: FixedPointConfig::default(),
            seed: 0,
            tol: None,
            holdout: 0.0,
            bias: true,
            activation: SigmoidVariant::Taylor1,
            quantize: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, rows: usize) -> Result<()> {
        self.fixed.validate()?;
        if self.batch == 0 || self.batch > rows {
            return Err(Error::Config(format!("batch {} does not fit {rows} rows", self.batch)));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::Config(format!("learning rate {} must be finite and non-negative", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("at least one epoch is required".into()));
        }
        if self.protocol == Protocol::FssV2 {
            self.segment.validate(&self.fixed)?;
        }
        Ok(())
    }

    fn root(&self) -> PrgSeed {
        PrgSeed::from_u64(self.seed)
    }

    /// Training and evaluation sets under this configuration.
    pub fn partition(&self, ds: &Dataset) -> Result<(Dataset, Dataset)> {
        if self.holdout == 0.0 {
            return Ok((ds.clone(), ds.clone()));
        }
        ds.split(self.holdout, &self.root().derive("holdout", 0))
    }

    pub fn width(&self, ds: &Dataset) -> usize {
        ds.dim + self.bias as usize
    }

    pub fn batches_per_epoch(&self, train_rows: usize) -> usize {
        train_rows / self.batch
    }

    /// The dealer that serves this run; `None` for plaintext.
    pub fn dealer(&self, ds: &Dataset) -> Option<Dealer> {
        Some(Dealer {
            seed: self.root().derive("dealer", 0),
            cfg: self.fixed,
            kind: self.protocol.bundle_kind()?,
            m: self.batch,
            n: self.width(ds),
            segment: self.segment,
        })
    }

    /// Row order of one epoch, truncated to whole batches.
    pub fn epoch_order(&self, epoch: u32, rows: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..rows).collect();
        idx.shuffle(&mut self.root().derive("shuffle", epoch as u64).rng());
        idx.truncate(self.batches_per_epoch(rows) * self.batch);
        idx
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub online_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub dataset: String,
    pub protocol: Protocol,
    pub rows: usize,
    pub features: usize,
    pub batch: usize,
    pub lr: f64,
    pub epochs_run: u32,
    pub batches_per_epoch: usize,
    pub weights: Vec<f64>,
    pub auc: f64,
    pub auc_history: Vec<f64>,
    /// Protocol traffic of this party.
    pub comm: CommStats,
    /// Evaluation traffic (weight reveals), outside `comm`.
    pub aux_comm: CommStats,
    /// SHA-256 of the frames this party sent.
    pub transcript: Option<String>,
    pub timings: Timings,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON with wall-clock fields zeroed, for reproducibility checks.
    pub fn canonical_json(&self) -> String {
        let mut r = self.clone();
        r.timings = Timings::default();
        serde_json::to_string(&r).expect("report serializes")
    }
}

fn scores(ds: &Dataset, w: &[f64], bias: bool) -> Vec<f64> {
    let x = ds.design(bias);
    x.chunks(w.len()).map(|r| r.iter().zip(w).map(|(a, b)| a * b).sum()).collect()
}

/// Plaintext SGD.
pub fn train_plaintext(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    let start = Instant::now();
    let (train, eval) = cfg.partition(ds)?;
    cfg.validate(train.rows())?;
    let n = cfg.width(ds);
    let x = train.design(cfg.bias);
    let q = |v: f64| -> Result<f64> {
        if cfg.quantize {
            Ok(cfg.fixed.decode(cfg.fixed.encode(v)?))
        } else {
            Ok(v)
        }
    };
    let mut w = vec![0.0; n];
    let mut history = Vec::new();
    let mut epochs_run = 0;
    let m = cfg.batch as f64;
    for epoch in 0..cfg.epochs {
        let order = cfg.epoch_order(epoch, train.rows());
        for rows in order.chunks(cfg.batch) {
            let mut g = vec![0.0; n];
            for &r in rows {
                let xr = &x[r * n..(r + 1) * n];
                let u = q(xr.iter().zip(&w).map(|(a, b)| a * b).sum())?;
                let resid = q(sigmoid_eval(cfg.activation, u))? - train.labels[r] as f64;
                for i in 0..n {
                    g[i] += resid * xr[i];
                }
            }
            for i in 0..n {
                w[i] -= q(cfg.lr / m * q(g[i])?)?;
            }
        }
        epochs_run += 1;
        if stop_early(cfg, &eval, &w, &mut history)? {
            break;
        }
    }
    let auc = auc(&scores(&eval, &w, cfg.bias), &eval.labels)?;
    Ok(TrainReport {
        dataset: ds.name.clone(),
        protocol: Protocol::Plaintext,
        rows: train.rows(),
        features: n,
        batch: cfg.batch,
        lr: cfg.lr,
        epochs_run,
        batches_per_epoch: cfg.batches_per_epoch(train.rows()),
        weights: w,
        auc,
        auc_history: history,
        comm: CommStats::default(),
        aux_comm: CommStats::default(),
        transcript: None,
        timings: Timings { online_seconds: 0.0, total_seconds: start.elapsed().as_secs_f64() },
    })
}

fn stop_early(cfg: &TrainConfig, eval: &Dataset, w: &[f64], history: &mut Vec<f64>) -> Result<bool> {
    let Some(tol) = cfg.tol else { return Ok(false) };
    let a = auc(&scores(eval, w, cfg.bias), &eval.labels)?;
    let done = history.last().is_some_and(|prev| (a - prev).abs() < tol);
    history.push(a);
    Ok(done)
}

fn reveal_aux(w: &ShareMatrix, channel: &mut Channel) -> Result<RingMatrix> {
    let ring = w.ring();
    let reply = channel.exchange_on(Frame::from_words(MsgTag::Reveal, ring, w.payload.data()), Ledger::Aux)?;
    let theirs = RingMatrix::from_vec(ring, w.payload.rows(), w.payload.cols(), reply.words(ring)?)?;
    w.payload.add(&theirs)
}

/// One party's side of secure training.
pub fn run_party(
    party: PartyId,
    ds: &Dataset,
    cfg: &TrainConfig,
    channel: &mut Channel,
    source: &mut dyn BundleSource,
) -> Result<TrainReport> {
    if cfg.protocol == Protocol::Plaintext {
        return Err(Error::Config("plaintext training has no parties".into()));
    }
    let start = Instant::now();
    let (train, eval) = cfg.partition(ds)?;
    cfg.validate(train.rows())?;
    let fixed = cfg.fixed;
    let ring = fixed.ring();
    let n = cfg.width(ds);
    let root = cfg.root();
    let pick = |(a, b): (ShareMatrix, ShareMatrix)| if party == PartyId::P0 { a } else { b };

    // input sharing, simulated from a common seed
    let x = RingMatrix::encode(train.rows(), n, &train.design(cfg.bias), &fixed)?;
    let x = pick(share(&x, &root.derive("data", 0)));
    let y: Vec<f64> = train.labels.iter().map(|&l| l as f64).collect();
    let y = pick(share(&RingMatrix::encode(train.rows(), 1, &y, &fixed)?, &root.derive("labels", 0)));
    let mut w = pick(share(&RingMatrix::zeros(ring, 1, n), &root.derive("weights", 0)));

    let params = GateParams { cfg: fixed, lr: cfg.lr, segment: cfg.segment };
    let mut session = Session::new(party, channel);
    let mut online = 0.0;
    let mut history = Vec::new();
    let mut epochs_run = 0;
    for epoch in 0..cfg.epochs {
        let order = cfg.epoch_order(epoch, train.rows());
        for (b, rows) in order.chunks(cfg.batch).enumerate() {
            let id = BundleId::new(epoch, b as u32);
            let bundle = source.fetch(id)?;
            let xb = x.select_rows(rows);
            let yb = y.select_rows(rows);
            let input = BatchInput { x: &xb, y: &yb, w: &w };
            let t = Instant::now();
            let dw = match (cfg.protocol, &bundle) {
                (Protocol::FssV1, Bundle::Lr(k)) => session.eval_v1(input, k, &params)?,
                (Protocol::FssV2, Bundle::Lr(k)) => session.eval_v2(input, k, &params)?,
                (Protocol::Ss, Bundle::Ss(t)) => session.eval_ss(input, t, &params)?,
                _ => return Err(Error::WrongBundle(format!("{id} does not fit protocol {}", cfg.protocol))),
            };
            w = w.sub(&dw)?;
            online += t.elapsed().as_secs_f64();
        }
        epochs_run += 1;
        if cfg.tol.is_some() {
            let plain = reveal_aux(&w, session.channel)?.decode(&fixed);
            if stop_early(cfg, &eval, &plain, &mut history)? {
                break;
            }
        }
    }

    let weights = reveal_aux(&w, session.channel)?.decode(&fixed);
    if let Some(v) = weights.iter().find(|v| v.abs() >= fixed.limit() / 2.0) {
        return Err(Error::OutOfRange { value: *v, limit: fixed.limit() / 2.0 });
    }
    let auc = auc(&scores(&eval, &weights, cfg.bias), &eval.labels)?;
    let channel = session.channel;
    Ok(TrainReport {
        dataset: ds.name.clone(),
        protocol: cfg.protocol,
        rows: train.rows(),
        features: n,
        batch: cfg.batch,
        lr: cfg.lr,
        epochs_run,
        batches_per_epoch: cfg.batches_per_epoch(train.rows()),
        weights,
        auc,
        auc_history: history,
        comm: channel.stats(),
        aux_comm: channel.aux_stats(),
        transcript: Some(channel.transcript_digest()),
        timings: Timings { online_seconds: online, total_seconds: start.elapsed().as_secs_f64() },
    })
}

/// Bundle ids in the order parties consume them.
pub fn schedule(cfg: &TrainConfig, train_rows: usize) -> impl Iterator<Item = BundleId> {
    let per = cfg.batches_per_epoch(train_rows) as u32;
    (0..cfg.epochs).flat_map(move |e| (0..per).map(move |b| BundleId::new(e, b)))
}

/// Dealer and both parties in one process over the in-memory transport.
/// Returns party 0's report.
pub fn simulate(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    let Some(dealer) = cfg.dealer(ds) else {
        return train_plaintext(ds, cfg);
    };
    let (train, _) = cfg.partition(ds)?;
    cfg.validate(train.rows())?;
    let ids: Vec<BundleId> = schedule(cfg, train.rows()).collect();
    let (tx0, rx0) = mpsc::sync_channel::<Bundle>(2);
    let (tx1, rx1) = mpsc::sync_channel::<Bundle>(2);
    let dealer_thread = thread::spawn(move || -> Result<()> {
        for id in ids {
            let (a, b) = dealer.pair(id)?;
            // a closed queue means the parties stopped early
            if tx0.send(a).is_err() || tx1.send(b).is_err() {
                break;
            }
        }
        Ok(())
    });
    let (mut c0, mut c1) = memory_pair();
    let (ds1, cfg1) = (ds.clone(), cfg.clone());
    let p1 = thread::spawn(move || {
        let mut src = QueueSource { rx: rx1 };
        run_party(PartyId::P1, &ds1, &cfg1, &mut c1, &mut src)
    });
    let r0 = {
        let mut src = QueueSource { rx: rx0 };
        run_party(PartyId::P0, ds, cfg, &mut c0, &mut src)
    };
    drop(c0);
    let r1 = p1.join().map_err(|_| Error::Disconnected)?;
    dealer_thread.join().map_err(|_| Error::Disconnected)??;
    let (r0, r1) = (r0?, r1?);
    if r0.weights != r1.weights || r0.comm != r1.comm {
        return Err(Error::Frame("parties finished with different views".into()));
    }
    Ok(r0)
}
