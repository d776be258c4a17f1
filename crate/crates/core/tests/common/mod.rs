#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;
use std::thread;

use fsslr::dealer::{gen_ss_triples, gen_v1_bundle, gen_v2_bundle, BundleId, SegmentParams};
use fsslr::lrgate::{BatchInput, GateParams, Session};
use fsslr::ring::{FixedPointConfig, RingMatrix};
use fsslr::sharing::{reconstruct, share, PartyId, PrgSeed, ShareMatrix};
use fsslr::transport::{memory_pair, Channel, CommStats};

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

/// Runs `f` as both parties over an in-memory pair.
pub fn two_party<T, F>(f: F) -> (T, T, CommStats)
where
    T: Send + 'static,
    F: Fn(PartyId, &mut Channel) -> T + Send + Sync + 'static,
{
    let f = Arc::new(f);
    let (mut c0, mut c1) = memory_pair();
    let g = Arc::clone(&f);
    let h = thread::spawn(move || g(PartyId::P1, &mut c1));
    let a = f(PartyId::P0, &mut c0);
    let b = h.join().expect("party 1 panicked");
    (a, b, c0.stats())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gate {
    V1,
    V2,
    Ss,
}

/// Shares a plaintext batch, evaluates `gate` and reconstructs the update.
pub fn gate_update(
    gate: Gate,
    x: &[f64],
    y: &[f64],
    w: &[f64],
    (m, n): (usize, usize),
    lr: f64,
    seed: u64,
) -> (Vec<f64>, CommStats) {
    let cfg = FixedPointConfig::default();
    let segment = SegmentParams::default();
    let params = GateParams { cfg, lr, segment };
    let enc = |r, c, v: &[f64]| RingMatrix::encode(r, c, v, &cfg).unwrap();
    let root = PrgSeed::from_u64(seed);
    let xs = share(&enc(m, n, x), &root.derive("x", 0));
    let ys = share(&enc(m, 1, y), &root.derive("y", 0));
    let ws = share(&enc(1, n, w), &root.derive("w", 0));
    let bseed = root.derive("bundle", 0);
    let id = BundleId::new(0, 0);
    let pick =
        move |p: PartyId, s: &(ShareMatrix, ShareMatrix)| if p == PartyId::P0 { s.0.clone() } else { s.1.clone() };
    let (g0, g1, stats) = two_party(move |p, ch| {
        let (x, y, w) = (pick(p, &xs), pick(p, &ys), pick(p, &ws));
        let input = BatchInput { x: &x, y: &y, w: &w };
        let mut s = Session::new(p, ch);
        let ring = cfg.ring();
        match gate {
            Gate::V1 => {
                let (a, b) = gen_v1_bundle(id, m, n, ring, &bseed).unwrap();
                s.eval_v1(input, &mine(p, a, b), &params).unwrap()
            }
            Gate::V2 => {
                let (a, b) = gen_v2_bundle(id, m, n, segment, &cfg, &bseed).unwrap();
                s.eval_v2(input, &mine(p, a, b), &params).unwrap()
            }
            Gate::Ss => {
                let (a, b) = gen_ss_triples(id, m, n, ring, &bseed).unwrap();
                s.eval_ss(input, &mine(p, a, b), &params).unwrap()
            }
        }
    });
    (reconstruct(&g0, &g1).unwrap().decode(&cfg), stats)
}

fn mine<T>(p: PartyId, a: T, b: T) -> T {
    if p == PartyId::P0 {
        a
    } else {
        b
    }
}

pub fn quantize(v: &[f64]) -> Vec<f64> {
    let cfg = FixedPointConfig::default();
    v.iter().map(|&a| cfg.decode(cfg.encode(a).unwrap())).collect()
}

/// `lr/m * sum_j (act(w . x_j) - y_j) x_j` in floating point on quantized inputs.
pub fn float_update(
    x: &[f64],
    y: &[f64],
    w: &[f64],
    (m, n): (usize, usize),
    lr: f64,
    act: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let (x, y, w) = (quantize(x), quantize(y), quantize(w));
    let mut g = vec![0.0; n];
    for j in 0..m {
        let row = &x[j * n..(j + 1) * n];
        let u: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum();
        let r = act(u) - y[j];
        for i in 0..n {
            g[i] += lr / m as f64 * r * row[i];
        }
    }
    g
}

pub fn taylor(u: f64) -> f64 {
    0.5 + 0.25 * u
}

/// Three-piece activation of the segmented gate at its default parameters.
pub fn segmented(u: f64) -> f64 {
    if u < -4.0 {
        0.0
    } else if u < 4.0 {
        0.5 + 0.25 * u
    } else {
        1.0
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}
