//! Offline phase: masks, correlated randomness, comparison keys and Beaver
//! triples, dealt per (epoch, batch).

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fss::{mic_gen_payloads, Interval, MicKey};
use crate::ring::{FixedPointConfig, Ring, RingMatrix};
use crate::sharing::{PartyId, Prg, PrgSeed, ShareMatrix};
use crate::transport::{Frame, MsgTag, DEFAULT_MAX_FRAME};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BundleId {
    pub epoch: u32,
    pub batch: u32,
}

impl BundleId {
    pub fn new(epoch: u32, batch: u32) -> Self {
        BundleId { epoch, batch }
    }

    fn stream(&self) -> u64 {
        ((self.epoch as u64) << 32) | self.batch as u64
    }
}

impl fmt::Display for BundleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch {} batch {}", self.epoch, self.batch)
    }
}

/// Segmented activation parameters: threshold `epsilon` and slope `2^-slope_log2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub epsilon: f64,
    pub slope_log2: u32,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams { epsilon: 4.0, slope_log2: 2 }
    }
}

impl SegmentParams {
    /// Slope 0.125 with bounds at +-4.
    pub fn eighth() -> Self {
        SegmentParams { epsilon: 4.0, slope_log2: 3 }
    }

    pub fn slope(&self) -> f64 {
        (-(self.slope_log2 as f64)).exp2()
    }

    pub fn validate(&self, cfg: &FixedPointConfig) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config(format!("segment threshold must be positive, got {}", self.epsilon)));
        }
        if self.slope_log2 == 0 || self.slope_log2 > 8 {
            return Err(Error::Config(format!("slope exponent {} outside 1..=8", self.slope_log2)));
        }
        cfg.encode(self.epsilon)?;
        Ok(())
    }

    /// The three segments (-inf, -eps), [-eps, eps), [eps, inf) in the offset
    /// domain u + 2^(ell-1), where signed order matches unsigned order.
    pub fn offset_intervals(&self, cfg: &FixedPointConfig) -> Result<[Interval; 3]> {
        self.validate(cfg)?;
        let ring = cfg.ring();
        let h = 1u64 << (cfg.ell - 1);
        let e = cfg.encode(self.epsilon)?;
        Ok([Interval::new(0, h - e - 1), Interval::new(h - e, h + e - 1), Interval::new(h + e, ring.mask())])
    }
}

/// Shares of the comparison-gate material for the segmented gate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentKeys {
    /// Share of the forward mask, `1 x m`.
    pub rho: RingMatrix,
    /// One key per batch element; intervals are the middle and upper segment.
    pub keys: Vec<MicKey>,
    pub epsilon: u64,
    pub slope_log2: u32,
}

/// One party's preprocessing for one batch of the FSS gates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LrKeyBundle {
    pub id: BundleId,
    pub party: PartyId,
    pub m: usize,
    pub n: usize,
    pub r1: RingMatrix,
    pub r2: RingMatrix,
    pub r3: RingMatrix,
    pub c1: RingMatrix,
    /// `n x (m*n)`, entry `[k, j*n + i] = r2[k] * r1[j, i]`.
    pub c2: RingMatrix,
    pub c3: RingMatrix,
    pub c4: RingMatrix,
    pub c5: RingMatrix,
    pub segment: Option<SegmentKeys>,
}

impl LrKeyBundle {
    pub fn share(&self, m: &RingMatrix) -> ShareMatrix {
        ShareMatrix::new(self.party, m.clone())
    }

    /// Correlated ring elements excluding the c2 tensor and comparison keys.
    pub fn correlated_elements(&self) -> u64 {
        [&self.r1, &self.r2, &self.r3, &self.c1, &self.c3, &self.c4, &self.c5].iter().map(|m| m.len() as u64).sum()
    }

    pub fn dcf_key_count(&self) -> usize {
        self.segment.as_ref().map_or(0, |s| s.keys.iter().map(MicKey::dcf_key_count).sum())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeaverTriple {
    pub a: RingMatrix,
    pub b: RingMatrix,
    pub c: RingMatrix,
}

/// Triples for the two products of the baseline. Both triples mask the data
/// with the same matrix, so one opening of `x - A` serves both products.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsTriples {
    pub id: BundleId,
    pub party: PartyId,
    pub m: usize,
    pub n: usize,
    /// `a: 1 x n` (weights), `b: n x m` (data mask, transposed), `c: 1 x m`.
    pub forward: BeaverTriple,
    /// `a: 1 x m` (residual), `b: m x n` (data mask), `c: 1 x n`.
    pub backward: BeaverTriple,
}

impl SsTriples {
    pub fn elements(&self) -> u64 {
        [&self.forward, &self.backward].iter().map(|t| (t.a.len() + t.b.len() + t.c.len()) as u64).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bundle {
    Lr(LrKeyBundle),
    Ss(SsTriples),
}

impl Bundle {
    pub fn id(&self) -> BundleId {
        match self {
            Bundle::Lr(b) => b.id,
            Bundle::Ss(b) => b.id,
        }
    }

    pub fn party(&self) -> PartyId {
        match self {
            Bundle::Lr(b) => b.party,
            Bundle::Ss(b) => b.party,
        }
    }

    pub fn to_frame(&self) -> Result<Frame> {
        Ok(Frame::new(MsgTag::Bundle, bincode::serialize(self)?))
    }

    pub fn from_frame(frame: &Frame) -> Result<Self> {
        if frame.tag != MsgTag::Bundle as u8 {
            return Err(Error::TagMismatch { expected: MsgTag::Bundle as u8, received: frame.tag });
        }
        Ok(bincode::deserialize(&frame.body)?)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_frame()?.encode())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Bundle::from_frame(&Frame::decode(&bytes, DEFAULT_MAX_FRAME)?)
    }
}

fn split(prg: &mut Prg, x: &RingMatrix) -> (RingMatrix, RingMatrix) {
    let s0 = prg.ring_matrix(x.ring(), x.rows(), x.cols());
    let s1 = x.sub(&s0).expect("same shape");
    (s0, s1)
}

/// `n x (m*n)` tensor with `[k, j*n + i] = r2[k] * r1[j, i]`.
pub fn c2_tensor(r1: &RingMatrix, r2: &RingMatrix) -> RingMatrix {
    let ring = r1.ring();
    let (m, n) = r1.shape();
    RingMatrix::from_fn(ring, n, m * n, |k, col| ring.mul(r2.get(0, k), r1.get(col / n, col % n)))
}

/// Contracts a c2 share against the public `x'`: position `i` holds
/// `sum_{j,k} x'[j,k] * c2[k, j*n + i]`, a share of `r2 x'^T r1`.
pub fn contract_c2(c2: &ShareMatrix, x_prime: &RingMatrix) -> Result<ShareMatrix> {
    let (m, n) = x_prime.shape();
    if c2.shape() != (n, m * n) {
        return Err(Error::Shape(format!("c2 share is {:?}, expected {n}x{} for x' of {m}x{n}", c2.shape(), m * n)));
    }
    let ring = x_prime.ring();
    let mut out = vec![0u64; n];
    let t = &c2.payload;
    for j in 0..m {
        for k in 0..n {
            let coeff = x_prime.get(j, k);
            if coeff == 0 {
                continue;
            }
            let seg = &t.row(k)[j * n..(j + 1) * n];
            for (o, &v) in out.iter_mut().zip(seg) {
                *o = o.wrapping_add(coeff.wrapping_mul(v));
            }
        }
    }
    Ok(ShareMatrix::new(c2.party, RingMatrix::from_vec(ring, 1, n, out)?))
}

struct V1Plain {
    r1: RingMatrix,
    r2: RingMatrix,
    r3: RingMatrix,
    c1: RingMatrix,
    c2: RingMatrix,
    c3: RingMatrix,
    c4: RingMatrix,
    c5: RingMatrix,
}

fn v1_plain(ring: Ring, m: usize, n: usize, prg: &mut Prg) -> V1Plain {
    let r1 = prg.ring_matrix(ring, m, n);
    let r2 = prg.ring_matrix(ring, 1, n);
    let r3 = prg.ring_matrix(ring, m, 1);
    let c1 = r2.mat_mul(&r1.transpose()).expect("shapes");
    let c3 = c1.mat_mul(&r1).expect("shapes");
    let c4 = r3.transpose().mat_mul(&r1).expect("shapes");
    let c5 = r1.transpose().mat_mul(&r1).expect("shapes");
    let c2 = c2_tensor(&r1, &r2);
    V1Plain { r1, r2, r3, c1, c2, c3, c4, c5 }
}

fn split_v1(id: BundleId, m: usize, n: usize, p: &V1Plain, prg: &mut Prg) -> (LrKeyBundle, LrKeyBundle) {
    let mut pairs = [&p.r1, &p.r2, &p.r3, &p.c1, &p.c2, &p.c3, &p.c4, &p.c5].map(|x| split(prg, x)).into_iter();
    let mut next = || pairs.next().expect("eight matrices");
    let (r1, r2, r3, c1, c2, c3, c4, c5) = (next(), next(), next(), next(), next(), next(), next(), next());
    let make = |party: PartyId, pick: fn(&(RingMatrix, RingMatrix)) -> RingMatrix| LrKeyBundle {
        id,
        party,
        m,
        n,
        r1: pick(&r1),
        r2: pick(&r2),
        r3: pick(&r3),
        c1: pick(&c1),
        c2: pick(&c2),
        c3: pick(&c3),
        c4: pick(&c4),
        c5: pick(&c5),
        segment: None,
    };
    (make(PartyId::P0, |p| p.0.clone()), make(PartyId::P1, |p| p.1.clone()))
}

fn check_dims(m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::Shape(format!("batch dimensions must be positive, got {m}x{n}")));
    }
    Ok(())
}

pub fn gen_v1_bundle(
    id: BundleId,
    m: usize,
    n: usize,
    ring: Ring,
    seed: &PrgSeed,
) -> Result<(LrKeyBundle, LrKeyBundle)> {
    check_dims(m, n)?;
    let mut prg = seed.rng();
    let plain = v1_plain(ring, m, n, &mut prg);
    Ok(split_v1(id, m, n, &plain, &mut prg))
}

/// V1 material plus, per batch element, a comparison key over the offset
/// forward domain with payloads (1, rho, r1_j, rho*r1_j) for the middle
/// segment and (1, r1_j) for the upper one.
pub fn gen_v2_bundle(
    id: BundleId,
    m: usize,
    n: usize,
    segment: SegmentParams,
    cfg: &FixedPointConfig,
    seed: &PrgSeed,
) -> Result<(LrKeyBundle, LrKeyBundle)> {
    check_dims(m, n)?;
    let ring = cfg.ring();
    let [_, mid, upper] = segment.offset_intervals(cfg)?;
    let mut prg = seed.rng();
    let plain = v1_plain(ring, m, n, &mut prg);
    let (mut b0, mut b1) = split_v1(id, m, n, &plain, &mut prg);

    let rho = prg.ring_matrix(ring, 1, m);
    let (rho0, rho1) = split(&mut prg, &rho);
    let h = 1u64 << (cfg.ell - 1);
    let mut keys0 = Vec::with_capacity(m);
    let mut keys1 = Vec::with_capacity(m);
    for j in 0..m {
        let rj = rho.get(0, j);
        let row = plain.r1.row(j);
        let mut mid_payload = Vec::with_capacity(2 * n + 2);
        mid_payload.push(1);
        mid_payload.push(rj);
        mid_payload.extend_from_slice(row);
        mid_payload.extend(row.iter().map(|&r| ring.mul(rj, r)));
        let mut up_payload = Vec::with_capacity(n + 1);
        up_payload.push(1);
        up_payload.extend_from_slice(row);
        let zeros = vec![vec![0; 2 * n + 2], vec![0; n + 1]];
        let (k0, k1) = mic_gen_payloads(
            cfg.ell,
            ring,
            &[mid, upper],
            ring.sub(rj, h),
            &[mid_payload, up_payload],
            &zeros,
            &mut prg,
        )?;
        keys0.push(k0);
        keys1.push(k1);
    }
    let eps = cfg.encode(segment.epsilon)?;
    b0.segment = Some(SegmentKeys { rho: rho0, keys: keys0, epsilon: eps, slope_log2: segment.slope_log2 });
    b1.segment = Some(SegmentKeys { rho: rho1, keys: keys1, epsilon: eps, slope_log2: segment.slope_log2 });
    Ok((b0, b1))
}

/// Generic matrix triple `C = A B` for the given shapes.
pub fn gen_beaver(
    ring: Ring,
    a_shape: (usize, usize),
    b_shape: (usize, usize),
    seed: &PrgSeed,
) -> Result<(BeaverTriple, BeaverTriple)> {
    let mut prg = seed.rng();
    let a = prg.ring_matrix(ring, a_shape.0, a_shape.1);
    let b = prg.ring_matrix(ring, b_shape.0, b_shape.1);
    let c = a.mat_mul(&b)?;
    Ok(triple_shares(&mut prg, &a, &b, &c))
}

fn triple_shares(prg: &mut Prg, a: &RingMatrix, b: &RingMatrix, c: &RingMatrix) -> (BeaverTriple, BeaverTriple) {
    let (a0, a1) = split(prg, a);
    let (b0, b1) = split(prg, b);
    let (c0, c1) = split(prg, c);
    (BeaverTriple { a: a0, b: b0, c: c0 }, BeaverTriple { a: a1, b: b1, c: c1 })
}

/// Triples for `(1 x n)(n x m)` and `(1 x m)(m x n)` sharing one data mask.
pub fn gen_ss_triples(id: BundleId, m: usize, n: usize, ring: Ring, seed: &PrgSeed) -> Result<(SsTriples, SsTriples)> {
    check_dims(m, n)?;
    let mut prg = seed.rng();
    let ax = prg.ring_matrix(ring, m, n);
    let aw = prg.ring_matrix(ring, 1, n);
    let ay = prg.ring_matrix(ring, 1, m);
    let axt = ax.transpose();
    let cf = aw.mat_mul(&axt)?;
    let cb = ay.mat_mul(&ax)?;
    let (f0, f1) = triple_shares(&mut prg, &aw, &axt, &cf);
    let (ay0, ay1) = split(&mut prg, &ay);
    let (cb0, cb1) = split(&mut prg, &cb);
    let b0 = BeaverTriple { a: ay0, b: f0.b.transpose(), c: cb0 };
    let b1 = BeaverTriple { a: ay1, b: f1.b.transpose(), c: cb1 };
    let make = |party, forward, backward| SsTriples { id, party, m, n, forward, backward };
    Ok((make(PartyId::P0, f0, b0), make(PartyId::P1, f1, b1)))
}

/// Online elements opened per batch.
pub fn v1_online_elements(m: usize, n: usize) -> u64 {
    (m * n + n + m) as u64
}

pub fn v2_online_elements(m: usize, n: usize) -> u64 {
    (m * n + n + 2 * m) as u64
}

pub fn ss_online_elements(m: usize, n: usize) -> u64 {
    (m * n + n + m) as u64
}

/// Elements dealt per party per batch for the baseline triples.
pub fn ss_offline_elements(m: usize, n: usize) -> u64 {
    (2 * m * n + 2 * n + 2 * m) as u64
}

/// Elements of r1, r2, r3, c1, c3, c4, c5 dealt per party per batch.
pub fn v1_offline_elements(m: usize, n: usize) -> u64 {
    (m * n + n * n + 3 * n + 2 * m) as u64
}

/// Size of the c2 tensor, accounted separately.
pub fn c2_elements(m: usize, n: usize) -> u64 {
    (n * m * n) as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BundleKind {
    V1,
    V2,
    Ss,
}

/// Deterministic dealer: every bundle is a function of (seed, id).
#[derive(Clone, Debug)]
pub struct Dealer {
    pub seed: PrgSeed,
    pub cfg: FixedPointConfig,
    pub kind: BundleKind,
    pub m: usize,
    pub n: usize,
    pub segment: SegmentParams,
}

impl Dealer {
    pub fn pair(&self, id: BundleId) -> Result<(Bundle, Bundle)> {
        let seed = self.seed.derive("bundle", id.stream());
        let ring = self.cfg.ring();
        Ok(match self.kind {
            BundleKind::V1 => {
                let (a, b) = gen_v1_bundle(id, self.m, self.n, ring, &seed)?;
                (Bundle::Lr(a), Bundle::Lr(b))
            }
            BundleKind::V2 => {
                let (a, b) = gen_v2_bundle(id, self.m, self.n, self.segment, &self.cfg, &seed)?;
                (Bundle::Lr(a), Bundle::Lr(b))
            }
            BundleKind::Ss => {
                let (a, b) = gen_ss_triples(id, self.m, self.n, ring, &seed)?;
                (Bundle::Ss(a), Bundle::Ss(b))
            }
        })
    }
}

/// Where a party obtains its preprocessing, in protocol order.
pub trait BundleSource: Send {
    fn fetch(&mut self, id: BundleId) -> Result<Bundle>;
}

/// Runs the dealer inline and keeps one party's half.
pub struct InlineSource {
    pub dealer: Dealer,
    pub party: PartyId,
}

impl BundleSource for InlineSource {
    fn fetch(&mut self, id: BundleId) -> Result<Bundle> {
        let (a, b) = self.dealer.pair(id)?;
        Ok(if self.party == PartyId::P0 { a } else { b })
    }
}

/// Receives bundles from a dealer thread.
pub struct QueueSource {
    pub rx: std::sync::mpsc::Receiver<Bundle>,
}

impl BundleSource for QueueSource {
    fn fetch(&mut self, id: BundleId) -> Result<Bundle> {
        let b = self.rx.recv().map_err(|_| Error::BundleExhausted(id))?;
        if b.id() != id {
            return Err(Error::WrongBundle(format!("expected {id}, dealer sent {}", b.id())));
        }
        Ok(b)
    }
}

/// Reads bundles written by the `dealer` command.
pub struct DirSource {
    pub dir: std::path::PathBuf,
    pub party: PartyId,
}

pub fn bundle_file_name(party: PartyId, id: BundleId) -> String {
    format!("p{}_e{}_b{}.bin", party.bit(), id.epoch, id.batch)
}

impl BundleSource for DirSource {
    fn fetch(&mut self, id: BundleId) -> Result<Bundle> {
        let path = self.dir.join(bundle_file_name(self.party, id));
        if !path.exists() {
            return Err(Error::BundleExhausted(id));
        }
        let b = Bundle::read_file(&path)?;
        if b.id() != id || b.party() != self.party {
            return Err(Error::WrongBundle(format!("{} holds {} for {}", path.display(), b.id(), b.party())));
        }
        Ok(b)
    }
}

/// Recorded next to bundle files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: String,
    pub kind: BundleKind,
    pub m: usize,
    pub n: usize,
    pub epsilon: f64,
    pub slope_log2: u32,
    pub ell: u32,
    pub frac: u32,
    pub epochs: u32,
    pub batches_per_epoch: u32,
}
