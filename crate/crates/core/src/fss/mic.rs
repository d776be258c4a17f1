//! Multiple interval containment on a masked input.
//!
//! For a public interval [p, q] and input mask r, let p' = p + r and
//! q' = q + r (mod N). Then for x_hat = x + r,
//!
//!   1{p <= x <= q} = 1{x_hat < q' + 1} - 1{x_hat < p'} + [p' > q'] + [q' = N - 1]
//!
//! where q' + 1 is taken mod N. Each interval therefore costs two comparison
//! keys plus a shared correction word.

use serde::{Deserialize, Serialize};

use super::{dcf_eval, dcf_gen_with, DcfKey};
use crate::error::{Error, Result};
use crate::ring::{Ring, RingMatrix};
use crate::sharing::{PartyId, Prg, PrgSeed, ShareMatrix};

/// Closed interval [lo, hi] of the input domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub lo: u64,
    pub hi: u64,
}

impl Interval {
    pub fn new(lo: u64, hi: u64) -> Self {
        Interval { lo, hi }
    }

    pub fn contains(&self, x: u64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MicKey {
    pub party: PartyId,
    pub bits: u32,
    pub ring: Ring,
    pub intervals: Vec<Interval>,
    /// This party's share of the input mask.
    pub r_in: u64,
    pub lo_keys: Vec<DcfKey>,
    pub hi_keys: Vec<DcfKey>,
    /// Shares of `kappa_i * beta_i + r_out_i` per interval.
    pub corrections: Vec<Vec<u64>>,
}

impl MicKey {
    pub fn dcf_key_count(&self) -> usize {
        self.lo_keys.len() + self.hi_keys.len()
    }
}

fn domain_mask(bits: u32) -> u64 {
    if bits == 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

fn check_intervals(bits: u32, ring: Ring, intervals: &[Interval]) -> Result<()> {
    if bits == 0 || bits > ring.bits() {
        return Err(Error::BitWidth { bits, ell: ring.bits() });
    }
    let top = domain_mask(bits);
    for (i, iv) in intervals.iter().enumerate() {
        if iv.lo > iv.hi || iv.hi > top {
            return Err(Error::Interval(format!(
                "interval {i} = [{}, {}] is not inside [0, {top}] with lo <= hi",
                iv.lo, iv.hi
            )));
        }
    }
    Ok(())
}

/// Indicator keys: evaluation reconstructs to `1{p_i <= x <= q_i} + r_out_i`.
pub fn mic_gen(
    bits: u32,
    ring: Ring,
    intervals: &[Interval],
    r_in: u64,
    r_out: &[u64],
    seed: &PrgSeed,
) -> Result<(MicKey, MicKey)> {
    let payloads = vec![vec![1u64]; intervals.len()];
    let r_out: Vec<Vec<u64>> = r_out.iter().map(|&r| vec![r]).collect();
    mic_gen_payloads(bits, ring, intervals, r_in, &payloads, &r_out, &mut seed.rng())
}

/// Keys whose evaluation reconstructs to `beta_i * 1{p_i <= x <= q_i} + r_out_i`
/// with a vector payload `beta_i` per interval.
pub fn mic_gen_payloads(
    bits: u32,
    ring: Ring,
    intervals: &[Interval],
    r_in: u64,
    payloads: &[Vec<u64>],
    r_out: &[Vec<u64>],
    prg: &mut Prg,
) -> Result<(MicKey, MicKey)> {
    check_intervals(bits, ring, intervals)?;
    if payloads.len() != intervals.len() || r_out.len() != intervals.len() {
        return Err(Error::Shape(format!(
            "{} intervals but {} payloads and {} output masks",
            intervals.len(),
            payloads.len(),
            r_out.len()
        )));
    }
    let top = domain_mask(bits);
    let r = r_in & top;
    let r_share = ring.reduce(prg.next_word());
    let mut k0 = MicKey {
        party: PartyId::P0,
        bits,
        ring,
        intervals: intervals.to_vec(),
        r_in: r_share,
        lo_keys: Vec::new(),
        hi_keys: Vec::new(),
        corrections: Vec::new(),
    };
    let mut k1 = MicKey { party: PartyId::P1, r_in: ring.sub(ring.reduce(r_in), r_share), ..k0.clone() };

    for ((iv, beta), out) in intervals.iter().zip(payloads).zip(r_out) {
        if beta.len() != out.len() {
            return Err(Error::Shape("payload and output mask lengths differ".into()));
        }
        let p = iv.lo.wrapping_add(r) & top;
        let q = iv.hi.wrapping_add(r) & top;
        let q_next = q.wrapping_add(1) & top;
        let kappa = (p > q) as u64 + (q == top) as u64;

        let (lo0, lo1) = dcf_gen_with(bits, p, beta, ring, prg)?;
        let (hi0, hi1) = dcf_gen_with(bits, q_next, beta, ring, prg)?;
        k0.lo_keys.push(lo0);
        k1.lo_keys.push(lo1);
        k0.hi_keys.push(hi0);
        k1.hi_keys.push(hi1);

        let mut c0 = Vec::with_capacity(beta.len());
        let mut c1 = Vec::with_capacity(beta.len());
        for (&b, &o) in beta.iter().zip(out) {
            let total = ring.add(ring.mul(kappa, b), o);
            let share = ring.reduce(prg.next_word());
            c0.push(share);
            c1.push(ring.sub(total, share));
        }
        k0.corrections.push(c0);
        k1.corrections.push(c1);
    }
    Ok((k0, k1))
}

/// Per-interval payload shares at the public masked input.
pub fn mic_eval(party: PartyId, key: &MicKey, x_hat: u64) -> Result<Vec<Vec<u64>>> {
    if key.party != party {
        return Err(Error::WrongParty(key.party.bit()));
    }
    if x_hat & !domain_mask(key.bits) != 0 {
        return Err(Error::Domain { x: x_hat, bits: key.bits });
    }
    let ring = key.ring;
    let mut out = Vec::with_capacity(key.intervals.len());
    for i in 0..key.intervals.len() {
        let hi = dcf_eval(party, &key.hi_keys[i], x_hat)?;
        let lo = dcf_eval(party, &key.lo_keys[i], x_hat)?;
        out.push(
            hi.iter().zip(&lo).zip(&key.corrections[i]).map(|((&h, &l), &c)| ring.add(ring.sub(h, l), c)).collect(),
        );
    }
    Ok(out)
}

/// Indicator shares as a `1 x m` share matrix (scalar payload keys only).
pub fn mic_eval_indicator(party: PartyId, key: &MicKey, x_hat: u64) -> Result<ShareMatrix> {
    let vals = mic_eval(party, key, x_hat)?;
    let mut words = Vec::with_capacity(vals.len());
    for v in vals {
        match v.as_slice() {
            [w] => words.push(*w),
            _ => return Err(Error::Shape("indicator evaluation needs scalar payloads".into())),
        }
    }
    let n = words.len();
    Ok(ShareMatrix::new(party, RingMatrix::from_vec(key.ring, 1, n, words)?))
}
