//! Distributed comparison function with vector payloads over Z_{2^ell}^k.
//!
//! Tree construction with one correction word per level (seed, payload,
//! two control bits) plus a final payload correction. The two keys evaluate
//! to additive shares of `beta * 1{x < alpha}`.

use serde::{Deserialize, Serialize};

use super::{convert, expand};
use crate::error::{Error, Result};
use crate::ring::Ring;
use crate::sharing::{PartyId, Prg, PrgSeed};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DcfKey {
    pub party: PartyId,
    pub bits: u32,
    pub ring: Ring,
    pub payload_len: usize,
    pub seed: [u8; 16],
    /// Per level seed correction.
    pub seed_cw: Vec<[u8; 16]>,
    /// Per level control-bit corrections, bit 0 left and bit 1 right.
    pub t_cw: Vec<u8>,
    /// Per level payload correction, `bits * payload_len` words.
    pub v_cw: Vec<u64>,
    pub final_cw: Vec<u64>,
}

impl DcfKey {
    pub fn size_bytes(&self) -> usize {
        bincode::serialized_size(self).map(|s| s as usize).unwrap_or(0)
    }

    fn level_v(&self, i: usize) -> &[u64] {
        &self.v_cw[i * self.payload_len..(i + 1) * self.payload_len]
    }
}

fn check_domain(bits: u32, ring: Ring, x: u64) -> Result<()> {
    if bits == 0 || bits > ring.bits() {
        return Err(Error::BitWidth { bits, ell: ring.bits() });
    }
    if bits < 64 && x >> bits != 0 {
        return Err(Error::Domain { x, bits });
    }
    Ok(())
}

#[inline]
fn bit_at(x: u64, bits: u32, i: u32) -> usize {
    ((x >> (bits - 1 - i)) & 1) as usize
}

fn axpy(ring: Ring, acc: &mut [u64], sign_neg: bool, v: &[u64]) {
    for (a, &b) in acc.iter_mut().zip(v) {
        *a = if sign_neg { ring.sub(*a, b) } else { ring.add(*a, b) };
    }
}

pub fn dcf_gen(bits: u32, alpha: u64, beta: &[u64], ring: Ring, seed: &PrgSeed) -> Result<(DcfKey, DcfKey)> {
    dcf_gen_with(bits, alpha, beta, ring, &mut seed.rng())
}

pub fn dcf_gen_with(bits: u32, alpha: u64, beta: &[u64], ring: Ring, prg: &mut Prg) -> Result<(DcfKey, DcfKey)> {
    check_domain(bits, ring, alpha)?;
    let k = beta.len();
    if k == 0 {
        return Err(Error::Shape("comparison payload must have at least one word".into()));
    }
    let beta: Vec<u64> = beta.iter().map(|&b| ring.reduce(b)).collect();
    let root = [prg.next_block(), prg.next_block()];
    let mut s = root;
    let mut t = [false, true];
    let mut v_alpha = vec![0u64; k];
    let mut seed_cw = Vec::with_capacity(bits as usize);
    let mut t_cw = Vec::with_capacity(bits as usize);
    let mut v_cw = Vec::with_capacity(bits as usize * k);
    let mut scratch = Vec::new();

    for i in 0..bits {
        let a = bit_at(alpha, bits, i);
        let e0 = expand(s[0], k, ring, &mut scratch);
        let e1 = expand(s[1], k, ring, &mut scratch);
        let (keep, lose) = (a, 1 - a);
        let s_cw = e0.s[lose] ^ e1.s[lose];
        let neg = t[1];

        // V_cw = (-1)^t1 * (v1_lose - v0_lose - v_alpha [+ beta if lose is left])
        let mut vc = vec![0u64; k];
        axpy(ring, &mut vc, false, &e1.v[lose]);
        axpy(ring, &mut vc, true, &e0.v[lose]);
        axpy(ring, &mut vc, true, &v_alpha);
        if lose == 0 {
            axpy(ring, &mut vc, false, &beta);
        }
        if neg {
            vc.iter_mut().for_each(|w| *w = ring.neg(*w));
        }

        axpy(ring, &mut v_alpha, true, &e1.v[keep]);
        axpy(ring, &mut v_alpha, false, &e0.v[keep]);
        axpy(ring, &mut v_alpha, neg, &vc);

        let tl = e0.t[0] ^ e1.t[0] ^ (a == 1) ^ true;
        let tr = e0.t[1] ^ e1.t[1] ^ (a == 1);
        let t_keep = if keep == 0 { tl } else { tr };

        for b in 0..2 {
            let e = if b == 0 { &e0 } else { &e1 };
            let next_s = e.s[keep] ^ if t[b] { s_cw } else { 0 };
            let next_t = e.t[keep] ^ (t[b] & t_keep);
            s[b] = next_s;
            t[b] = next_t;
        }
        seed_cw.push(s_cw.to_le_bytes());
        t_cw.push(tl as u8 | ((tr as u8) << 1));
        v_cw.extend_from_slice(&vc);
    }

    let c0 = convert(s[0], k, ring, &mut scratch);
    let c1 = convert(s[1], k, ring, &mut scratch);
    let mut final_cw = vec![0u64; k];
    axpy(ring, &mut final_cw, false, &c1);
    axpy(ring, &mut final_cw, true, &c0);
    axpy(ring, &mut final_cw, true, &v_alpha);
    if t[1] {
        final_cw.iter_mut().for_each(|w| *w = ring.neg(*w));
    }

    let make = |party: PartyId, seed: u128| DcfKey {
        party,
        bits,
        ring,
        payload_len: k,
        seed: seed.to_le_bytes(),
        seed_cw: seed_cw.clone(),
        t_cw: t_cw.clone(),
        v_cw: v_cw.clone(),
        final_cw: final_cw.clone(),
    };
    Ok((make(PartyId::P0, root[0]), make(PartyId::P1, root[1])))
}

pub fn dcf_eval(party: PartyId, key: &DcfKey, x: u64) -> Result<Vec<u64>> {
    if key.party != party {
        return Err(Error::WrongParty(key.party.bit()));
    }
    check_domain(key.bits, key.ring, x)?;
    let ring = key.ring;
    let k = key.payload_len;
    let neg = party == PartyId::P1;
    let mut s = u128::from_le_bytes(key.seed);
    let mut t = neg;
    let mut acc = vec![0u64; k];
    let mut scratch = Vec::new();

    for i in 0..key.bits {
        let mut e = expand(s, k, ring, &mut scratch);
        if t {
            let s_cw = u128::from_le_bytes(key.seed_cw[i as usize]);
            let tc = key.t_cw[i as usize];
            e.s[0] ^= s_cw;
            e.s[1] ^= s_cw;
            e.t[0] ^= tc & 1 == 1;
            e.t[1] ^= tc & 2 == 2;
        }
        let side = bit_at(x, key.bits, i);
        let mut v = std::mem::take(&mut e.v[side]);
        if t {
            axpy(ring, &mut v, false, key.level_v(i as usize));
        }
        axpy(ring, &mut acc, neg, &v);
        s = e.s[side];
        t = e.t[side];
    }
    let mut last = convert(s, k, ring, &mut scratch);
    if t {
        axpy(ring, &mut last, false, &key.final_cw);
    }
    axpy(ring, &mut acc, neg, &last);
    Ok(acc)
}
