//! Function secret sharing: comparison (DCF) and interval containment (MIC).

mod dcf;
mod mic;

pub use dcf::{dcf_eval, dcf_gen, dcf_gen_with, DcfKey};
pub use mic::{mic_eval, mic_eval_indicator, mic_gen, mic_gen_payloads, Interval, MicKey};

use std::sync::OnceLock;

use aes::cipher::{BlockEncrypt, KeyInit};
use aes::{Aes128, Block};

use crate::ring::Ring;

static FIXED_KEY_AES: OnceLock<Aes128> = OnceLock::new();

fn fixed_aes() -> &'static Aes128 {
    FIXED_KEY_AES.get_or_init(|| {
        let key: [u8; 16] = *b"fsslr-fixed-key!";
        Aes128::new(&key.into())
    })
}

/// Matyas-Meyer-Oseas over fixed-key AES: block_i = AES(s ^ (tweak + i)) ^ (s ^ (tweak + i)).
fn mmo_blocks(seed: u128, tweak: u128, out: &mut Vec<u128>, n: usize) {
    let aes = fixed_aes();
    let mut blocks: Vec<Block> = (0..n).map(|i| Block::from((seed ^ (tweak + i as u128)).to_le_bytes())).collect();
    aes.encrypt_blocks(&mut blocks);
    out.clear();
    out.extend(blocks.iter().enumerate().map(|(i, b)| u128::from_le_bytes((*b).into()) ^ seed ^ (tweak + i as u128)));
}

/// One tree-node expansion: child seeds, control bits and payload masks.
struct Expansion {
    s: [u128; 2],
    t: [bool; 2],
    v: [Vec<u64>; 2],
}

fn expand(seed: u128, k: usize, ring: Ring, scratch: &mut Vec<u128>) -> Expansion {
    mmo_blocks(seed, 0, scratch, 2 + k);
    let mut words = scratch[2..].iter().flat_map(|b| [*b as u64, (*b >> 64) as u64]);
    let v_l: Vec<u64> = words.by_ref().take(k).map(|w| ring.reduce(w)).collect();
    let v_r: Vec<u64> = words.take(k).map(|w| ring.reduce(w)).collect();
    Expansion { s: [scratch[0] & !1, scratch[1] & !1], t: [scratch[0] & 1 == 1, scratch[1] & 1 == 1], v: [v_l, v_r] }
}

/// Maps a leaf seed to `k` ring words.
fn convert(seed: u128, k: usize, ring: Ring, scratch: &mut Vec<u128>) -> Vec<u64> {
    mmo_blocks(seed, 1u128 << 64, scratch, k.div_ceil(2));
    scratch.iter().flat_map(|b| [*b as u64, (*b >> 64) as u64]).take(k).map(|w| ring.reduce(w)).collect()
}
