//! Two-party additive secret sharing over Z_{2^ell}.

use aes::Aes128;
use ctr::cipher::{KeyIvInit, StreamCipher};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ring::{Ring, RingMatrix};
use crate::transport::{Channel, Frame, MsgTag};

type Aes128Ctr = ctr::Ctr128BE<Aes128>;

/// A 16-byte PRG key plus the stream index it starts from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrgSeed {
    pub seed: [u8; 16],
    pub counter: u64,
}

impl PrgSeed {
    pub fn new(seed: [u8; 16]) -> Self {
        PrgSeed { seed, counter: 0 }
    }

    pub fn from_u64(v: u64) -> Self {
        let digest = Sha256::new().chain_update(b"fsslr/seed").chain_update(v.to_le_bytes()).finalize();
        let mut seed = [0u8; 16];
        seed.copy_from_slice(&digest[..16]);
        PrgSeed { seed, counter: 0 }
    }

    /// Child seed for an independent sub-stream.
    pub fn derive(&self, label: &str, idx: u64) -> PrgSeed {
        let digest = Sha256::new()
            .chain_update(b"fsslr/derive")
            .chain_update(self.seed)
            .chain_update(self.counter.to_le_bytes())
            .chain_update((label.len() as u64).to_le_bytes())
            .chain_update(label.as_bytes())
            .chain_update(idx.to_le_bytes())
            .finalize();
        let mut seed = [0u8; 16];
        seed.copy_from_slice(&digest[..16]);
        PrgSeed { seed, counter: 0 }
    }

    pub fn rng(&self) -> Prg {
        Prg::new(self)
    }
}

/// AES-128 in counter mode, keyed by the seed; the counter occupies the high
/// half of the IV so distinct counters never overlap in practice.
pub struct Prg {
    cipher: Aes128Ctr,
    buf: [u8; 256],
    pos: usize,
}

impl Prg {
    pub fn new(seed: &PrgSeed) -> Self {
        let mut iv = [0u8; 16];
        iv[..8].copy_from_slice(&seed.counter.to_be_bytes());
        Prg { cipher: Aes128Ctr::new(&seed.seed.into(), &iv.into()), buf: [0u8; 256], pos: 256 }
    }

    fn refill(&mut self) {
        self.buf = [0u8; 256];
        self.cipher.apply_keystream(&mut self.buf);
        self.pos = 0;
    }

    pub fn fill(&mut self, out: &mut [u8]) {
        let mut done = 0;
        while done < out.len() {
            if self.pos == self.buf.len() {
                self.refill();
            }
            let take = (out.len() - done).min(self.buf.len() - self.pos);
            out[done..done + take].copy_from_slice(&self.buf[self.pos..self.pos + take]);
            self.pos += take;
            done += take;
        }
    }

    pub fn next_word(&mut self) -> u64 {
        let mut b = [0u8; 8];
        self.fill(&mut b);
        u64::from_le_bytes(b)
    }

    pub fn next_block(&mut self) -> u128 {
        let mut b = [0u8; 16];
        self.fill(&mut b);
        u128::from_le_bytes(b)
    }

    pub fn ring_word(&mut self, ring: Ring) -> u64 {
        ring.reduce(self.next_word())
    }

    pub fn ring_matrix(&mut self, ring: Ring, rows: usize, cols: usize) -> RingMatrix {
        RingMatrix::from_fn(ring, rows, cols, |_, _| self.next_word())
    }
}

impl rand::RngCore for Prg {
    fn next_u32(&mut self) -> u32 {
        self.next_word() as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_word()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.fill(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.fill(dest);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PartyId {
    P0,
    P1,
}

impl PartyId {
    pub fn from_bit(b: u8) -> Result<Self> {
        match b {
            0 => Ok(PartyId::P0),
            1 => Ok(PartyId::P1),
            other => Err(Error::WrongParty(other)),
        }
    }

    #[inline]
    pub fn bit(self) -> u8 {
        match self {
            PartyId::P0 => 0,
            PartyId::P1 => 1,
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self.bit() as usize
    }

    pub fn other(self) -> Self {
        match self {
            PartyId::P0 => PartyId::P1,
            PartyId::P1 => PartyId::P0,
        }
    }
}

impl std::fmt::Display for PartyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "P{}", self.bit())
    }
}

/// One party's additive share of a ring matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareMatrix {
    pub party: PartyId,
    pub payload: RingMatrix,
}

impl ShareMatrix {
    pub fn new(party: PartyId, payload: RingMatrix) -> Self {
        ShareMatrix { party, payload }
    }

    pub fn zeros(party: PartyId, ring: Ring, rows: usize, cols: usize) -> Self {
        ShareMatrix { party, payload: RingMatrix::zeros(ring, rows, cols) }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.payload.shape()
    }

    pub fn ring(&self) -> Ring {
        self.payload.ring()
    }

    fn check_party(&self, other: &ShareMatrix) -> Result<()> {
        if self.party != other.party {
            return Err(Error::WrongParty(other.party.bit()));
        }
        Ok(())
    }

    pub fn add(&self, other: &ShareMatrix) -> Result<Self> {
        self.check_party(other)?;
        Ok(ShareMatrix { party: self.party, payload: self.payload.add(&other.payload)? })
    }

    pub fn sub(&self, other: &ShareMatrix) -> Result<Self> {
        self.check_party(other)?;
        Ok(ShareMatrix { party: self.party, payload: self.payload.sub(&other.payload)? })
    }

    /// Adds a public matrix; only party 0 applies it.
    pub fn add_public(&self, p: &RingMatrix) -> Result<Self> {
        if self.party == PartyId::P0 {
            Ok(ShareMatrix { party: self.party, payload: self.payload.add(p)? })
        } else if p.shape() != self.shape() {
            Err(Error::Shape(format!("add_public: {:?} vs {:?}", self.shape(), p.shape())))
        } else {
            Ok(self.clone())
        }
    }

    pub fn scale(&self, k: u64) -> Self {
        ShareMatrix { party: self.party, payload: self.payload.scale(k) }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        ShareMatrix { party: self.party, payload: self.payload.select_rows(rows) }
    }
}

/// Splits `x` into two shares; party 0's share is the PRG expansion.
pub fn share(x: &RingMatrix, seed: &PrgSeed) -> (ShareMatrix, ShareMatrix) {
    let s0 = seed.rng().ring_matrix(x.ring(), x.rows(), x.cols());
    let s1 = x.sub(&s0).expect("shapes agree by construction");
    (ShareMatrix::new(PartyId::P0, s0), ShareMatrix::new(PartyId::P1, s1))
}

pub fn reconstruct(a: &ShareMatrix, b: &ShareMatrix) -> Result<RingMatrix> {
    if a.party == b.party {
        return Err(Error::WrongParty(b.party.bit()));
    }
    a.payload.add(&b.payload)
}

/// Opens one shared matrix in a single exchange.
pub fn reveal(my: &ShareMatrix, channel: &mut Channel, tag: MsgTag) -> Result<RingMatrix> {
    let mut out = reveal_many(&[my], channel, tag)?;
    Ok(out.pop().expect("one matrix in, one out"))
}

/// Opens several shared matrices in one frame and one round.
pub fn reveal_many(mine: &[&ShareMatrix], channel: &mut Channel, tag: MsgTag) -> Result<Vec<RingMatrix>> {
    let Some(first) = mine.first() else {
        return Ok(Vec::new());
    };
    let ring = first.ring();
    let total: usize = mine.iter().map(|s| s.payload.len()).sum();
    let mut words = Vec::with_capacity(total);
    for s in mine {
        if s.ring() != ring {
            return Err(Error::Shape("reveal: mixed rings in one frame".into()));
        }
        words.extend_from_slice(s.payload.data());
    }
    let reply = channel.exchange(Frame::from_words(tag, ring, &words))?;
    let theirs = reply.words(ring)?;
    if theirs.len() != total {
        return Err(Error::Shape(format!("reveal: expected {total} words, received {}", theirs.len())));
    }
    channel.note_opened(total as u64);
    let mut out = Vec::with_capacity(mine.len());
    let mut at = 0;
    for s in mine {
        let len = s.payload.len();
        let peer = RingMatrix::from_vec(ring, s.payload.rows(), s.payload.cols(), theirs[at..at + len].to_vec())?;
        out.push(s.payload.add(&peer)?);
        at += len;
    }
    Ok(out)
}

/// Local share truncation: P0 shifts its share, P1 shifts the negation of
/// its share and negates back. Off by at most one ulp unless the shares wrap,
/// which happens with probability about |v| / 2^ell.
pub fn trunc_shares(s: &ShareMatrix, f: u32) -> ShareMatrix {
    let payload = match s.party {
        PartyId::P0 => s.payload.truncate(f),
        PartyId::P1 => s.payload.neg().truncate(f).neg(),
    };
    ShareMatrix { party: s.party, payload }
}

/// A factor in a product chain of an affine program.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Factor {
    Share(usize),
    ShareT(usize),
    Public(usize),
    PublicT(usize),
}

impl Factor {
    fn is_share(self) -> bool {
        matches!(self, Factor::Share(_) | Factor::ShareT(_))
    }
}

/// `coeff · f_1 · f_2 · ...` with at most one share factor.
#[derive(Clone, Debug)]
pub struct Term {
    pub coeff: u64,
    pub factors: Vec<Factor>,
}

/// A sum of terms evaluated locally on shares and public matrices.
#[derive(Clone, Debug, Default)]
pub struct AffineProgram {
    pub terms: Vec<Term>,
}

impl AffineProgram {
    pub fn new() -> Self {
        AffineProgram::default()
    }

    pub fn term(mut self, coeff: u64, factors: impl Into<Vec<Factor>>) -> Self {
        self.terms.push(Term { coeff, factors: factors.into() });
        self
    }

    /// Shorthand for `sign · f_1 · ...`, sign in {+1, -1}.
    pub fn signed(self, ring: Ring, coeff: i64, factors: impl Into<Vec<Factor>>) -> Self {
        self.term(ring.from_signed(coeff), factors)
    }
}

/// Evaluates `program` on one party's shares. Public-only terms are added by
/// party 0 alone, so the two outputs reconstruct to the program applied to the
/// reconstructed inputs.
pub fn local_affine(
    party: PartyId,
    shares: &[&ShareMatrix],
    publics: &[&RingMatrix],
    program: &AffineProgram,
) -> Result<ShareMatrix> {
    if program.terms.is_empty() {
        return Err(Error::Shape("affine program has no terms".into()));
    }
    if let Some(s) = shares.iter().find(|s| s.party != party) {
        return Err(Error::WrongParty(s.party.bit()));
    }
    let mut acc: Option<RingMatrix> = None;
    for (i, term) in program.terms.iter().enumerate() {
        let n_shares = term.factors.iter().filter(|f| f.is_share()).count();
        if n_shares > 1 {
            return Err(Error::NonLinear(format!("term {i} multiplies {n_shares} shared factors")));
        }
        if term.factors.is_empty() {
            return Err(Error::Shape(format!("term {i} has no factors")));
        }
        let mut prod: Option<RingMatrix> = None;
        for f in &term.factors {
            let m = match *f {
                Factor::Share(k) => shares.get(k).map(|s| s.payload.clone()),
                Factor::ShareT(k) => shares.get(k).map(|s| s.payload.transpose()),
                Factor::Public(k) => publics.get(k).map(|p| (*p).clone()),
                Factor::PublicT(k) => publics.get(k).map(|p| p.transpose()),
            }
            .ok_or_else(|| Error::Shape(format!("term {i} references a missing operand {f:?}")))?;
            prod = Some(match prod {
                None => m,
                Some(p) => p.mat_mul(&m)?,
            });
        }
        let mut value = prod.expect("non-empty").scale(term.coeff);
        if n_shares == 0 && party == PartyId::P1 {
            value = RingMatrix::zeros(value.ring(), value.rows(), value.cols());
        }
        acc = Some(match acc {
            None => value,
            Some(a) => a.add(&value)?,
        });
    }
    Ok(ShareMatrix::new(party, acc.expect("non-empty")))
}
