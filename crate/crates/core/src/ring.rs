//! Fixed-point arithmetic over the ring Z_{2^ell}.
//!
//! Every protocol value is an `ell`-bit word interpreted as a two's-complement
//! integer carrying `frac` fractional bits. Words are stored in `u64` and
//! reduced modulo `2^ell` after each operation, so `ell < 64` rings behave
//! exactly like their native-width counterparts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The additive group / ring Z_{2^ell}, `1 <= ell <= 64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ring {
    ell: u32,
}

impl Ring {
    pub const Z64: Ring = Ring { ell: 64 };

    pub fn new(ell: u32) -> Result<Self> {
        if ell == 0 || ell > 64 {
            return Err(Error::Config(format!("ring width {ell} must be in 1..=64")));
        }
        Ok(Ring { ell })
    }

    #[inline]
    pub fn bits(self) -> u32 {
        self.ell
    }

    #[inline]
    pub fn mask(self) -> u64 {
        if self.ell == 64 {
            u64::MAX
        } else {
            (1u64 << self.ell) - 1
        }
    }

    /// Bytes per word on the wire.
    #[inline]
    pub fn word_bytes(self) -> usize {
        self.ell.div_ceil(8) as usize
    }

    #[inline]
    pub fn reduce(self, v: u64) -> u64 {
        v & self.mask()
    }

    #[inline]
    pub fn add(self, a: u64, b: u64) -> u64 {
        a.wrapping_add(b) & self.mask()
    }

    #[inline]
    pub fn sub(self, a: u64, b: u64) -> u64 {
        a.wrapping_sub(b) & self.mask()
    }

    #[inline]
    pub fn mul(self, a: u64, b: u64) -> u64 {
        a.wrapping_mul(b) & self.mask()
    }

    #[inline]
    pub fn neg(self, a: u64) -> u64 {
        a.wrapping_neg() & self.mask()
    }

    /// Two's-complement reading of a reduced word.
    #[inline]
    pub fn to_signed(self, v: u64) -> i64 {
        let shift = 64 - self.ell;
        ((v << shift) as i64) >> shift
    }

    #[inline]
    pub fn from_signed(self, v: i64) -> u64 {
        (v as u64) & self.mask()
    }

    /// Arithmetic right shift of the signed reading, re-wrapped into the ring.
    #[inline]
    pub fn shr_signed(self, v: u64, bits: u32) -> u64 {
        self.from_signed(self.to_signed(v) >> bits)
    }
}

/// Ring width and fractional precision shared by every party.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedPointConfig {
    pub ell: u32,
    pub frac: u32,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig { ell: 64, frac: 12 }
    }
}

impl FixedPointConfig {
    pub fn new(ell: u32, frac: u32) -> Result<Self> {
        let cfg = FixedPointConfig { ell, frac };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ell != 32 && self.ell != 64 {
            return Err(Error::Config(format!("ell must be 32 or 64, got {}", self.ell)));
        }
        if self.frac == 0 || self.frac >= self.ell {
            return Err(Error::Config(format!(
                "fractional bits must satisfy 0 < f < ell, got f={} ell={}",
                self.frac, self.ell
            )));
        }
        Ok(())
    }

    pub fn ring(&self) -> Ring {
        Ring { ell: self.ell }
    }

    /// `2^f` as a float.
    pub fn scale(&self) -> f64 {
        (self.frac as f64).exp2()
    }

    /// Exclusive bound on encodable magnitudes, `2^(ell - f - 1)`.
    pub fn limit(&self) -> f64 {
        ((self.ell - self.frac - 1) as f64).exp2()
    }

    /// The raw word for the fixed-point constant `1.0`.
    pub fn one(&self) -> u64 {
        1u64 << self.frac
    }

    pub fn encode(&self, v: f64) -> Result<u64> {
        let limit = self.limit();
        if !v.is_finite() || v.abs() >= limit {
            return Err(Error::OutOfRange { value: v, limit });
        }
        let scaled = (v * self.scale()).round() as i64;
        Ok(self.ring().from_signed(scaled))
    }

    pub fn decode(&self, word: u64) -> f64 {
        self.ring().to_signed(word) as f64 / self.scale()
    }

    /// Raw word for `v` at an arbitrary scale `2^bits`, wrapping silently.
    /// Used for public constants that need more precision than `frac`.
    pub fn encode_at(&self, v: f64, bits: u32) -> u64 {
        let scaled = (v * (bits as f64).exp2()).round() as i64;
        self.ring().from_signed(scaled)
    }
}

/// A dense row-major matrix of ring words.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingMatrix {
    ring: Ring,
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl RingMatrix {
    pub fn zeros(ring: Ring, rows: usize, cols: usize) -> Self {
        RingMatrix { ring, rows, cols, data: vec![0; rows * cols] }
    }

    pub fn from_vec(ring: Ring, rows: usize, cols: usize, mut data: Vec<u64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} words cannot fill a {rows}x{cols} matrix", data.len())));
        }
        let mask = ring.mask();
        data.iter_mut().for_each(|w| *w &= mask);
        Ok(RingMatrix { ring, rows, cols, data })
    }

    pub fn from_fn(ring: Ring, rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> u64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(ring.reduce(f(r, c)));
            }
        }
        RingMatrix { ring, rows, cols, data }
    }

    /// Fills a matrix with one repeated word.
    pub fn filled(ring: Ring, rows: usize, cols: usize, word: u64) -> Self {
        RingMatrix { ring, rows, cols, data: vec![ring.reduce(word); rows * cols] }
    }

    /// Encodes a row-major slice of reals as fixed-point words.
    pub fn encode(rows: usize, cols: usize, values: &[f64], cfg: &FixedPointConfig) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!("{} values cannot fill a {rows}x{cols} matrix", values.len())));
        }
        let data = values.iter().map(|&v| cfg.encode(v)).collect::<Result<Vec<_>>>()?;
        Ok(RingMatrix { ring: cfg.ring(), rows, cols, data })
    }

    pub fn decode(&self, cfg: &FixedPointConfig) -> Vec<f64> {
        self.data.iter().map(|&w| cfg.decode(w)).collect()
    }

    #[inline]
    pub fn ring(&self) -> Ring {
        self.ring
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[u64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, word: u64) {
        self.data[r * self.cols + c] = self.ring.reduce(word);
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copies the listed rows into a new matrix, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        RingMatrix { ring: self.ring, rows: rows.len(), cols: self.cols, data }
    }

    pub fn reshape(mut self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.data.len() {
            return Err(Error::Shape(format!("cannot reshape {}x{} into {rows}x{cols}", self.rows, self.cols)));
        }
        self.rows = rows;
        self.cols = cols;
        Ok(self)
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        RingMatrix { ring: self.ring, rows: self.cols, cols: self.rows, data }
    }

    fn check_same(&self, other: &RingMatrix, op: &str) -> Result<()> {
        if self.ring != other.ring {
            return Err(Error::Shape(format!("{op}: ring Z_2^{} vs Z_2^{}", self.ring.bits(), other.ring.bits())));
        }
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!("{op}: {}x{} vs {}x{}", self.rows, self.cols, other.rows, other.cols)));
        }
        Ok(())
    }

    pub fn add(&self, other: &RingMatrix) -> Result<Self> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &RingMatrix) -> Result<Self> {
        let mut out = self.clone();
        out.sub_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &RingMatrix) -> Result<()> {
        self.check_same(other, "add")?;
        let ring = self.ring;
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a = ring.add(*a, b));
        Ok(())
    }

    pub fn sub_assign(&mut self, other: &RingMatrix) -> Result<()> {
        self.check_same(other, "sub")?;
        let ring = self.ring;
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a = ring.sub(*a, b));
        Ok(())
    }

    pub fn neg(&self) -> Self {
        let ring = self.ring;
        RingMatrix { ring, rows: self.rows, cols: self.cols, data: self.data.iter().map(|&a| ring.neg(a)).collect() }
    }

    /// Multiplies every entry by a public ring word (no rescaling).
    pub fn scale(&self, k: u64) -> Self {
        let ring = self.ring;
        RingMatrix { ring, rows: self.rows, cols: self.cols, data: self.data.iter().map(|&a| ring.mul(a, k)).collect() }
    }

    pub fn scale_signed(&self, k: i64) -> Self {
        self.scale(self.ring.from_signed(k))
    }

    /// Entry-wise product.
    pub fn hadamard(&self, other: &RingMatrix) -> Result<Self> {
        self.check_same(other, "hadamard")?;
        let ring = self.ring;
        Ok(RingMatrix {
            ring,
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| ring.mul(a, b)).collect(),
        })
    }

    /// Matrix product modulo `2^ell`. When both inputs carry scale `2^f` the
    /// result carries `2^(2f)`; the caller truncates.
    pub fn mat_mul(&self, other: &RingMatrix) -> Result<Self> {
        if self.ring != other.ring {
            return Err(Error::Shape("mat_mul: operands live in different rings".into()));
        }
        if self.cols != other.rows {
            return Err(Error::Shape(format!("mat_mul: {}x{} · {}x{}", self.rows, self.cols, other.rows, other.cols)));
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0u64; n * m];
        for i in 0..n {
            let acc = &mut out[i * m..(i + 1) * m];
            for t in 0..k {
                let a = self.data[i * k + t];
                if a == 0 {
                    continue;
                }
                let brow = &other.data[t * m..(t + 1) * m];
                for (o, &b) in acc.iter_mut().zip(brow) {
                    *o = o.wrapping_add(a.wrapping_mul(b));
                }
            }
        }
        let mask = self.ring.mask();
        out.iter_mut().for_each(|w| *w &= mask);
        Ok(RingMatrix { ring: self.ring, rows: n, cols: m, data: out })
    }

    /// Arithmetic right shift by `f` of every entry's signed reading.
    pub fn truncate(&self, f: u32) -> Self {
        let ring = self.ring;
        RingMatrix {
            ring,
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| ring.shr_signed(a, f)).collect(),
        }
    }

    /// Left shift by `bits`, i.e. multiplication by `2^bits`.
    pub fn shl(&self, bits: u32) -> Self {
        self.scale(1u64 << bits)
    }

    /// Sum of all rows, as a `1 x cols` matrix.
    pub fn column_sums(&self) -> Self {
        let mut out = vec![0u64; self.cols];
        for r in 0..self.rows {
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o = o.wrapping_add(a);
            }
        }
        let mask = self.ring.mask();
        out.iter_mut().for_each(|w| *w &= mask);
        RingMatrix { ring: self.ring, rows: 1, cols: self.cols, data: out }
    }
}
