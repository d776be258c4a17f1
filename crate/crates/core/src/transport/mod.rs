//! Framed two-party channels with byte and round accounting.
//!
//! Wire format: 4-byte little-endian body length, 1-byte tag, body. Ring
//! words in a body are little-endian, `ceil(ell/8)` bytes each, row-major.

mod memory;
mod tcp;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ring::Ring;

pub use memory::{memory_pair, MemoryTransport};
pub use tcp::{tcp_accept, tcp_connect, TcpTransport};

pub const HEADER_BYTES: usize = 5;
pub const DEFAULT_MAX_FRAME: usize = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum MsgTag {
    /// x', w', y' opened together by the FSS gates.
    OpenMasked = 1,
    /// Beaver openings for the forward product.
    BeaverForward = 2,
    /// Beaver openings for the backward product.
    BeaverBackward = 3,
    /// Masked forward values fed to the comparison gate.
    OpenForward = 4,
    Reveal = 5,
    Bundle = 6,
    Stats = 7,
    Hello = 8,
}

impl TryFrom<u8> for MsgTag {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Ok(match v {
            1 => MsgTag::OpenMasked,
            2 => MsgTag::BeaverForward,
            3 => MsgTag::BeaverBackward,
            4 => MsgTag::OpenForward,
            5 => MsgTag::Reveal,
            6 => MsgTag::Bundle,
            7 => MsgTag::Stats,
            8 => MsgTag::Hello,
            other => return Err(Error::Frame(format!("unknown tag {other}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub tag: u8,
    pub body: Vec<u8>,
}

impl Frame {
    pub fn new(tag: MsgTag, body: Vec<u8>) -> Self {
        Frame { tag: tag as u8, body }
    }

    pub fn from_words(tag: MsgTag, ring: Ring, words: &[u64]) -> Self {
        let wb = ring.word_bytes();
        let mut body = Vec::with_capacity(words.len() * wb);
        for w in words {
            body.extend_from_slice(&w.to_le_bytes()[..wb]);
        }
        Frame::new(tag, body)
    }

    pub fn words(&self, ring: Ring) -> Result<Vec<u64>> {
        let wb = ring.word_bytes();
        if !self.body.len().is_multiple_of(wb) {
            return Err(Error::Frame(format!(
                "body of {} bytes is not a whole number of {wb}-byte words",
                self.body.len()
            )));
        }
        Ok(self
            .body
            .chunks_exact(wb)
            .map(|c| {
                let mut b = [0u8; 8];
                b[..wb].copy_from_slice(c);
                ring.reduce(u64::from_le_bytes(b))
            })
            .collect())
    }

    /// Bytes on the wire including the header.
    pub fn wire_len(&self) -> usize {
        HEADER_BYTES + self.body.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        out.extend_from_slice(&(self.body.len() as u32).to_le_bytes());
        out.push(self.tag);
        out.extend_from_slice(&self.body);
        out
    }

    /// Parses one complete frame from `bytes`.
    pub fn decode(bytes: &[u8], max: usize) -> Result<Frame> {
        if bytes.len() < HEADER_BYTES {
            return Err(Error::Frame(format!("{} bytes is shorter than a header", bytes.len())));
        }
        let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        if len > max {
            return Err(Error::FrameTooLarge { len, max });
        }
        if bytes.len() != HEADER_BYTES + len {
            return Err(Error::Frame(format!("header announces {len} body bytes, got {}", bytes.len() - HEADER_BYTES)));
        }
        Ok(Frame { tag: bytes[4], body: bytes[HEADER_BYTES..].to_vec() })
    }
}

/// Per-party communication counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommStats {
    pub bytes_sent: u64,
    pub rounds: u64,
    pub opened_elements: u64,
}

impl CommStats {
    pub fn merged(&self, other: &CommStats) -> CommStats {
        CommStats {
            bytes_sent: self.bytes_sent + other.bytes_sent,
            rounds: self.rounds.max(other.rounds),
            opened_elements: self.opened_elements + other.opened_elements,
        }
    }

    pub fn since(&self, earlier: &CommStats) -> CommStats {
        CommStats {
            bytes_sent: self.bytes_sent - earlier.bytes_sent,
            rounds: self.rounds - earlier.rounds,
            opened_elements: self.opened_elements - earlier.opened_elements,
        }
    }

    pub fn to_words(&self) -> [u64; 3] {
        [self.bytes_sent, self.rounds, self.opened_elements]
    }

    pub fn from_words(w: &[u64]) -> Result<Self> {
        match w {
            [b, r, o] => Ok(CommStats { bytes_sent: *b, rounds: *r, opened_elements: *o }),
            _ => Err(Error::Frame("stats frame must hold three words".into())),
        }
    }
}

/// A blocking, ordered, reliable frame pipe to the peer.
pub trait Transport: Send {
    fn send(&mut self, frame: &Frame) -> Result<()>;
    fn recv(&mut self, max: usize) -> Result<Frame>;
}

/// Which counter set an exchange is charged to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ledger {
    /// Protocol traffic.
    Online,
    /// Evaluation or bookkeeping traffic kept out of the protocol totals.
    Aux,
}

pub struct Channel {
    inner: Box<dyn Transport>,
    stats: CommStats,
    aux: CommStats,
    max_frame: usize,
    transcript: Sha256,
}

impl Channel {
    pub fn new(inner: Box<dyn Transport>) -> Self {
        Channel {
            inner,
            stats: CommStats::default(),
            aux: CommStats::default(),
            max_frame: DEFAULT_MAX_FRAME,
            transcript: Sha256::new(),
        }
    }

    pub fn with_max_frame(mut self, max: usize) -> Self {
        self.max_frame = max;
        self
    }

    pub fn stats(&self) -> CommStats {
        self.stats
    }

    pub fn aux_stats(&self) -> CommStats {
        self.aux
    }

    /// SHA-256 over every frame this endpoint has sent on the online ledger.
    pub fn transcript_digest(&self) -> String {
        let d = self.transcript.clone().finalize();
        d.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn counters(&mut self, ledger: Ledger) -> &mut CommStats {
        match ledger {
            Ledger::Online => &mut self.stats,
            Ledger::Aux => &mut self.aux,
        }
    }

    fn send_counted(&mut self, frame: &Frame, ledger: Ledger) -> Result<()> {
        if frame.body.len() > self.max_frame {
            return Err(Error::FrameTooLarge { len: frame.body.len(), max: self.max_frame });
        }
        self.inner.send(frame)?;
        self.counters(ledger).bytes_sent += frame.wire_len() as u64;
        if ledger == Ledger::Online {
            self.transcript.update(frame.encode());
        }
        Ok(())
    }

    fn recv_expect(&mut self, tag: u8) -> Result<Frame> {
        let frame = self.inner.recv(self.max_frame)?;
        if frame.tag != tag {
            return Err(Error::TagMismatch { expected: tag, received: frame.tag });
        }
        Ok(frame)
    }

    /// Full-duplex symmetric exchange: one round.
    pub fn exchange(&mut self, out: Frame) -> Result<Frame> {
        self.exchange_on(out, Ledger::Online)
    }

    pub fn exchange_on(&mut self, out: Frame, ledger: Ledger) -> Result<Frame> {
        let tag = out.tag;
        self.send_counted(&out, ledger)?;
        let reply = self.recv_expect(tag)?;
        self.counters(ledger).rounds += 1;
        Ok(reply)
    }

    /// One-way send; does not complete a round.
    pub fn send(&mut self, frame: Frame, ledger: Ledger) -> Result<()> {
        self.send_counted(&frame, ledger)
    }

    pub fn recv(&mut self, tag: MsgTag) -> Result<Frame> {
        self.recv_expect(tag as u8)
    }

    pub fn note_opened(&mut self, elements: u64) {
        self.stats.opened_elements += elements;
    }
}
