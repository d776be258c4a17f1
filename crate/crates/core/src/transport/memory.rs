use std::sync::mpsc::{channel, Receiver, Sender};

use super::{Channel, Frame, Transport};
use crate::error::{Error, Result};

/// In-process backend: two unbounded queues carrying encoded frames.
pub struct MemoryTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

impl Transport for MemoryTransport {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        self.tx.send(frame.encode()).map_err(|_| Error::Disconnected)
    }

    fn recv(&mut self, max: usize) -> Result<Frame> {
        let bytes = self.rx.recv().map_err(|_| Error::Disconnected)?;
        Frame::decode(&bytes, max)
    }
}

pub fn memory_pair() -> (Channel, Channel) {
    let (tx_a, rx_b) = channel();
    let (tx_b, rx_a) = channel();
    (
        Channel::new(Box::new(MemoryTransport { tx: tx_a, rx: rx_a })),
        Channel::new(Box::new(MemoryTransport { tx: tx_b, rx: rx_b })),
    )
}
