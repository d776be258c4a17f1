use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::mpsc::{channel, Sender};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::{Channel, Frame, Transport, HEADER_BYTES};
use crate::error::{Error, Result};

/// TCP backend. Writes go through a dedicated thread so that two parties
/// sending large frames at the same time cannot deadlock on full buffers.
pub struct TcpTransport {
    tx: Option<Sender<Vec<u8>>>,
    writer: Option<JoinHandle<()>>,
    reader: BufReader<TcpStream>,
    stream: TcpStream,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        let write_half = stream.try_clone()?;
        let reader = BufReader::with_capacity(1 << 16, stream.try_clone()?);
        let (tx, rx) = channel::<Vec<u8>>();
        let writer = thread::spawn(move || {
            let mut w = BufWriter::with_capacity(1 << 16, write_half);
            for bytes in rx {
                if w.write_all(&bytes).and_then(|_| w.flush()).is_err() {
                    break;
                }
            }
        });
        Ok(TcpTransport { tx: Some(tx), writer: Some(writer), reader, stream })
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        self.tx.as_ref().ok_or(Error::Disconnected)?.send(frame.encode()).map_err(|_| Error::Disconnected)
    }

    fn recv(&mut self, max: usize) -> Result<Frame> {
        let mut header = [0u8; HEADER_BYTES];
        read_exact(&mut self.reader, &mut header)?;
        let len = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
        if len > max {
            return Err(Error::FrameTooLarge { len, max });
        }
        let mut body = vec![0u8; len];
        read_exact(&mut self.reader, &mut body)?;
        Ok(Frame { tag: header[4], body })
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof | ErrorKind::ConnectionReset | ErrorKind::BrokenPipe => Error::Disconnected,
        _ => Error::Io(e),
    })
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(h) = self.writer.take() {
            let _ = h.join();
        }
        let _ = self.stream.shutdown(Shutdown::Write);
    }
}

/// Accepts exactly one peer.
pub fn tcp_accept(listener: &TcpListener) -> Result<Channel> {
    let (stream, _) = listener.accept()?;
    Ok(Channel::new(Box::new(TcpTransport::new(stream)?)))
}

/// Connects to `addr`, retrying every 100 ms while the peer is not yet listening.
pub fn tcp_connect(addr: &str, retries: u32) -> Result<Channel> {
    let mut last = None;
    for _ in 0..=retries {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(Channel::new(Box::new(TcpTransport::new(s)?))),
            Err(e) => {
                last = Some(e);
                thread::sleep(Duration::from_millis(100));
            }
        }
    }
    Err(Error::Io(last.expect("at least one attempt")))
}
