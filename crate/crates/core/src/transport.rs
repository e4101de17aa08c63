//! Moving frames between peers: newline-delimited lines over any byte
//! stream (TCP in practice), or an in-memory channel pair for tests and
//! fast simulation.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use thiserror::Error;

use crate::protocol::{encode_message, EncodeError, ProtocolMessage, MAX_FRAME_LEN};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("timed out waiting for a frame")]
    Timeout,
    #[error("frame exceeds {MAX_FRAME_LEN} bytes")]
    FrameTooLong,
    #[error("peer disconnected mid-frame")]
    Truncated,
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("transport I/O: {0}")]
    Io(io::Error),
}

impl From<io::Error> for TransportError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => Self::Timeout,
            _ => Self::Io(e),
        }
    }
}

pub trait FrameTransport {
    /// Encodes and sends one message, returning the exact bytes written.
    fn send(&mut self, msg: &ProtocolMessage) -> Result<Vec<u8>, TransportError>;

    /// Receives one raw newline-terminated frame; `None` on orderly EOF.
    fn recv(&mut self) -> Result<Option<Vec<u8>>, TransportError>;
}

/// Frames over a byte stream.
pub struct LineTransport<R, W> {
    reader: BufReader<R>,
    writer: W,
}

impl<R: Read, W: Write> LineTransport<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        Self {
            reader: BufReader::new(reader),
            writer,
        }
    }
}

impl LineTransport<TcpStream, TcpStream> {
    pub fn tcp(stream: TcpStream) -> io::Result<Self> {
        let reader = stream.try_clone()?;
        Ok(Self::new(reader, stream))
    }
}

impl<R: Read, W: Write> FrameTransport for LineTransport<R, W> {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<Vec<u8>, TransportError> {
        let line = encode_message(msg)?;
        self.writer.write_all(&line)?;
        self.writer.flush()?;
        Ok(line)
    }

    fn recv(&mut self) -> Result<Option<Vec<u8>>, TransportError> {
        let mut line = Vec::new();
        (&mut self.reader)
            .take(MAX_FRAME_LEN as u64)
            .read_until(b'\n', &mut line)?;
        if line.ends_with(b"\n") {
            return Ok(Some(line));
        }
        if line.len() >= MAX_FRAME_LEN {
            return Err(TransportError::FrameTooLong);
        }
        if line.is_empty() {
            return Ok(None);
        }
        Err(TransportError::Truncated)
    }
}

/// One end of an in-memory duplex channel. Dropping an end is seen by the
/// other as EOF.
pub struct ChannelTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    timeout: Option<Duration>,
}

impl ChannelTransport {
    pub fn pair(timeout: Option<Duration>) -> (Self, Self) {
        let (a_tx, b_rx) = mpsc::channel();
        let (b_tx, a_rx) = mpsc::channel();
        (
            Self {
                tx: a_tx,
                rx: a_rx,
                timeout,
            },
            Self {
                tx: b_tx,
                rx: b_rx,
                timeout,
            },
        )
    }
}

impl FrameTransport for ChannelTransport {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<Vec<u8>, TransportError> {
        let line = encode_message(msg)?;
        self.tx
            .send(line.clone())
            .map_err(|_| TransportError::Io(io::ErrorKind::BrokenPipe.into()))?;
        Ok(line)
    }

    fn recv(&mut self) -> Result<Option<Vec<u8>>, TransportError> {
        match self.timeout {
            Some(t) => match self.rx.recv_timeout(t) {
                Ok(line) => Ok(Some(line)),
                Err(RecvTimeoutError::Timeout) => Err(TransportError::Timeout),
                Err(RecvTimeoutError::Disconnected) => Ok(None),
            },
            None => Ok(self.rx.recv().ok()),
        }
    }
}
