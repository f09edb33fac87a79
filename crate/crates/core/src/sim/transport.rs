use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, Sender};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::wire::MAX_FRAME_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transport {
    InProcess,
    TcpLoopback,
}

/// A duplex, message-preserving pipe carrying whole frames.
///
/// An empty frame is a harness-level "nothing to say" marker: the token
/// sends it after a query with no match so the system can move on.
pub trait FrameLink {
    fn send(&mut self, frame: &[u8]) -> io::Result<()>;
    fn recv(&mut self) -> io::Result<Vec<u8>>;
}

impl<L: FrameLink + ?Sized> FrameLink for &mut L {
    fn send(&mut self, frame: &[u8]) -> io::Result<()> {
        (**self).send(frame)
    }

    fn recv(&mut self) -> io::Result<Vec<u8>> {
        (**self).recv()
    }
}

#[derive(Debug)]
pub struct ChannelLink {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

pub fn channel_pair() -> (ChannelLink, ChannelLink) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (
        ChannelLink { tx: a_tx, rx: a_rx },
        ChannelLink { tx: b_tx, rx: b_rx },
    )
}

impl FrameLink for ChannelLink {
    fn send(&mut self, frame: &[u8]) -> io::Result<()> {
        self.tx
            .send(frame.to_vec())
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "peer hung up"))
    }

    fn recv(&mut self) -> io::Result<Vec<u8>> {
        self.rx
            .recv()
            .map_err(|_| io::Error::new(io::ErrorKind::UnexpectedEof, "peer hung up"))
    }
}

/// TCP stream carrying `u16` big-endian length-prefixed frames.
#[derive(Debug)]
pub struct TcpLink {
    stream: TcpStream,
}

const TCP_TIMEOUT: Duration = Duration::from_secs(30);

impl TcpLink {
    pub fn new(stream: TcpStream) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(TCP_TIMEOUT))?;
        stream.set_write_timeout(Some(TCP_TIMEOUT))?;
        Ok(Self { stream })
    }
}

impl FrameLink for TcpLink {
    fn send(&mut self, frame: &[u8]) -> io::Result<()> {
        if frame.len() > MAX_FRAME_LEN {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "frame too long"));
        }
        let mut buf = Vec::with_capacity(frame.len() + 2);
        buf.extend_from_slice(&(frame.len() as u16).to_be_bytes());
        buf.extend_from_slice(frame);
        self.stream.write_all(&buf)
    }

    fn recv(&mut self) -> io::Result<Vec<u8>> {
        let mut len = [0u8; 2];
        self.stream.read_exact(&mut len)?;
        let mut frame = vec![0u8; usize::from(u16::from_be_bytes(len))];
        self.stream.read_exact(&mut frame)?;
        Ok(frame)
    }
}

/// A connected pair of loopback TCP links.
pub fn tcp_pair() -> io::Result<(TcpLink, TcpLink)> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let client = TcpStream::connect(listener.local_addr()?)?;
    let (server, _) = listener.accept()?;
    Ok((TcpLink::new(server)?, TcpLink::new(client)?))
}
