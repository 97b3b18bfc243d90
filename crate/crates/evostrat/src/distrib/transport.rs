//! Message transports. TCP and in-process channels share the same encoded
//! frame path, so the in-process backend exercises the exact bytes that go
//! over the network.

use std::io::BufReader;
use std::net::TcpStream;
use std::sync::mpsc;

use crate::error::{Error, Result};
use crate::wire::{self, Message};

pub trait MsgSender: Send {
    fn send(&mut self, msg: &Message) -> Result<()>;
}

pub trait MsgReceiver: Send {
    fn recv(&mut self) -> Result<Message>;
}

/// A bidirectional peer link, splittable into independently owned halves.
pub struct Connection {
    pub sender: Box<dyn MsgSender>,
    pub receiver: Box<dyn MsgReceiver>,
}

struct TcpSender(TcpStream);

impl MsgSender for TcpSender {
    fn send(&mut self, msg: &Message) -> Result<()> {
        wire::write_message(&mut self.0, msg)
    }
}

struct TcpReceiver(BufReader<TcpStream>);

impl MsgReceiver for TcpReceiver {
    fn recv(&mut self) -> Result<Message> {
        wire::read_message(&mut self.0)
    }
}

impl Connection {
    pub fn from_tcp(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        let read_half = stream.try_clone()?;
        Ok(Connection {
            sender: Box::new(TcpSender(stream)),
            receiver: Box::new(TcpReceiver(BufReader::new(read_half))),
        })
    }
}

struct ChannelSender(mpsc::Sender<Vec<u8>>);

impl MsgSender for ChannelSender {
    fn send(&mut self, msg: &Message) -> Result<()> {
        self.0
            .send(wire::encode(msg))
            .map_err(|_| Error::Io(std::io::ErrorKind::BrokenPipe.into()))
    }
}

struct ChannelReceiver(mpsc::Receiver<Vec<u8>>);

impl MsgReceiver for ChannelReceiver {
    fn recv(&mut self) -> Result<Message> {
        let bytes = self
            .0
            .recv()
            .map_err(|_| Error::Io(std::io::ErrorKind::UnexpectedEof.into()))?;
        wire::decode_frame(&bytes).map(|(msg, _)| msg)
    }
}

/// Linked in-process duplex: returns the two endpoints of one connection.
/// Frames are encoded into bytes and decoded on receipt, exactly as on TCP.
pub fn channel_pair() -> (Connection, Connection) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (
        Connection { sender: Box::new(ChannelSender(a_tx)), receiver: Box::new(ChannelReceiver(a_rx)) },
        Connection { sender: Box::new(ChannelSender(b_tx)), receiver: Box::new(ChannelReceiver(b_rx)) },
    )
}
