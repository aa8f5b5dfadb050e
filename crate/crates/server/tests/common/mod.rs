#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::TcpStream;
use std::os::unix::net::UnixStream;

use tagcache_core::wire::{self, Command, Decoded, RequestFrame, ResponseFrame};

pub trait Duplex: Read + Write {}
impl<T: Read + Write> Duplex for T {}

/// A blocking test connection that sends raw frames and reads responses.
pub struct Conn {
    stream: Box<dyn Duplex + Send>,
    buf: Vec<u8>,
    next_id: u32,
}

impl Conn {
    pub fn tcp(addr: std::net::SocketAddr) -> Conn {
        let s = TcpStream::connect(addr).unwrap();
        s.set_nodelay(true).unwrap();
        Conn::from_stream(Box::new(s))
    }

    pub fn unix(path: &std::path::Path) -> Conn {
        Conn::from_stream(Box::new(UnixStream::connect(path).unwrap()))
    }

    fn from_stream(stream: Box<dyn Duplex + Send>) -> Conn {
        Conn {
            stream,
            buf: Vec::new(),
            next_id: 1,
        }
    }

    pub fn send(&mut self, command: Command) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        self.send_raw(&wire::encode_request(&RequestFrame::new(id, command)).unwrap());
        id
    }

    pub fn send_raw(&mut self, bytes: &[u8]) {
        self.stream.write_all(bytes).unwrap();
    }

    /// The next response, or `None` once the server has closed the connection.
    pub fn try_recv(&mut self) -> Option<ResponseFrame> {
        loop {
            if let Decoded::Frame(f, used) = wire::decode_response(&self.buf, u32::MAX).unwrap() {
                self.buf.drain(..used);
                return Some(f);
            }
            let mut chunk = [0u8; 65536];
            let n = self.stream.read(&mut chunk).unwrap_or(0);
            if n == 0 {
                return None;
            }
            self.buf.extend_from_slice(&chunk[..n]);
        }
    }

    pub fn recv(&mut self) -> ResponseFrame {
        self.try_recv().expect("connection closed")
    }

    pub fn call(&mut self, command: Command) -> ResponseFrame {
        let id = self.send(command);
        let r = self.recv();
        assert_eq!(r.request_id, id);
        r
    }
}
