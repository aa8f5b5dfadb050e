//! A blocking client for the tagcache protocol with optional pipelining.

use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::os::unix::net::UnixStream;

use bytes::Bytes;
use tagcache_core::wire::{self, Command, Decoded, ProtocolError, RequestFrame, ResponseFrame, StatsBody, Status};
use tagcache_core::{CmpOp, Tag};
use thiserror::Error;

use crate::Endpoint;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("protocol violation: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("server closed the connection")]
    Closed,
    #[error("server answered {0:?}")]
    Status(Status),
    #[error("response id {got} does not match request id {expected}")]
    OutOfOrder { expected: u32, got: u32 },
    #[error("request cannot be encoded: {0}")]
    Encode(#[from] wire::EncodeError),
}

enum Transport {
    Tcp(TcpStream),
    Unix(UnixStream),
}

impl Transport {
    fn stream(&mut self) -> &mut dyn ReadWrite {
        match self {
            Transport::Tcp(s) => s,
            Transport::Unix(s) => s,
        }
    }
}

trait ReadWrite: Read + Write {}
impl<T: Read + Write> ReadWrite for T {}

pub struct Client {
    transport: Transport,
    input: Vec<u8>,
    consumed: usize,
    output: Vec<u8>,
    next_id: u32,
}

impl Client {
    pub fn connect(endpoint: &Endpoint) -> Result<Client, ClientError> {
        let transport = match endpoint {
            Endpoint::Tcp(addr) => {
                let s = TcpStream::connect(addr.as_str())?;
                s.set_nodelay(true)?;
                Transport::Tcp(s)
            }
            Endpoint::Unix(path) => Transport::Unix(UnixStream::connect(path)?),
        };
        Ok(Client {
            transport,
            input: Vec::with_capacity(64 * 1024),
            consumed: 0,
            output: Vec::with_capacity(4096),
            next_id: 1,
        })
    }

    /// Writes one request without waiting for its response; returns its id.
    pub fn send(&mut self, command: Command) -> Result<u32, ClientError> {
        let id = self.queue(command)?;
        self.flush()?;
        Ok(id)
    }

    /// Buffers one request; [`Client::flush`] puts buffered requests on the wire.
    pub fn queue(&mut self, command: Command) -> Result<u32, ClientError> {
        let id = self.next_id;
        self.next_id = self.next_id.wrapping_add(1);
        wire::encode_request_into(&RequestFrame::new(id, command), &mut self.output)?;
        Ok(id)
    }

    pub fn flush(&mut self) -> Result<(), ClientError> {
        if !self.output.is_empty() {
            self.transport.stream().write_all(&self.output)?;
            self.output.clear();
        }
        Ok(())
    }

    /// Reads the next response in arrival order.
    pub fn recv(&mut self) -> Result<ResponseFrame, ClientError> {
        loop {
            match wire::decode_response(&self.input[self.consumed..], u32::MAX)? {
                Decoded::Frame(frame, used) => {
                    self.consumed += used;
                    if self.consumed == self.input.len() {
                        self.input.clear();
                        self.consumed = 0;
                    }
                    return Ok(frame);
                }
                Decoded::NeedMore(_) => {}
            }
            if self.consumed > 0 {
                self.input.drain(..self.consumed);
                self.consumed = 0;
            }
            let len = self.input.len();
            self.input.resize(len + 64 * 1024, 0);
            let n = match self.transport.stream().read(&mut self.input[len..]) {
                Ok(n) => n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => 0,
                Err(e) => {
                    self.input.truncate(len);
                    return Err(e.into());
                }
            };
            self.input.truncate(len + n);
            if n == 0 {
                return Err(ClientError::Closed);
            }
        }
    }

    /// Sends one request and waits for its response, whatever its status.
    pub fn call(&mut self, command: Command) -> Result<ResponseFrame, ClientError> {
        let expected = self.send(command)?;
        let r = self.recv()?;
        if r.request_id != expected {
            return Err(ClientError::OutOfOrder { expected, got: r.request_id });
        }
        Ok(r)
    }

    fn call_ok(&mut self, command: Command) -> Result<ResponseFrame, ClientError> {
        let r = self.call(command)?;
        match r.status {
            Status::Ok => Ok(r),
            s => Err(ClientError::Status(s)),
        }
    }

    pub fn noop(&mut self) -> Result<(), ClientError> {
        self.call_ok(Command::Noop).map(drop)
    }

    pub fn get(&mut self, key: &[u8]) -> Result<Option<Bytes>, ClientError> {
        let r = self.call(Command::Get { key: Bytes::copy_from_slice(key) })?;
        match r.status {
            Status::Ok => Ok(Some(wire::parse_get_body(&r.body)?)),
            Status::NotFound => Ok(None),
            s => Err(ClientError::Status(s)),
        }
    }

    /// Stores a record; returns true when it replaced an existing one.
    pub fn put(&mut self, key: &[u8], value: &[u8], tags: &[Tag]) -> Result<bool, ClientError> {
        let r = self.call_ok(Command::Put {
            key: Bytes::copy_from_slice(key),
            value: Bytes::copy_from_slice(value),
            tags: tags.to_vec(),
        })?;
        Ok(r.flags & wire::FLAG_REPLACED != 0)
    }

    /// Returns true when the key existed.
    pub fn delete(&mut self, key: &[u8]) -> Result<bool, ClientError> {
        let r = self.call(Command::Delete { key: Bytes::copy_from_slice(key) })?;
        match r.status {
            Status::Ok => Ok(true),
            Status::NotFound => Ok(false),
            s => Err(ClientError::Status(s)),
        }
    }

    pub fn mget(&mut self, keys: &[&[u8]]) -> Result<Vec<Option<Bytes>>, ClientError> {
        let keys = keys.iter().map(|k| Bytes::copy_from_slice(k)).collect();
        let r = self.call_ok(Command::MGet { keys })?;
        Ok(wire::parse_mget_body(&r.body, r.count)?)
    }

    pub fn tag_query(&mut self, ttype: i64, op: CmpOp, tvalue: i64) -> Result<Vec<Bytes>, ClientError> {
        let r = self.call_ok(Command::TagQuery { ttype, op, tvalue })?;
        Ok(wire::parse_keys_body(&r.body, r.count)?)
    }

    /// Deletes every record matching the predicate; returns how many went.
    pub fn tag_expire(&mut self, ttype: i64, op: CmpOp, tvalue: i64) -> Result<u32, ClientError> {
        let r = self.call_ok(Command::TagExpire { ttype, op, tvalue })?;
        Ok(wire::parse_expire_body(&r.body)?)
    }

    pub fn stats(&mut self) -> Result<StatsBody, ClientError> {
        let r = self.call_ok(Command::Stats)?;
        Ok(StatsBody::decode(&r.body, r.count)?)
    }

    /// Asks the server to close the connection after answering.
    pub fn quit(mut self) -> Result<(), ClientError> {
        self.call_ok(Command::Quit).map(drop)
    }
}
