//! Binary request/response framing.
//!
//! Every frame is a 14-byte little-endian header followed by `body_len`
//! bytes:
//!
//! ```text
//! offset  size  request        response
//! 0       1     magic 0xC5     magic 0xC6
//! 1       1     version 0x01   version 0x01
//! 2       1     opcode         status
//! 3       1     flags          flags
//! 4       4     request_id     request_id (echoed)
//! 8       2     count          count
//! 10      4     body_len       body_len
//! ```
//!
//! Decoding is incremental: a short buffer yields [`Decoded::NeedMore`]
//! with the exact number of missing bytes, first for the header and then
//! for the body. Nothing is allocated for a body until all of it is present.

use bytes::{BufMut, Bytes};
use thiserror::Error;

use crate::types::{CmpOp, Tag};

pub const REQUEST_MAGIC: u8 = 0xC5;
pub const RESPONSE_MAGIC: u8 = 0xC6;
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 14;
pub const DEFAULT_MAX_BODY: u32 = 16 << 20;

/// Response flag bit set on PUT when an existing record was replaced.
pub const FLAG_REPLACED: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Opcode {
    Noop = 0x00,
    Get = 0x01,
    Put = 0x02,
    Delete = 0x03,
    MGet = 0x04,
    TagQuery = 0x05,
    TagExpire = 0x06,
    Stats = 0x07,
    Quit = 0x08,
}

impl Opcode {
    pub fn from_u8(b: u8) -> Option<Opcode> {
        Some(match b {
            0x00 => Opcode::Noop,
            0x01 => Opcode::Get,
            0x02 => Opcode::Put,
            0x03 => Opcode::Delete,
            0x04 => Opcode::MGet,
            0x05 => Opcode::TagQuery,
            0x06 => Opcode::TagExpire,
            0x07 => Opcode::Stats,
            0x08 => Opcode::Quit,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Status {
    Ok = 0,
    NotFound = 1,
    TooLarge = 2,
    BadRequest = 3,
    ServerBusy = 4,
}

impl Status {
    pub fn from_u8(b: u8) -> Option<Status> {
        Some(match b {
            0 => Status::Ok,
            1 => Status::NotFound,
            2 => Status::TooLarge,
            3 => Status::BadRequest,
            4 => Status::ServerBusy,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("bad magic byte {0:#04x}")]
    BadMagic(u8),
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("declared body of {len} bytes exceeds the {max} byte limit")]
    BodyTooLarge { len: u32, max: u32 },
    #[error("malformed {0} body")]
    Malformed(&'static str),
    #[error("unknown status byte {0}")]
    BadStatus(u8),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("{0} does not fit its length field")]
    FieldTooLarge(&'static str),
    #[error("non-OK response carries a body")]
    BodyOnError,
}

/// Result of an incremental decode attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded<T> {
    /// This many more bytes are required before anything can be consumed.
    NeedMore(usize),
    /// A complete frame and the number of buffer bytes it occupied.
    Frame(T, usize),
}

/// A decoded request command. Opcodes outside the table are preserved as
/// [`Command::Unknown`] so the caller can answer `BAD_REQUEST` without
/// dropping the connection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Noop,
    Get { key: Bytes },
    Put { key: Bytes, value: Bytes, tags: Vec<Tag> },
    Delete { key: Bytes },
    MGet { keys: Vec<Bytes> },
    TagQuery { ttype: i64, op: CmpOp, tvalue: i64 },
    TagExpire { ttype: i64, op: CmpOp, tvalue: i64 },
    Stats,
    Quit,
    Unknown { opcode: u8, count: u16, body: Bytes },
}

impl Command {
    pub fn opcode(&self) -> u8 {
        match self {
            Command::Noop => Opcode::Noop as u8,
            Command::Get { .. } => Opcode::Get as u8,
            Command::Put { .. } => Opcode::Put as u8,
            Command::Delete { .. } => Opcode::Delete as u8,
            Command::MGet { .. } => Opcode::MGet as u8,
            Command::TagQuery { .. } => Opcode::TagQuery as u8,
            Command::TagExpire { .. } => Opcode::TagExpire as u8,
            Command::Stats => Opcode::Stats as u8,
            Command::Quit => Opcode::Quit as u8,
            Command::Unknown { opcode, .. } => *opcode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestFrame {
    pub request_id: u32,
    pub flags: u8,
    pub command: Command,
}

impl RequestFrame {
    pub fn new(request_id: u32, command: Command) -> RequestFrame {
        RequestFrame {
            request_id,
            flags: 0,
            command,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseFrame {
    pub status: Status,
    pub flags: u8,
    pub request_id: u32,
    pub count: u16,
    pub body: Bytes,
}

impl ResponseFrame {
    pub fn ok(request_id: u32, count: u16, body: Bytes) -> ResponseFrame {
        ResponseFrame {
            status: Status::Ok,
            flags: 0,
            request_id,
            count,
            body,
        }
    }

    /// A body-less response with the given status.
    pub fn status(request_id: u32, status: Status) -> ResponseFrame {
        ResponseFrame {
            status,
            flags: 0,
            request_id,
            count: 0,
            body: Bytes::new(),
        }
    }
}

fn u16_len(n: usize, what: &'static str) -> Result<u16, EncodeError> {
    u16::try_from(n).map_err(|_| EncodeError::FieldTooLarge(what))
}

fn u32_len(n: usize, what: &'static str) -> Result<u32, EncodeError> {
    u32::try_from(n).map_err(|_| EncodeError::FieldTooLarge(what))
}

fn put_header(out: &mut Vec<u8>, magic: u8, code: u8, flags: u8, id: u32, count: u16, body_len: u32) {
    out.reserve(HEADER_LEN + body_len as usize);
    out.put_u8(magic);
    out.put_u8(VERSION);
    out.put_u8(code);
    out.put_u8(flags);
    out.put_u32_le(id);
    out.put_u16_le(count);
    out.put_u32_le(body_len);
}

fn put_key(body: &mut Vec<u8>, key: &[u8]) -> Result<(), EncodeError> {
    body.put_u16_le(u16_len(key.len(), "key")?);
    body.extend_from_slice(key);
    Ok(())
}

fn put_tag_cmp(body: &mut Vec<u8>, ttype: i64, op: CmpOp, tvalue: i64) {
    body.put_i64_le(ttype);
    body.put_u8(op.code());
    body.put_i64_le(tvalue);
}

/// Appends the encoding of `frame` to `out`.
pub fn encode_request_into(frame: &RequestFrame, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    let mut body = Vec::new();
    let count: u16 = match &frame.command {
        Command::Noop | Command::Stats | Command::Quit => 0,
        Command::Get { key } | Command::Delete { key } => {
            put_key(&mut body, key)?;
            0
        }
        Command::Put { key, value, tags } => {
            put_key(&mut body, key)?;
            body.put_u32_le(u32_len(value.len(), "value")?);
            body.extend_from_slice(value);
            for t in tags {
                body.put_i64_le(t.ttype);
                body.put_i64_le(t.tvalue);
            }
            u16_len(tags.len(), "tag count")?
        }
        Command::MGet { keys } => {
            for k in keys {
                put_key(&mut body, k)?;
            }
            u16_len(keys.len(), "key count")?
        }
        Command::TagQuery { ttype, op, tvalue } | Command::TagExpire { ttype, op, tvalue } => {
            put_tag_cmp(&mut body, *ttype, *op, *tvalue);
            0
        }
        Command::Unknown { count, body: raw, .. } => {
            body.extend_from_slice(raw);
            *count
        }
    };
    let body_len = u32_len(body.len(), "body")?;
    put_header(
        out,
        REQUEST_MAGIC,
        frame.command.opcode(),
        frame.flags,
        frame.request_id,
        count,
        body_len,
    );
    out.extend_from_slice(&body);
    Ok(())
}

pub fn encode_request(frame: &RequestFrame) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::new();
    encode_request_into(frame, &mut out)?;
    Ok(out)
}

pub fn encode_response_into(frame: &ResponseFrame, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    if frame.status != Status::Ok && !frame.body.is_empty() {
        return Err(EncodeError::BodyOnError);
    }
    let body_len = u32_len(frame.body.len(), "body")?;
    put_header(
        out,
        RESPONSE_MAGIC,
        frame.status as u8,
        frame.flags,
        frame.request_id,
        frame.count,
        body_len,
    );
    out.extend_from_slice(&frame.body);
    Ok(())
}

pub fn encode_response(frame: &ResponseFrame) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::new();
    encode_response_into(frame, &mut out)?;
    Ok(out)
}

struct Header {
    code: u8,
    flags: u8,
    request_id: u32,
    count: u16,
    body_len: u32,
}

/// Validates the header in `buf` and reports how many bytes the whole
/// frame needs.
fn read_header(buf: &[u8], magic: u8, max_body: u32) -> Result<Result<Header, usize>, ProtocolError> {
    // Reject garbage as early as the first byte allows.
    if let Some(&m) = buf.first() {
        if m != magic {
            return Err(ProtocolError::BadMagic(m));
        }
    }
    if let Some(&v) = buf.get(1) {
        if v != VERSION {
            return Err(ProtocolError::BadVersion(v));
        }
    }
    if buf.len() < HEADER_LEN {
        return Ok(Err(HEADER_LEN - buf.len()));
    }
    let body_len = u32::from_le_bytes(buf[10..14].try_into().expect("4 bytes"));
    if body_len > max_body {
        return Err(ProtocolError::BodyTooLarge {
            len: body_len,
            max: max_body,
        });
    }
    let total = HEADER_LEN + body_len as usize;
    if buf.len() < total {
        return Ok(Err(total - buf.len()));
    }
    Ok(Ok(Header {
        code: buf[2],
        flags: buf[3],
        request_id: u32::from_le_bytes(buf[4..8].try_into().expect("4 bytes")),
        count: u16::from_le_bytes(buf[8..10].try_into().expect("2 bytes")),
        body_len,
    }))
}

struct Cursor<'a> {
    buf: &'a [u8],
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        if self.buf.len() < n {
            return Err(ProtocolError::Malformed(self.what));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, ProtocolError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ProtocolError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ProtocolError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn i64(&mut self) -> Result<i64, ProtocolError> {
        Ok(self.u64()? as i64)
    }

    fn key(&mut self) -> Result<Bytes, ProtocolError> {
        let n = self.u16()? as usize;
        Ok(Bytes::copy_from_slice(self.take(n)?))
    }

    fn value(&mut self) -> Result<Bytes, ProtocolError> {
        let n = self.u32()? as usize;
        Ok(Bytes::copy_from_slice(self.take(n)?))
    }

    fn finish(self) -> Result<(), ProtocolError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(ProtocolError::Malformed(self.what))
        }
    }
}

fn parse_command(h: &Header, body: &[u8]) -> Result<Command, ProtocolError> {
    let Some(opcode) = Opcode::from_u8(h.code) else {
        return Ok(Command::Unknown {
            opcode: h.code,
            count: h.count,
            body: Bytes::copy_from_slice(body),
        });
    };
    let what = match opcode {
        Opcode::Noop => "NOOP",
        Opcode::Get => "GET",
        Opcode::Put => "PUT",
        Opcode::Delete => "DELETE",
        Opcode::MGet => "MGET",
        Opcode::TagQuery => "TAG_QUERY",
        Opcode::TagExpire => "TAG_EXPIRE",
        Opcode::Stats => "STATS",
        Opcode::Quit => "QUIT",
    };
    if h.count != 0 && !matches!(opcode, Opcode::Put | Opcode::MGet) {
        return Err(ProtocolError::Malformed(what));
    }
    let mut c = Cursor { buf: body, what };
    let cmd = match opcode {
        Opcode::Noop => Command::Noop,
        Opcode::Stats => Command::Stats,
        Opcode::Quit => Command::Quit,
        Opcode::Get => Command::Get { key: c.key()? },
        Opcode::Delete => Command::Delete { key: c.key()? },
        Opcode::Put => {
            let key = c.key()?;
            let value = c.value()?;
            // Exactly 16 bytes per tag must remain.
            if c.buf.len() != 16 * h.count as usize {
                return Err(ProtocolError::Malformed(what));
            }
            let tags = (0..h.count)
                .map(|_| Ok(Tag::new(c.i64()?, c.i64()?)))
                .collect::<Result<Vec<_>, ProtocolError>>()?;
            Command::Put { key, value, tags }
        }
        Opcode::MGet => {
            let keys = (0..h.count).map(|_| c.key()).collect::<Result<Vec<_>, _>>()?;
            Command::MGet { keys }
        }
        Opcode::TagQuery | Opcode::TagExpire => {
            let ttype = c.i64()?;
            let op = CmpOp::from_code(c.u8()?).ok_or(ProtocolError::Malformed(what))?;
            let tvalue = c.i64()?;
            if opcode == Opcode::TagQuery {
                Command::TagQuery { ttype, op, tvalue }
            } else {
                Command::TagExpire { ttype, op, tvalue }
            }
        }
    };
    c.finish()?;
    Ok(cmd)
}

/// Decodes one request from the front of `buf`.
pub fn decode_request(buf: &[u8], max_body: u32) -> Result<Decoded<RequestFrame>, ProtocolError> {
    let h = match read_header(buf, REQUEST_MAGIC, max_body)? {
        Ok(h) => h,
        Err(missing) => return Ok(Decoded::NeedMore(missing)),
    };
    let total = HEADER_LEN + h.body_len as usize;
    let command = parse_command(&h, &buf[HEADER_LEN..total])?;
    Ok(Decoded::Frame(
        RequestFrame {
            request_id: h.request_id,
            flags: h.flags,
            command,
        },
        total,
    ))
}

/// Decodes one response from the front of `buf`.
pub fn decode_response(buf: &[u8], max_body: u32) -> Result<Decoded<ResponseFrame>, ProtocolError> {
    let h = match read_header(buf, RESPONSE_MAGIC, max_body)? {
        Ok(h) => h,
        Err(missing) => return Ok(Decoded::NeedMore(missing)),
    };
    let status = Status::from_u8(h.code).ok_or(ProtocolError::BadStatus(h.code))?;
    if status != Status::Ok && h.body_len != 0 {
        return Err(ProtocolError::Malformed("error response"));
    }
    let total = HEADER_LEN + h.body_len as usize;
    Ok(Decoded::Frame(
        ResponseFrame {
            status,
            flags: h.flags,
            request_id: h.request_id,
            count: h.count,
            body: Bytes::copy_from_slice(&buf[HEADER_LEN..total]),
        },
        total,
    ))
}

// Typed response bodies. The response header carries no opcode, so the
// caller picks the parser matching the request it sent.

pub fn get_body(value: &[u8]) -> Result<Bytes, EncodeError> {
    let mut b = Vec::with_capacity(4 + value.len());
    b.put_u32_le(u32_len(value.len(), "value")?);
    b.extend_from_slice(value);
    Ok(b.into())
}

pub fn parse_get_body(body: &[u8]) -> Result<Bytes, ProtocolError> {
    let mut c = Cursor { buf: body, what: "GET response" };
    let v = c.value()?;
    c.finish()?;
    Ok(v)
}

/// One MGET result; `value` is `None` for `NOT_FOUND`.
pub fn mget_body<'a, I>(items: I) -> Result<Bytes, EncodeError>
where
    I: IntoIterator<Item = Option<&'a [u8]>>,
{
    let mut b = Vec::new();
    for item in items {
        match item {
            Some(v) => {
                b.put_u8(Status::Ok as u8);
                b.put_u32_le(u32_len(v.len(), "value")?);
                b.extend_from_slice(v);
            }
            None => {
                b.put_u8(Status::NotFound as u8);
                b.put_u32_le(0);
            }
        }
    }
    Ok(b.into())
}

pub fn parse_mget_body(body: &[u8], count: u16) -> Result<Vec<Option<Bytes>>, ProtocolError> {
    let mut c = Cursor { buf: body, what: "MGET response" };
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let status = c.u8()?;
        let value = c.value()?;
        match Status::from_u8(status) {
            Some(Status::Ok) => out.push(Some(value)),
            Some(Status::NotFound) if value.is_empty() => out.push(None),
            _ => return Err(ProtocolError::Malformed("MGET response")),
        }
    }
    c.finish()?;
    Ok(out)
}

pub fn keys_body<'a, I: IntoIterator<Item = &'a [u8]>>(keys: I) -> Result<Bytes, EncodeError> {
    let mut b = Vec::new();
    for k in keys {
        put_key(&mut b, k)?;
    }
    Ok(b.into())
}

pub fn parse_keys_body(body: &[u8], count: u16) -> Result<Vec<Bytes>, ProtocolError> {
    let mut c = Cursor { buf: body, what: "TAG_QUERY response" };
    let keys = (0..count).map(|_| c.key()).collect::<Result<Vec<_>, _>>()?;
    c.finish()?;
    Ok(keys)
}

pub fn expire_body(deleted: u32) -> Bytes {
    Bytes::copy_from_slice(&deleted.to_le_bytes())
}

pub fn parse_expire_body(body: &[u8]) -> Result<u32, ProtocolError> {
    let mut c = Cursor { buf: body, what: "TAG_EXPIRE response" };
    let n = c.u32()?;
    c.finish()?;
    Ok(n)
}

/// Counters appended to the STATS body when the server runs instrumented.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InstrumentCounters {
    pub shared_acquisitions: u64,
    pub exclusive_acquisitions: u64,
    pub handoffs: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StatsBody {
    pub records: u64,
    pub used_bytes: u64,
    pub evictions: u64,
    pub buckets: u32,
    pub instrument: Option<InstrumentCounters>,
}

pub const STATS_BODY_LEN: usize = 28;
pub const STATS_EXTENDED_LEN: usize = STATS_BODY_LEN + 24;

impl StatsBody {
    /// The body and the header `count` (1 when instrument counters follow).
    pub fn encode(&self) -> (Bytes, u16) {
        let mut b = Vec::with_capacity(STATS_EXTENDED_LEN);
        b.put_u64_le(self.records);
        b.put_u64_le(self.used_bytes);
        b.put_u64_le(self.evictions);
        b.put_u32_le(self.buckets);
        let count = match self.instrument {
            Some(i) => {
                b.put_u64_le(i.shared_acquisitions);
                b.put_u64_le(i.exclusive_acquisitions);
                b.put_u64_le(i.handoffs);
                1
            }
            None => 0,
        };
        (b.into(), count)
    }

    pub fn decode(body: &[u8], count: u16) -> Result<StatsBody, ProtocolError> {
        let mut c = Cursor { buf: body, what: "STATS response" };
        let mut s = StatsBody {
            records: c.u64()?,
            used_bytes: c.u64()?,
            evictions: c.u64()?,
            buckets: c.u32()?,
            instrument: None,
        };
        if count == 1 {
            s.instrument = Some(InstrumentCounters {
                shared_acquisitions: c.u64()?,
                exclusive_acquisitions: c.u64()?,
                handoffs: c.u64()?,
            });
        }
        c.finish()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bytes(s: &[u8]) -> Bytes {
        Bytes::copy_from_slice(s)
    }

    #[test]
    fn noop_header_layout() {
        let b = encode_request(&RequestFrame::new(7, Command::Noop)).unwrap();
        assert_eq!(b, [0xC5, 0x01, 0x00, 0x00, 7, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn get_body_len() {
        let b = encode_request(&RequestFrame::new(1, Command::Get { key: bytes(b"a") })).unwrap();
        assert_eq!(&b[10..14], &[3, 0, 0, 0]);
        assert_eq!(b.len(), HEADER_LEN + 3);
        assert_eq!(&b[14..], &[1, 0, b'a']);
    }

    #[test]
    fn put_layout() {
        let cmd = Command::Put {
            key: bytes(b"k"),
            value: bytes(b"vv"),
            tags: vec![Tag::new(1, -1)],
        };
        let b = encode_request(&RequestFrame::new(0x01020304, cmd)).unwrap();
        let mut want = vec![0xC5, 1, 2, 0, 4, 3, 2, 1, 1, 0, 25, 0, 0, 0];
        want.extend_from_slice(&[1, 0, b'k', 2, 0, 0, 0, b'v', b'v']);
        want.extend_from_slice(&1i64.to_le_bytes());
        want.extend_from_slice(&(-1i64).to_le_bytes());
        assert_eq!(b, want);
    }

    #[test]
    fn empty_buffer_needs_header() {
        assert_eq!(decode_request(&[], DEFAULT_MAX_BODY), Ok(Decoded::NeedMore(14)));
    }

    #[test]
    fn bad_magic_and_version() {
        assert_eq!(
            decode_request(&[0x00], DEFAULT_MAX_BODY),
            Err(ProtocolError::BadMagic(0))
        );
        assert_eq!(
            decode_request(&[0xC5, 0x02], DEFAULT_MAX_BODY),
            Err(ProtocolError::BadVersion(2))
        );
        // A response is not a request.
        let resp = encode_response(&ResponseFrame::status(1, Status::Ok)).unwrap();
        assert_eq!(
            decode_request(&resp, DEFAULT_MAX_BODY),
            Err(ProtocolError::BadMagic(0xC6))
        );
    }

    #[test]
    fn oversize_body_rejected_from_header() {
        let mut h = vec![0xC5, 1, 0, 0, 0, 0, 0, 0, 0, 0];
        h.extend_from_slice(&(1025u32).to_le_bytes());
        assert_eq!(
            decode_request(&h, 1024),
            Err(ProtocolError::BodyTooLarge { len: 1025, max: 1024 })
        );
        assert_eq!(decode_request(&h, 1025), Ok(Decoded::NeedMore(1025)));
    }

    #[test]
    fn unknown_opcode_is_a_frame() {
        let f = RequestFrame::new(
            3,
            Command::Unknown {
                opcode: 0x42,
                count: 9,
                body: bytes(b"xyz"),
            },
        );
        let b = encode_request(&f).unwrap();
        assert_eq!(decode_request(&b, DEFAULT_MAX_BODY), Ok(Decoded::Frame(f, 17)));
    }

    #[test]
    fn truncated_inner_fields_are_errors() {
        // GET whose key length claims more bytes than the body holds.
        let mut b = vec![0xC5, 1, 1, 0, 0, 0, 0, 0, 0, 0, 3, 0, 0, 0];
        b.extend_from_slice(&[5, 0, b'a']);
        assert_eq!(
            decode_request(&b, DEFAULT_MAX_BODY),
            Err(ProtocolError::Malformed("GET"))
        );
        // NOOP with a stray body byte.
        let b = [0xC5, 1, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 9];
        assert_eq!(
            decode_request(&b, DEFAULT_MAX_BODY),
            Err(ProtocolError::Malformed("NOOP"))
        );
        // TAG_QUERY with an unknown comparison code.
        let mut b = vec![0xC5, 1, 5, 0, 0, 0, 0, 0, 0, 0, 17, 0, 0, 0];
        b.extend_from_slice(&[0; 8]);
        b.push(7);
        b.extend_from_slice(&[0; 8]);
        assert_eq!(
            decode_request(&b, DEFAULT_MAX_BODY),
            Err(ProtocolError::Malformed("TAG_QUERY"))
        );
    }

    #[test]
    fn response_invariants() {
        let ok = encode_response(&ResponseFrame::status(9, Status::Ok)).unwrap();
        assert_eq!(ok.len(), 14);
        let nf = ResponseFrame::status(9, Status::NotFound);
        let b = encode_response(&nf).unwrap();
        assert_eq!(&b[10..14], &[0, 0, 0, 0]);
        let bad = ResponseFrame {
            body: bytes(b"x"),
            ..nf
        };
        assert_eq!(encode_response(&bad), Err(EncodeError::BodyOnError));
        let mut raw = encode_response(&ResponseFrame::ok(1, 0, bytes(b"x"))).unwrap();
        raw[2] = Status::NotFound as u8;
        assert!(decode_response(&raw, DEFAULT_MAX_BODY).is_err());
    }

    #[test]
    fn oversize_key_fails_to_encode() {
        let f = RequestFrame::new(0, Command::Get { key: Bytes::from(vec![0; 70_000]) });
        assert_eq!(encode_request(&f), Err(EncodeError::FieldTooLarge("key")));
    }

    #[test]
    fn typed_bodies_roundtrip() {
        let b = get_body(b"hello").unwrap();
        assert_eq!(parse_get_body(&b).unwrap(), bytes(b"hello"));
        let m = mget_body([Some(&b"a"[..]), None, Some(&b""[..])]).unwrap();
        assert_eq!(
            parse_mget_body(&m, 3).unwrap(),
            vec![Some(bytes(b"a")), None, Some(Bytes::new())]
        );
        let k = keys_body([&b"x"[..], &b"yz"[..]]).unwrap();
        assert_eq!(parse_keys_body(&k, 2).unwrap(), vec![bytes(b"x"), bytes(b"yz")]);
        assert_eq!(parse_expire_body(&expire_body(42)).unwrap(), 42);
        for instrument in [None, Some(InstrumentCounters { shared_acquisitions: 1, exclusive_acquisitions: 2, handoffs: 3 })] {
            let s = StatsBody { records: 1, used_bytes: 2, evictions: 3, buckets: 256, instrument };
            let (body, count) = s.encode();
            assert_eq!(body.len(), if instrument.is_some() { STATS_EXTENDED_LEN } else { STATS_BODY_LEN });
            assert_eq!(StatsBody::decode(&body, count).unwrap(), s);
        }
    }

    pub(crate) fn arb_command() -> impl Strategy<Value = Command> {
        let key = proptest::collection::vec(any::<u8>(), 0..40).prop_map(Bytes::from);
        let value = proptest::collection::vec(any::<u8>(), 0..200).prop_map(Bytes::from);
        let op = prop_oneof![Just(CmpOp::Eq), Just(CmpOp::Lt), Just(CmpOp::Gt)];
        let tag = (any::<i64>(), any::<i64>()).prop_map(|(a, b)| Tag::new(a, b));
        prop_oneof![
            Just(Command::Noop),
            Just(Command::Stats),
            Just(Command::Quit),
            key.clone().prop_map(|key| Command::Get { key }),
            key.clone().prop_map(|key| Command::Delete { key }),
            (key.clone(), value, proptest::collection::vec(tag, 0..8))
                .prop_map(|(key, value, tags)| Command::Put { key, value, tags }),
            proptest::collection::vec(key, 0..10).prop_map(|keys| Command::MGet { keys }),
            (any::<i64>(), op.clone(), any::<i64>())
                .prop_map(|(ttype, op, tvalue)| Command::TagQuery { ttype, op, tvalue }),
            (any::<i64>(), op, any::<i64>())
                .prop_map(|(ttype, op, tvalue)| Command::TagExpire { ttype, op, tvalue }),
            (9u8.., any::<u16>(), proptest::collection::vec(any::<u8>(), 0..30))
                .prop_map(|(opcode, count, body)| Command::Unknown { opcode, count, body: body.into() }),
        ]
    }

    proptest! {
        #[test]
        fn request_roundtrip(id: u32, flags: u8, command in arb_command()) {
            let f = RequestFrame { request_id: id, flags, command };
            let b = encode_request(&f).unwrap();
            prop_assert_eq!(decode_request(&b, DEFAULT_MAX_BODY), Ok(Decoded::Frame(f, b.len())));
        }

        #[test]
        fn request_prefixes_report_exact_deficit(command in arb_command(), cut in any::<prop::sample::Index>()) {
            let b = encode_request(&RequestFrame::new(1, command)).unwrap();
            let k = cut.index(b.len());
            let want = if k < HEADER_LEN { HEADER_LEN - k } else { b.len() - k };
            prop_assert_eq!(decode_request(&b[..k], DEFAULT_MAX_BODY), Ok(Decoded::NeedMore(want)));
        }
    }
}
