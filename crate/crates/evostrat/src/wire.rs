//! Framed binary messages for coordinator/worker traffic.
//!
//! Frame layout: `[u32 LE body length][u8 tag][body]`. Bodies are fixed-width
//! little-endian fields in declared order; reals are 8-byte IEEE-754. The
//! payload (tag plus body) for a RESULT is 35 bytes regardless of parameter
//! dimension — nothing vector-valued ever crosses the wire.
//!
//! Tags: HELLO=0x01, ASSIGN=0x02, RESULT=0x03, COMMIT=0x04, BYE=0x05.
//! A COMMIT carries the generation's complete result list after its header
//! fields, so every worker can reconstruct the update locally and verify the
//! parameter checksum.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::estimator::EvalRecord;
use crate::noise::Sign;

/// Protocol version carried in every HELLO and printed by `--version`.
pub const PROTO_VERSION: u32 = 1;

/// Upper bound on a declared body length; anything larger is rejected
/// before allocation.
pub const MAX_BODY_LEN: usize = 64 << 20;

const TAG_HELLO: u8 = 0x01;
const TAG_ASSIGN: u8 = 0x02;
const TAG_RESULT: u8 = 0x03;
const TAG_COMMIT: u8 = 0x04;
const TAG_BYE: u8 = 0x05;

const HELLO_BODY: usize = 36;
const ASSIGN_BODY: usize = 24;
const RESULT_BODY: usize = 34;
const COMMIT_HEADER: usize = 24;
const RECORD_BODY: usize = 26;

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// Worker handshake; the coordinator rejects any mismatch in version,
    /// table identity, or dimension.
    Hello { worker_id: u64, proto_version: u32, table_seed: u64, table_len: u64, d: u64 },
    /// One chunk of the generation plan: evaluate `n_pairs` pairs starting
    /// at plan slot `rng_stream_id`.
    Assign { generation: u64, n_pairs: u64, rng_stream_id: u64 },
    /// One evaluation's scalar outcome.
    Result { generation: u64, record: EvalRecord },
    /// Generation complete: the full result list plus the digest of the
    /// parameters every node must now hold.
    Commit { generation: u64, update_checksum: u64, results: Vec<EvalRecord> },
    Bye,
}

fn put_record(buf: &mut Vec<u8>, r: &EvalRecord) {
    buf.extend_from_slice(&r.offset.to_le_bytes());
    buf.push(r.sign.as_i8() as u8);
    buf.extend_from_slice(&r.ret.to_le_bytes());
    buf.extend_from_slice(&r.steps.to_le_bytes());
    buf.push(u8::from(r.truncated));
}

/// Encodes a full frame, length prefix included.
pub fn encode(msg: &Message) -> Vec<u8> {
    let mut body = Vec::new();
    let tag = match msg {
        Message::Hello { worker_id, proto_version, table_seed, table_len, d } => {
            body.extend_from_slice(&worker_id.to_le_bytes());
            body.extend_from_slice(&proto_version.to_le_bytes());
            body.extend_from_slice(&table_seed.to_le_bytes());
            body.extend_from_slice(&table_len.to_le_bytes());
            body.extend_from_slice(&d.to_le_bytes());
            TAG_HELLO
        }
        Message::Assign { generation, n_pairs, rng_stream_id } => {
            body.extend_from_slice(&generation.to_le_bytes());
            body.extend_from_slice(&n_pairs.to_le_bytes());
            body.extend_from_slice(&rng_stream_id.to_le_bytes());
            TAG_ASSIGN
        }
        Message::Result { generation, record } => {
            body.extend_from_slice(&generation.to_le_bytes());
            put_record(&mut body, record);
            TAG_RESULT
        }
        Message::Commit { generation, update_checksum, results } => {
            body.extend_from_slice(&generation.to_le_bytes());
            body.extend_from_slice(&(results.len() as u64).to_le_bytes());
            body.extend_from_slice(&update_checksum.to_le_bytes());
            for r in results {
                put_record(&mut body, r);
            }
            TAG_COMMIT
        }
        Message::Bye => TAG_BYE,
    };
    let mut frame = Vec::with_capacity(5 + body.len());
    frame.extend_from_slice(&(body.len() as u32).to_le_bytes());
    frame.push(tag);
    frame.extend_from_slice(&body);
    frame
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::protocol("frame body shorter than declared fields"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn sign(&mut self) -> Result<Sign> {
        Sign::from_i8(self.u8()? as i8)
    }

    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::protocol(format!("invalid boolean byte {other:#04x}"))),
        }
    }

    fn record(&mut self) -> Result<EvalRecord> {
        Ok(EvalRecord {
            offset: self.u64()?,
            sign: self.sign()?,
            ret: self.f64()?,
            steps: self.u64()?,
            truncated: self.flag()?,
        })
    }
}

fn decode_body(tag: u8, body: &[u8]) -> Result<Message> {
    let expect_len = |expected: usize| -> Result<()> {
        if body.len() != expected {
            return Err(Error::protocol(format!(
                "tag {tag:#04x} declares {} body bytes, expected {expected}",
                body.len()
            )));
        }
        Ok(())
    };
    let mut c = Cursor { buf: body, pos: 0 };
    match tag {
        TAG_HELLO => {
            expect_len(HELLO_BODY)?;
            Ok(Message::Hello {
                worker_id: c.u64()?,
                proto_version: c.u32()?,
                table_seed: c.u64()?,
                table_len: c.u64()?,
                d: c.u64()?,
            })
        }
        TAG_ASSIGN => {
            expect_len(ASSIGN_BODY)?;
            Ok(Message::Assign {
                generation: c.u64()?,
                n_pairs: c.u64()?,
                rng_stream_id: c.u64()?,
            })
        }
        TAG_RESULT => {
            expect_len(RESULT_BODY)?;
            Ok(Message::Result { generation: c.u64()?, record: c.record()? })
        }
        TAG_COMMIT => {
            if body.len() < COMMIT_HEADER {
                return Err(Error::protocol("COMMIT body shorter than its header"));
            }
            let generation = c.u64()?;
            let count = c.u64()?;
            let update_checksum = c.u64()?;
            let expected = COMMIT_HEADER as u64 + count.saturating_mul(RECORD_BODY as u64);
            if body.len() as u64 != expected {
                return Err(Error::protocol(format!(
                    "COMMIT declares {count} results but body is {} bytes",
                    body.len()
                )));
            }
            let mut results = Vec::with_capacity(count as usize);
            for _ in 0..count {
                results.push(c.record()?);
            }
            Ok(Message::Commit { generation, update_checksum, results })
        }
        TAG_BYE => {
            expect_len(0)?;
            Ok(Message::Bye)
        }
        other => Err(Error::protocol(format!("unknown message tag {other:#04x}"))),
    }
}

/// Parses one frame from the start of `buf`. Returns the message and the
/// number of bytes consumed.
pub fn decode_frame(buf: &[u8]) -> Result<(Message, usize)> {
    if buf.len() < 5 {
        return Err(Error::protocol("frame shorter than its header"));
    }
    let body_len = u32::from_le_bytes(buf[..4].try_into().unwrap()) as usize;
    if body_len > MAX_BODY_LEN {
        return Err(Error::protocol(format!("declared body length {body_len} exceeds limit")));
    }
    let total = 5 + body_len;
    if buf.len() < total {
        return Err(Error::protocol("frame truncated"));
    }
    let msg = decode_body(buf[4], &buf[5..total])?;
    Ok((msg, total))
}

/// Reads one frame from a stream.
pub fn read_message(r: &mut dyn Read) -> Result<Message> {
    let mut header = [0u8; 5];
    r.read_exact(&mut header)?;
    let body_len = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
    if body_len > MAX_BODY_LEN {
        return Err(Error::protocol(format!("declared body length {body_len} exceeds limit")));
    }
    let mut body = vec![0u8; body_len];
    r.read_exact(&mut body)?;
    decode_body(header[4], &body)
}

/// Writes one frame to a stream.
pub fn write_message(w: &mut dyn Write, msg: &Message) -> Result<()> {
    w.write_all(&encode(msg))?;
    w.flush()?;
    Ok(())
}
