//! Length-prefixed binary frames.
//!
//! ```text
//! u32 LE payload length | u8 type | payload
//! ```
//!
//! The length counts the payload only. All integers and floats are little
//! endian.

use std::io::{Read, Write};

use crate::{Error, Result};

pub const HELLO: u8 = 1;
pub const BROADCAST_X0: u8 = 2;
pub const WORKER_UPDATE: u8 = 3;
pub const SHUTDOWN: u8 = 4;

/// Frames above this payload size are rejected before allocation.
pub const MAX_PAYLOAD: usize = 1 << 30;

/// Reason codes carried by `SHUTDOWN`.
pub mod reason {
    pub const DONE: u8 = 0;
    pub const PEER_LOST: u8 = 1;
    pub const PROTOCOL: u8 = 2;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello {
        id: u16,
    },
    BroadcastX0 {
        k: u64,
        x0: Vec<f64>,
    },
    WorkerUpdate {
        id: u16,
        k: u64,
        x: Vec<f64>,
        lambda: Vec<f64>,
    },
    Shutdown {
        reason: u8,
    },
}

impl Message {
    pub fn type_byte(&self) -> u8 {
        match self {
            Message::Hello { .. } => HELLO,
            Message::BroadcastX0 { .. } => BROADCAST_X0,
            Message::WorkerUpdate { .. } => WORKER_UPDATE,
            Message::Shutdown { .. } => SHUTDOWN,
        }
    }

    fn payload(&self) -> Result<Vec<u8>> {
        let mut p = Vec::new();
        match self {
            Message::Hello { id } => p.extend_from_slice(&id.to_le_bytes()),
            Message::BroadcastX0 { k, x0 } => {
                let n = u32::try_from(x0.len())
                    .map_err(|_| Error::Protocol(format!("vector of length {} too long", x0.len())))?;
                p.extend_from_slice(&k.to_le_bytes());
                p.extend_from_slice(&n.to_le_bytes());
                put_floats(&mut p, x0);
            }
            Message::WorkerUpdate { id, k, x, lambda } => {
                if x.len() != lambda.len() {
                    return Err(Error::Protocol(format!(
                        "update with |x|={} but |lambda|={}",
                        x.len(),
                        lambda.len()
                    )));
                }
                p.extend_from_slice(&id.to_le_bytes());
                p.extend_from_slice(&k.to_le_bytes());
                put_floats(&mut p, x);
                put_floats(&mut p, lambda);
            }
            Message::Shutdown { reason } => p.push(*reason),
        }
        Ok(p)
    }

    /// The complete frame.
    pub fn encode(&self) -> Result<Vec<u8>> {
        let payload = self.payload()?;
        if payload.len() > MAX_PAYLOAD {
            return Err(Error::Protocol(format!("payload of {} bytes too large", payload.len())));
        }
        let mut out = Vec::with_capacity(payload.len() + 5);
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.push(self.type_byte());
        out.extend_from_slice(&payload);
        Ok(out)
    }

    /// Parses a type byte and its payload.
    pub fn decode(kind: u8, payload: &[u8]) -> Result<Self> {
        let mut c = Cursor { buf: payload, pos: 0 };
        let msg = match kind {
            HELLO => Message::Hello { id: c.u16()? },
            BROADCAST_X0 => {
                let k = c.u64()?;
                let n = c.u32()? as usize;
                Message::BroadcastX0 { k, x0: c.floats(n)? }
            }
            WORKER_UPDATE => {
                let id = c.u16()?;
                let k = c.u64()?;
                let rest = payload.len() - c.pos;
                if !rest.is_multiple_of(16) {
                    return Err(Error::Protocol(format!(
                        "update payload holds {rest} bytes, not a whole number of (x, lambda) pairs"
                    )));
                }
                let n = rest / 16;
                let x = c.floats(n)?;
                let lambda = c.floats(n)?;
                Message::WorkerUpdate { id, k, x, lambda }
            }
            SHUTDOWN => Message::Shutdown { reason: c.u8()? },
            other => return Err(Error::Protocol(format!("unknown message type {other}"))),
        };
        if c.pos != payload.len() {
            return Err(Error::Protocol(format!(
                "frame length {} does not match its type-{kind} payload ({} bytes used)",
                payload.len(),
                c.pos
            )));
        }
        Ok(msg)
    }
}

fn put_floats(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or_else(|| Error::Protocol(format!("frame truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Protocol("vector length overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn write_message(w: &mut impl Write, msg: &Message) -> Result<()> {
    w.write_all(&msg.encode()?)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame. `Ok(None)` on a clean end of stream before any byte of
/// a new frame.
pub fn read_message(r: &mut impl Read) -> Result<Option<Message>> {
    let mut head = [0u8; 5];
    let mut got = 0;
    while got < head.len() {
        match r.read(&mut head[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::Protocol("stream ended inside a frame header".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(head[..4].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(Error::Protocol(format!("frame length {len} exceeds the limit")));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Protocol("stream ended inside a frame payload".into())
        } else {
            e.into()
        }
    })?;
    Message::decode(head[4], &payload).map(Some)
}
