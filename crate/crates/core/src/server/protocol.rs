//! Length-prefixed framing.
//!
//! ```text
//! frame   = len:u32be payload            (len counts payload bytes)
//! payload = type:u8 body
//! HELLO   0x01  "MDNT" version:u8 batch_size:u32be has_seed:u8 seed:u64be
//! NEXT    0x02  (empty)
//! BATCH   0x03  count:u32be record*
//! ERROR   0x7F  UTF-8 JSON {"code": ..., "message": ...}
//! record  = meta_len:u32be meta:JSON pixels:RGB8[width*height*3]
//! ```
//!
//! The client opens with HELLO; the server answers with a HELLO carrying
//! the batch size and seed actually in use.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::pipeline::{TileMeta, TileRecord};

pub const FRAME_HELLO: u8 = 0x01;
pub const FRAME_NEXT: u8 = 0x02;
pub const FRAME_BATCH: u8 = 0x03;
pub const FRAME_ERROR: u8 = 0x7F;

pub const HELLO_MAGIC: &[u8; 4] = b"MDNT";
pub const PROTOCOL_VERSION: u8 = 1;
pub const HELLO_LEN: usize = 18;

/// Largest frame a server accepts from a client.
pub const MAX_CLIENT_FRAME: u32 = 4096;
/// Largest frame a client accepts from a server.
pub const MAX_SERVER_FRAME: u32 = 1 << 30;

pub const CODE_PROTOCOL: &str = "PROTOCOL";
pub const CODE_SAMPLING: &str = "SAMPLING";
pub const CODE_INTERNAL: &str = "INTERNAL";

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("peer closed the connection")]
    Closed,
    #[error("frame of {0} bytes exceeds the limit of {1}")]
    TooLarge(u32, u32),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn malformed(msg: impl Into<String>) -> ProtocolError {
    ProtocolError::Malformed(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hello {
    /// 0 asks the server for its configured batch size.
    pub batch_size: u32,
    pub seed: Option<u64>,
}

impl Hello {
    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(HELLO_LEN);
        b.extend_from_slice(HELLO_MAGIC);
        b.push(PROTOCOL_VERSION);
        b.extend_from_slice(&self.batch_size.to_be_bytes());
        b.push(self.seed.is_some() as u8);
        b.extend_from_slice(&self.seed.unwrap_or(0).to_be_bytes());
        b
    }

    pub fn decode(body: &[u8]) -> Result<Self, ProtocolError> {
        if body.len() != HELLO_LEN {
            return Err(malformed(format!("HELLO body is {} bytes, expected {HELLO_LEN}", body.len())));
        }
        if &body[..4] != HELLO_MAGIC {
            return Err(malformed("bad HELLO magic"));
        }
        if body[4] != PROTOCOL_VERSION {
            return Err(malformed(format!("unsupported protocol version {}", body[4])));
        }
        let batch_size = u32::from_be_bytes(body[5..9].try_into().unwrap());
        let seed = u64::from_be_bytes(body[10..18].try_into().unwrap());
        let seed = match body[9] {
            0 => None,
            1 => Some(seed),
            f => return Err(malformed(format!("bad has_seed flag {f}"))),
        };
        Ok(Hello { batch_size, seed })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

pub fn write_frame<W: Write>(w: &mut W, frame_type: u8, body: &[u8]) -> io::Result<()> {
    let len = u32::try_from(body.len() + 1).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(&[frame_type])?;
    w.write_all(body)?;
    w.flush()
}

pub fn write_error<W: Write>(w: &mut W, code: &str, message: &str) -> io::Result<()> {
    let body = serde_json::to_vec(&ErrorBody {
        code: code.into(),
        message: message.into(),
    })
    .expect("error body serializes");
    write_frame(w, FRAME_ERROR, &body)
}

/// Reads one frame. A clean end of stream before the length prefix is
/// [`ProtocolError::Closed`].
pub fn read_frame<R: Read>(r: &mut R, max_len: u32) -> Result<(u8, Vec<u8>), ProtocolError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Err(ProtocolError::Closed),
            Ok(0) => return Err(malformed("truncated length prefix")),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(len);
    if len == 0 {
        return Err(malformed("empty frame"));
    }
    if len > max_len {
        return Err(ProtocolError::TooLarge(len, max_len));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => malformed(format!("frame truncated, expected {len} bytes")),
        _ => e.into(),
    })?;
    let frame_type = payload[0];
    payload.remove(0);
    Ok((frame_type, payload))
}

pub fn encode_record(rec: &TileRecord, out: &mut Vec<u8>) {
    let meta = serde_json::to_vec(&rec.meta).expect("tile metadata serializes");
    out.extend_from_slice(&(meta.len() as u32).to_be_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&rec.pixels);
}

/// Decodes one record starting at `*pos` and advances `pos` past it.
pub fn decode_record(buf: &[u8], pos: &mut usize) -> Result<TileRecord, ProtocolError> {
    let take = |pos: &mut usize, n: usize| -> Result<std::ops::Range<usize>, ProtocolError> {
        let end = pos.checked_add(n).filter(|&e| e <= buf.len()).ok_or_else(|| {
            malformed(format!("record needs {n} bytes at offset {pos}, only {} available", buf.len() - *pos))
        })?;
        let r = *pos..end;
        *pos = end;
        Ok(r)
    };
    let r = take(pos, 4)?;
    let meta_len = u32::from_be_bytes(buf[r].try_into().unwrap()) as usize;
    let r = take(pos, meta_len)?;
    let meta: TileMeta =
        serde_json::from_slice(&buf[r]).map_err(|e| malformed(format!("tile metadata: {e}")))?;
    let n = meta.width as usize * meta.height as usize * 3;
    let r = take(pos, n)?;
    Ok(TileRecord {
        meta,
        pixels: buf[r].to_vec(),
    })
}

pub fn encode_batch(records: &[TileRecord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + records.iter().map(|r| r.pixels.len() + 256).sum::<usize>());
    out.extend_from_slice(&(records.len() as u32).to_be_bytes());
    for r in records {
        encode_record(r, &mut out);
    }
    out
}

pub fn decode_batch(body: &[u8]) -> Result<Vec<TileRecord>, ProtocolError> {
    if body.len() < 4 {
        return Err(malformed("BATCH body shorter than its count"));
    }
    let count = u32::from_be_bytes(body[..4].try_into().unwrap()) as usize;
    let mut pos = 4;
    let mut out = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        out.push(decode_record(body, &mut pos)?);
    }
    if pos != body.len() {
        return Err(malformed(format!("{} trailing bytes after BATCH", body.len() - pos)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(i: u64) -> TileRecord {
        TileRecord {
            meta: TileMeta {
                dataset: "a".into(),
                slide_id: "s".into(),
                x: 10,
                y: 20,
                mpp: 0.5,
                width: 2,
                height: 1,
                tile_index: i,
                hed_alpha: [1.0, 1.01, 0.99],
                hed_beta: [0.0, -0.02, 0.03],
            },
            pixels: vec![1, 2, 3, 4, 5, 6],
        }
    }

    #[test]
    fn hello_layout() {
        let h = Hello {
            batch_size: 4,
            seed: Some(0x0102_0304_0506_0708),
        };
        let b = h.encode();
        assert_eq!(b, [b'M', b'D', b'N', b'T', 1, 0, 0, 0, 4, 1, 1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(Hello::decode(&b).unwrap(), h);
        let mut bad = b.clone();
        bad[4] = 2;
        assert!(Hello::decode(&bad).is_err());
        assert!(Hello::decode(&b[..17]).is_err());
    }

    #[test]
    fn frame_round_trip() {
        let mut buf = Vec::new();
        write_frame(&mut buf, FRAME_NEXT, &[]).unwrap();
        assert_eq!(buf, [0, 0, 0, 1, FRAME_NEXT]);
        let (t, body) = read_frame(&mut buf.as_slice(), MAX_CLIENT_FRAME).unwrap();
        assert_eq!((t, body.len()), (FRAME_NEXT, 0));
        assert!(matches!(read_frame(&mut &[][..], 16), Err(ProtocolError::Closed)));
        assert!(matches!(read_frame(&mut &[0, 0, 0, 9, 1][..], 16), Err(ProtocolError::Malformed(_))));
        assert!(matches!(read_frame(&mut &[0, 0, 1, 0][..], 16), Err(ProtocolError::TooLarge(256, 16))));
    }

    #[test]
    fn batch_round_trip() {
        let recs = vec![record(0), record(1)];
        let body = encode_batch(&recs);
        assert_eq!(&body[..4], &[0, 0, 0, 2]);
        assert_eq!(decode_batch(&body).unwrap(), recs);
        assert!(decode_batch(&body[..body.len() - 1]).is_err());
        let mut extra = body.clone();
        extra.push(0);
        assert!(decode_batch(&extra).is_err());
    }
}
