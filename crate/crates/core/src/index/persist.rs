//! Binary index file.
//!
//! ```text
//! magic        6 bytes  "TZRIDX"
//! version      u16      1
//! dim          u32
//! records      u32
//! rows         u32      embedding rows in the block
//! payload_len  u64      bytes following the header
//! crc32        u32      CRC-32 (IEEE) of the payload
//! payload:
//!   embeddings rows × dim little-endian f32
//!   metadata, per record:
//!     frame_id u64, uri_len u32, uri bytes (UTF-8),
//!     has_timestamp u8, [timestamp f64],
//!     region_count u8, region_count × (x0 y0 x1 y1 as u32),
//!     params_fingerprint u64
//! ```
//! All integers little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use super::{Entry, FrameIndex};
use crate::geometry::{BBox, FrameRef};

pub const MAGIC: &[u8; 6] = b"TZRIDX";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 6 + 2 + 4 + 4 + 4 + 8 + 4;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("not an index file (bad magic)")]
    BadMagic,
    #[error("unsupported index format version {0} (expected {VERSION})")]
    UnsupportedVersion(u16),
    #[error("index file truncated: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("index checksum mismatch: header {expected:08x}, payload {actual:08x}")]
    ChecksumMismatch { expected: u32, actual: u32 },
    #[error("malformed index: {0}")]
    Malformed(String),
    #[error("index I/O: {0}")]
    Io(#[from] std::io::Error),
}

type PResult<T> = std::result::Result<T, PersistError>;

pub fn to_bytes(index: &FrameIndex) -> Vec<u8> {
    let (dim, block, entries) = index.parts();
    let rows = block.len().checked_div(dim).unwrap_or(0);

    let mut payload = Vec::with_capacity(block.len() * 4 + entries.len() * 64);
    for v in block {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    for e in entries {
        payload.extend_from_slice(&e.frame.frame_id.to_le_bytes());
        let uri = e.frame.source_uri.as_bytes();
        payload.extend_from_slice(&(uri.len() as u32).to_le_bytes());
        payload.extend_from_slice(uri);
        match e.frame.timestamp {
            Some(t) => {
                payload.push(1);
                payload.extend_from_slice(&t.to_le_bytes());
            }
            None => payload.push(0),
        }
        payload.push(e.boxes.len() as u8);
        for b in &e.boxes {
            for c in [b.x0, b.y0, b.x1, b.y1] {
                payload.extend_from_slice(&(c as u32).to_le_bytes());
            }
        }
        payload.extend_from_slice(&e.fingerprint.to_le_bytes());
    }

    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> PResult<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| PersistError::Malformed(format!("record metadata overruns payload at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> PResult<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> PResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> PResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> PResult<FrameIndex> {
    let magic_len = bytes.len().min(MAGIC.len());
    if bytes[..magic_len] != MAGIC[..magic_len] {
        return Err(PersistError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(PersistError::Truncated {
            needed: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let mut h = Reader {
        buf: &bytes[..HEADER_LEN],
        pos: 6,
    };
    let version = u16::from_le_bytes(h.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(PersistError::UnsupportedVersion(version));
    }
    let dim = h.u32()? as usize;
    let records = h.u32()? as usize;
    let rows = h.u32()? as usize;
    let payload_len = h.u64()? as usize;
    let crc = h.u32()?;

    let needed = HEADER_LEN.saturating_add(payload_len);
    if bytes.len() < needed {
        return Err(PersistError::Truncated {
            needed,
            found: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(PersistError::Malformed(format!(
            "{} trailing bytes",
            bytes.len() - needed
        )));
    }
    let payload = &bytes[HEADER_LEN..];
    let actual = crc32fast::hash(payload);
    if actual != crc {
        return Err(PersistError::ChecksumMismatch { expected: crc, actual });
    }

    let floats = rows
        .checked_mul(dim)
        .filter(|&n| n.checked_mul(4).is_some_and(|b| b <= payload.len()))
        .ok_or_else(|| PersistError::Malformed("embedding block larger than payload".into()))?;
    if (dim == 0) != (rows == 0) || (records == 0) != (rows == 0) {
        return Err(PersistError::Malformed("inconsistent dim/record/row counts".into()));
    }
    let mut r = Reader { buf: payload, pos: 0 };
    let block: Vec<f32> = r
        .take(floats * 4)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let mut entries = Vec::with_capacity(records);
    let mut next_row = 0usize;
    for _ in 0..records {
        let frame_id = r.u64()?;
        let uri_len = r.u32()? as usize;
        let source_uri = std::str::from_utf8(r.take(uri_len)?)
            .map_err(|e| PersistError::Malformed(format!("source uri: {e}")))?
            .to_string();
        let timestamp = match r.u8()? {
            0 => None,
            1 => Some(f64::from_le_bytes(r.take(8)?.try_into().unwrap())),
            t => return Err(PersistError::Malformed(format!("timestamp flag {t}"))),
        };
        let n = r.u8()? as usize;
        let mut boxes = Vec::with_capacity(n);
        for _ in 0..n {
            let c = [r.u32()?, r.u32()?, r.u32()?, r.u32()?].map(|v| v as i64);
            boxes.push(BBox::new(c[0], c[1], c[2], c[3]));
        }
        let fingerprint = r.u64()?;
        entries.push(Entry {
            frame: FrameRef {
                frame_id,
                source_uri,
                timestamp,
            },
            row: next_row,
            boxes,
            fingerprint,
        });
        next_row += 1 + n;
    }
    if next_row != rows {
        return Err(PersistError::Malformed(format!(
            "records reference {next_row} rows, header says {rows}"
        )));
    }
    if r.pos != payload.len() {
        return Err(PersistError::Malformed("unparsed bytes after metadata".into()));
    }
    FrameIndex::from_parts(dim, block, entries).map_err(|e| match e {
        crate::error::Error::Persist(p) => p,
        other => PersistError::Malformed(other.to_string()),
    })
}

impl FrameIndex {
    /// Write the index, replacing any existing file atomically.
    pub fn save(&self, path: impl AsRef<Path>) -> crate::error::Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&to_bytes(self))?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> crate::error::Result<FrameIndex> {
        let bytes = fs::read(path).map_err(PersistError::Io)?;
        Ok(from_bytes(&bytes)?)
    }
}
