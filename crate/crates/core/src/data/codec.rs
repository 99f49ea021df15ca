//! Fixed-layout binary training records.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! header   magic "ABRK1" (5 bytes) | version u16 | feature count u16
//!          | per feature: name length u16, UTF-8 name bytes
//! record   byte length u32 (of what follows) | query id u64 | city token u32
//!          | impression count u16 | impressions
//! impression  listing id u64 | position u16 | flags u8 (bit0 booked, bit1 clicked)
//!             | long view seconds f32 | dynamic features f32 x k
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Impression, SearchRecord};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"ABRK1";
pub const FORMAT_VERSION: u16 = 1;

const RECORD_FIXED: usize = 8 + 4 + 2;
const IMPRESSION_FIXED: usize = 8 + 2 + 1 + 4;

const FLAG_BOOKED: u8 = 1;
const FLAG_CLICKED: u8 = 2;

/// Names of the per-impression dynamic features, in storage order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordSchema {
    pub feature_names: Vec<String>,
}

impl RecordSchema {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Self {
        Self {
            feature_names: names.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feature_names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    fn header_len(&self) -> usize {
        MAGIC.len() + 2 + 2 + self.feature_names.iter().map(|n| 2 + n.len()).sum::<usize>()
    }
}

fn record_body_len(k: usize, impressions: usize) -> usize {
    RECORD_FIXED + impressions * (IMPRESSION_FIXED + 4 * k)
}

/// Exact size in bytes of the encoded file.
pub fn encoded_len(schema: &RecordSchema, records: &[SearchRecord]) -> u64 {
    let k = schema.len();
    (schema.header_len()
        + records
            .iter()
            .map(|r| 4 + record_body_len(k, r.impressions.len()))
            .sum::<usize>()) as u64
}

pub fn write_records_to<W: Write>(out: &mut W, records: &[SearchRecord], schema: &RecordSchema) -> Result<()> {
    let buf = encode(records, schema)?;
    out.write_all(&buf).map_err(|e| Error::io("<writer>", e))
}

pub fn write_records(records: &[SearchRecord], schema: &RecordSchema, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = encode(records, schema)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn encode(records: &[SearchRecord], schema: &RecordSchema) -> Result<Vec<u8>> {
    let k = schema.len();
    if k > u16::MAX as usize {
        return Err(Error::Schema(format!("{k} features exceed the u16 header field")));
    }
    let mut buf = Vec::with_capacity(encoded_len(schema, records) as usize);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(k as u16).to_le_bytes());
    for name in &schema.feature_names {
        let len = u16::try_from(name.len()).map_err(|_| Error::Schema(format!("feature name too long: {name}")))?;
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
    }
    for r in records {
        let n = u16::try_from(r.impressions.len())
            .map_err(|_| Error::Schema(format!("query {} has too many impressions", r.query_id)))?;
        let body = record_body_len(k, r.impressions.len());
        buf.extend_from_slice(&(body as u32).to_le_bytes());
        buf.extend_from_slice(&r.query_id.to_le_bytes());
        buf.extend_from_slice(&r.city.to_le_bytes());
        buf.extend_from_slice(&n.to_le_bytes());
        for imp in &r.impressions {
            if imp.features.len() != k {
                return Err(Error::Schema(format!(
                    "query {} listing {}: {} features, schema has {k}",
                    r.query_id,
                    imp.listing_id,
                    imp.features.len()
                )));
            }
            buf.extend_from_slice(&imp.listing_id.to_le_bytes());
            buf.extend_from_slice(&imp.position.to_le_bytes());
            let flags = (imp.booked as u8 * FLAG_BOOKED) | (imp.clicked as u8 * FLAG_CLICKED);
            buf.push(flags);
            buf.extend_from_slice(&imp.long_view_seconds.to_le_bytes());
            for f in &imp.features {
                buf.extend_from_slice(&f.to_le_bytes());
            }
        }
    }
    Ok(buf)
}

pub fn read_records(path: impl AsRef<Path>) -> Result<(RecordSchema, Vec<SearchRecord>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_records_from(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

#[inline]
fn le_u64(b: &[u8]) -> u64 {
    u64::from_le_bytes(b[..8].try_into().unwrap())
}

#[inline]
fn le_f32(b: &[u8]) -> f32 {
    f32::from_le_bytes(b[..4].try_into().unwrap())
}

pub fn read_records_from(bytes: &[u8]) -> Result<(RecordSchema, Vec<SearchRecord>)> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad magic, not a training record file".into(),
        });
    }
    let version_at = cur.pos as u64;
    let version = cur.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format {
            offset: version_at,
            message: format!("unsupported format version {version}"),
        });
    }
    let k = cur.u16("feature count")? as usize;
    let mut names = Vec::with_capacity(k);
    for _ in 0..k {
        let len = cur.u16("feature name length")? as usize;
        let at = cur.pos as u64;
        let raw = cur.take(len, "feature name")?;
        let name = std::str::from_utf8(raw).map_err(|_| Error::Format {
            offset: at,
            message: "feature name is not UTF-8".into(),
        })?;
        names.push(name.to_string());
    }
    let schema = RecordSchema { feature_names: names };
    let stride = IMPRESSION_FIXED + 4 * k;
    let mut records = Vec::new();
    while cur.pos < bytes.len() {
        let start = cur.pos as u64;
        let body_len = cur.u32("record length")? as usize;
        let body_at = cur.pos;
        let body = cur.take(body_len, "record")?;
        if body_len < RECORD_FIXED {
            return Err(Error::Format {
                offset: start,
                message: format!("record length {body_len} shorter than its fixed part"),
            });
        }
        let query_id = le_u64(&body[0..8]);
        let city = u32::from_le_bytes(body[8..12].try_into().unwrap());
        let n = u16::from_le_bytes(body[12..14].try_into().unwrap()) as usize;
        if body_len != record_body_len(k, n) {
            return Err(Error::Format {
                offset: start,
                message: format!("record length {body_len} does not match {n} impressions of {k} features"),
            });
        }
        let mut impressions = Vec::with_capacity(n);
        for (i, chunk) in body[RECORD_FIXED..].chunks_exact(stride).enumerate() {
            let flags = chunk[10];
            if flags & !(FLAG_BOOKED | FLAG_CLICKED) != 0 {
                return Err(Error::Format {
                    offset: (body_at + RECORD_FIXED + i * stride + 10) as u64,
                    message: format!("unknown flag bits {flags:#04x}"),
                });
            }
            impressions.push(Impression {
                listing_id: le_u64(chunk),
                position: u16::from_le_bytes([chunk[8], chunk[9]]),
                booked: flags & FLAG_BOOKED != 0,
                clicked: flags & FLAG_CLICKED != 0,
                long_view_seconds: le_f32(&chunk[11..15]),
                features: chunk[IMPRESSION_FIXED..].chunks_exact(4).map(le_f32).collect(),
            });
        }
        records.push(SearchRecord {
            query_id,
            city,
            impressions,
        });
    }
    Ok((schema, records))
}
