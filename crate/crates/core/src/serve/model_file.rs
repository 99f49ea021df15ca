use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{FeaturePipeline, RecordSchema, StaticFeatureStore, STATIC_TABLE};
use crate::error::{Error, Result};
use crate::nncore::{Architecture, ModelParams};

pub const MODEL_MAGIC: &[u8; 5] = b"ABRKM";
pub const MODEL_VERSION: u16 = 1;

/// JSON header: everything needed to interpret the payload and to rebuild
/// model inputs from raw feature values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub schema: RecordSchema,
    pub architecture: Architecture,
    pub pipeline: FeaturePipeline,
    pub store_features: Vec<String>,
    pub store_rows: usize,
    /// Number of 32-bit weights in the payload (store excluded).
    pub weight_count: usize,
}

/// A decoded model file: 64-bit params (from 32-bit storage), the frozen
/// pipeline and the static store.
#[derive(Clone, Debug)]
pub struct ModelFile {
    pub header: ModelHeader,
    pub params: ModelParams<f64>,
    pub store: StaticFeatureStore,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn weight_slices(params: &ModelParams<f64>) -> Vec<&[f64]> {
    let mut out: Vec<&[f64]> = Vec::new();
    for l in params.hidden.iter().chain(params.heads.iter().map(|h| &h.layer)) {
        out.push(&l.weights);
        out.push(&l.bias);
    }
    for t in params.embeddings.iter().filter(|t| t.name != STATIC_TABLE) {
        out.push(&t.values);
    }
    out
}

/// Serializes a model. Layout: magic, u16 version, u32 header length, JSON
/// header, f32 weights, store (u64 ids, f64 locations, f32 values), then an
/// FNV-1a checksum over everything before it. The static table is not
/// stored: it is rebuilt from the store through the frozen pipeline.
pub fn encode_model(
    params: &ModelParams<f64>,
    schema: &RecordSchema,
    pipeline: &FeaturePipeline,
    store: &StaticFeatureStore,
) -> Result<Vec<u8>> {
    params.validate()?;
    if schema.len() != pipeline.dynamic.len() || params.dense_dim != pipeline.dense_dim() {
        return Err(Error::Schema("model, schema and pipeline widths differ".into()));
    }
    let slices = weight_slices(params);
    let header = ModelHeader {
        schema: schema.clone(),
        architecture: params.architecture(),
        pipeline: pipeline.clone(),
        store_features: store.names().to_vec(),
        store_rows: store.len(),
        weight_count: slices.iter().map(|s| s.len()).sum(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(16 + json.len() + 4 * header.weight_count + 32 * store.len());
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in slices.into_iter().flatten() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    for id in store.ids() {
        buf.extend_from_slice(&id.to_le_bytes());
    }
    for (lat, lng) in store.locations() {
        buf.extend_from_slice(&lat.to_le_bytes());
        buf.extend_from_slice(&lng.to_le_bytes());
    }
    for v in store.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let sum = fnv1a(&buf);
    buf.extend_from_slice(&sum.to_le_bytes());
    Ok(buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("truncated {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let b = self.take(n * 4, "payload")?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelFile> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(5, "magic")? != MODEL_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "not a model file (bad magic)".into(),
        });
    }
    let version = u16::from_le_bytes(r.take(2, "version")?.try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(Error::Format {
            offset: 5,
            message: format!("unsupported model version {version}"),
        });
    }
    if bytes.len() < 8 + r.pos {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            message: "truncated model file".into(),
        });
    }
    let body = &bytes[..bytes.len() - 8];
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    if fnv1a(body) != stored {
        return Err(Error::Format {
            offset: body.len() as u64,
            message: "checksum mismatch".into(),
        });
    }
    let mut r = Reader { buf: body, pos: r.pos };
    let hlen = u32::from_le_bytes(r.take(4, "header length")?.try_into().unwrap()) as usize;
    let header: ModelHeader = serde_json::from_slice(r.take(hlen, "header")?)?;

    let mut params = ModelParams::<f64>::init(&header.architecture, 0)?;
    let mut expected = 0usize;
    {
        let mut fill = |dst: &mut Vec<f64>, r: &mut Reader| -> Result<()> {
            expected += dst.len();
            let vals = r.f32s(dst.len())?;
            dst.iter_mut().zip(vals).for_each(|(d, v)| *d = v as f64);
            Ok(())
        };
        for l in params
            .hidden
            .iter_mut()
            .chain(params.heads.iter_mut().map(|h| &mut h.layer))
        {
            fill(&mut l.weights, &mut r)?;
            fill(&mut l.bias, &mut r)?;
        }
        for t in params.embeddings.iter_mut().filter(|t| t.name != STATIC_TABLE) {
            fill(&mut t.values, &mut r)?;
        }
    }
    if expected != header.weight_count {
        return Err(Error::Schema(format!(
            "header declares {} weights, architecture has {expected}",
            header.weight_count
        )));
    }
    let n = header.store_rows;
    let ids: Vec<u64> = r
        .take(n * 8, "store ids")?
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let locations: Vec<(f64, f64)> = r
        .take(n * 16, "store locations")?
        .chunks_exact(16)
        .map(|c| {
            (
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    let values = r.f32s(n * header.store_features.len())?;
    if r.pos != body.len() {
        return Err(Error::Format {
            offset: r.pos as u64,
            message: "trailing bytes after store".into(),
        });
    }
    let store = StaticFeatureStore::from_parts(header.store_features.clone(), ids, locations, values)?;
    if let Some(i) = params.table_index(STATIC_TABLE) {
        params.embeddings[i] = header.pipeline.static_table(&store)?;
    }
    params.validate()?;
    if header.architecture != params.architecture() {
        return Err(Error::Schema("static table does not match the architecture".into()));
    }
    Ok(ModelFile { header, params, store })
}

pub fn save_model(
    params: &ModelParams<f64>,
    schema: &RecordSchema,
    pipeline: &FeaturePipeline,
    store: &StaticFeatureStore,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if path.as_os_str().is_empty() {
        return Err(Error::invalid("empty model path"));
    }
    let bytes = encode_model(params, schema, pipeline, store)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    if path.as_os_str().is_empty() {
        return Err(Error::invalid("empty model path"));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
