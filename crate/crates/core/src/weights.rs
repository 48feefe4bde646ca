//! Binary weight files.
//!
//! Layout, all integers little-endian u32 and no padding:
//! `"GKW1"`, version, config length N, N bytes of config JSON, then for each
//! tensor in canonical order: name length, name, rank, dims, raw f64 values.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result, WeightFileError};
use crate::model::{ModelConfig, Params, RecognizerModel, FORMAT_VERSION};

pub const MAGIC: [u8; 4] = *b"GKW1";

pub fn to_bytes(model: &RecognizerModel) -> Result<Vec<u8>> {
    model.config.validate()?;
    let config = serde_json::to_vec(&model.config)?;
    let mut out = Vec::with_capacity(16 + config.len() + 8 * model.config.parameter_count());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_u32(&mut out, config.len());
    out.extend_from_slice(&config);
    for (name, t) in model.named_parameters() {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rank());
        for &d in t.shape() {
            put_u32(&mut out, d);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("weight file field exceeds u32");
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, context: impl FnOnce() -> String) -> Result<&'a [u8], WeightFileError> {
        if self.buf.len() - self.pos < n {
            return Err(WeightFileError::Truncated { context: context() });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, context: impl FnOnce() -> String) -> Result<u32, WeightFileError> {
        let b = self.take(4, context)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<RecognizerModel> {
    Ok(decode(bytes)?)
}

fn decode(bytes: &[u8]) -> Result<RecognizerModel, WeightFileError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4, || "magic".into())?;
    if magic != MAGIC {
        let mut found = [0; 4];
        found.copy_from_slice(magic);
        return Err(WeightFileError::BadMagic { found });
    }
    let version = r.u32(|| "format version".into())?;
    if version != FORMAT_VERSION {
        return Err(WeightFileError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let n = r.u32(|| "config length".into())? as usize;
    let blob = r.take(n, || "config JSON".into())?;
    let config: ModelConfig =
        serde_json::from_slice(blob).map_err(|e| WeightFileError::Config(e.to_string()))?;
    config.validate().map_err(|e| WeightFileError::Config(e.to_string()))?;

    let mut params = Params::zeros(&config);
    let shapes = config.param_shapes();
    for ((name, shape), t) in shapes.iter().zip(params.tensors_mut()) {
        let ctx = |what: &str| format!("tensor {name} ({what})");
        let len = r.u32(|| ctx("name length"))? as usize;
        let found = r.take(len, || ctx("name"))?;
        if found != name.as_bytes() {
            return Err(WeightFileError::Inconsistent {
                name: name.to_string(),
                detail: format!("found tensor named {:?}", String::from_utf8_lossy(found)),
            });
        }
        let rank = r.u32(|| ctx("rank"))? as usize;
        if rank != shape.len() {
            return Err(WeightFileError::Inconsistent {
                name: name.to_string(),
                detail: format!("rank {rank}, config implies {}", shape.len()),
            });
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32(|| ctx("dims"))? as usize);
        }
        if &dims != shape {
            return Err(WeightFileError::Inconsistent {
                name: name.to_string(),
                detail: format!("dims {dims:?}, config implies {shape:?}"),
            });
        }
        let raw = r.take(8 * t.len(), || ctx("values"))?;
        for (v, b) in t.data_mut().iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(b.try_into().expect("8-byte chunk"));
        }
    }
    let rest = bytes.len() - r.pos;
    if rest != 0 {
        return Err(WeightFileError::TrailingBytes(rest));
    }
    Ok(RecognizerModel {
        config,
        params,
        version,
    })
}

pub fn save_weights(model: &RecognizerModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<RecognizerModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
