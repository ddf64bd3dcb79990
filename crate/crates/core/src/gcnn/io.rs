use std::path::Path;

use super::model::{ConvMode, GcnnParams, Prenorm};
use super::GcnnError;
use crate::encoding::{CONS_FEATS, EDGE_FEATS, VAR_FEATS};

pub const MODEL_MAGIC: &[u8; 8] = b"BLGCNN\0\0";
pub const MODEL_VERSION: u32 = 1;

/// Header, little-endian `f64` payload (trainable tensors, then both prenorms) and a trailing CRC-32.
pub fn to_bytes(params: &GcnnParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    for v in [
        MODEL_VERSION,
        params.conv_mode.code(),
        params.hidden() as u32,
        CONS_FEATS as u32,
        EDGE_FEATS as u32,
        VAR_FEATS as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.push(params.pre_c.frozen as u8);
    out.push(params.pre_v.frozen as u8);
    let prenorm = [
        &params.pre_c.beta,
        &params.pre_c.sigma,
        &params.pre_v.beta,
        &params.pre_v.sigma,
    ];
    for t in params
        .trainable()
        .into_iter()
        .chain(prenorm.iter().map(|v| v.as_slice()))
    {
        for x in t {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, k: usize) -> Result<&[u8], GcnnError> {
        if self.pos + k > self.bytes.len() {
            return Err(GcnnError::Format("model file truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + k];
        self.pos += k;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, GcnnError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn f64s(&mut self, out: &mut [f64]) -> Result<(), GcnnError> {
        for v in out {
            *v = f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        }
        Ok(())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<GcnnParams, GcnnError> {
    if bytes.len() < MODEL_MAGIC.len() + 4 || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
        return Err(GcnnError::Format("not a model file".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let mut r = Reader {
        bytes: body,
        pos: MODEL_MAGIC.len(),
    };
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(GcnnError::Version {
            found: version,
            expected: MODEL_VERSION,
        });
    }
    if crc32fast::hash(body) != stored {
        return Err(GcnnError::Format("checksum mismatch".into()));
    }
    let mode = r.u32()?;
    let conv_mode = ConvMode::from_code(mode)
        .ok_or_else(|| GcnnError::Format(format!("unknown conv mode code {mode}")))?;
    let hidden = r.u32()? as usize;
    let dims = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    if dims != (CONS_FEATS, EDGE_FEATS, VAR_FEATS) || hidden == 0 {
        return Err(GcnnError::Dimension(format!(
            "model expects (cons, edge, var, hidden) = ({}, {}, {}, {hidden}), encoder provides ({CONS_FEATS}, {EDGE_FEATS}, {VAR_FEATS})",
            dims.0, dims.1, dims.2
        )));
    }
    let flags = r.take(2)?.to_vec();
    let mut params = GcnnParams::new(conv_mode, hidden, 0);
    for t in params.trainable_mut() {
        r.f64s(t)?;
    }
    params.pre_c = Prenorm::identity(hidden);
    params.pre_v = Prenorm::identity(hidden);
    for p in [&mut params.pre_c, &mut params.pre_v] {
        r.f64s(&mut p.beta)?;
        r.f64s(&mut p.sigma)?;
    }
    params.pre_c.frozen = flags[0] != 0;
    params.pre_v.frozen = flags[1] != 0;
    if r.pos != body.len() {
        return Err(GcnnError::Format("trailing bytes after payload".into()));
    }
    params.check_dims()?;
    Ok(params)
}

pub fn save_model(params: &GcnnParams, path: impl AsRef<Path>) -> Result<(), GcnnError> {
    std::fs::write(path, to_bytes(params))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GcnnParams, GcnnError> {
    from_bytes(&std::fs::read(path)?)
}

/// CRC-32 of the serialized model.
pub fn checksum(params: &GcnnParams) -> u32 {
    crc32fast::hash(&to_bytes(params))
}
