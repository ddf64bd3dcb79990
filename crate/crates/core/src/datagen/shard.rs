use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DatagenError, SampleRecord};
use crate::encoding::{BipartiteState, CONS_FEATS, EDGE_FEATS, VAR_FEATS};

pub const SHARD_MAGIC: &[u8; 8] = b"BLSHARD\0";
pub const SHARD_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Payload layout (little-endian): id, node, m, n, C, edges (rows, cols, feats), V,
/// mask, candidates, scores, action.
pub fn encode_record(r: &SampleRecord) -> Vec<u8> {
    let s = &r.state;
    let mut out =
        Vec::with_capacity(64 + 8 * (s.cons_feats.len() + s.var_feats.len()) + 16 * s.n_edges());
    put_u32(&mut out, r.instance_id.len());
    out.extend_from_slice(r.instance_id.as_bytes());
    out.extend_from_slice(&(r.node as u64).to_le_bytes());
    put_u32(&mut out, s.m);
    put_u32(&mut out, s.n);
    put_f64s(&mut out, &s.cons_feats);
    put_u32(&mut out, s.n_edges());
    for &i in &s.edge_rows {
        put_u32(&mut out, i);
    }
    for &j in &s.edge_cols {
        put_u32(&mut out, j);
    }
    put_f64s(&mut out, &s.edge_feats);
    put_f64s(&mut out, &s.var_feats);
    out.extend(s.candidate_mask.iter().map(|&b| b as u8));
    put_u32(&mut out, r.candidates.len());
    for &j in &r.candidates {
        put_u32(&mut out, j);
    }
    put_f64s(&mut out, &r.sb_scores);
    put_u32(&mut out, r.expert_action);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(k).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| "payload shorter than its fields".to_string())?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u32s(&mut self, k: usize) -> Result<Vec<usize>, String> {
        let raw = self.take(k.checked_mul(4).ok_or("length overflow")?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
            .collect())
    }

    fn f64s(&mut self, k: usize) -> Result<Vec<f64>, String> {
        let raw = self.take(k.checked_mul(8).ok_or("length overflow")?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn decode_record(bytes: &[u8]) -> Result<SampleRecord, String> {
    let mut c = Cursor { bytes, pos: 0 };
    let id_len = c.u32()?;
    let instance_id = String::from_utf8(c.take(id_len)?.to_vec()).map_err(|e| e.to_string())?;
    let node = u64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes")) as usize;
    let m = c.u32()?;
    let n = c.u32()?;
    let cons_feats = c.f64s(m * CONS_FEATS)?;
    let e = c.u32()?;
    let edge_rows = c.u32s(e)?;
    let edge_cols = c.u32s(e)?;
    let edge_feats = c.f64s(e * EDGE_FEATS)?;
    let var_feats = c.f64s(n * VAR_FEATS)?;
    let candidate_mask = c.take(n)?.iter().map(|&b| b != 0).collect();
    let k = c.u32()?;
    let candidates = c.u32s(k)?;
    let sb_scores = c.f64s(k)?;
    let expert_action = c.u32()?;
    if c.pos != bytes.len() {
        return Err("trailing bytes in payload".into());
    }
    let state = BipartiteState {
        m,
        n,
        cons_feats,
        edge_rows,
        edge_cols,
        edge_feats,
        var_feats,
        candidate_mask,
    };
    state.validate()?;
    Ok(SampleRecord {
        instance_id,
        node,
        state,
        candidates,
        sb_scores,
        expert_action,
    })
}

/// Writes a shard: header, then per record `u32 length`, payload, `u32 crc32(payload)`.
pub fn write_shard(records: &[SampleRecord], path: impl AsRef<Path>) -> Result<(), DatagenError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SHARD_MAGIC)?;
    w.write_all(&SHARD_VERSION.to_le_bytes())?;
    for r in records {
        let payload = encode_record(r);
        w.write_all(&(payload.len() as u32).to_le_bytes())?;
        w.write_all(&payload)?;
        w.write_all(&crc32fast::hash(&payload).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Streaming reader over the records of one shard.
pub struct ShardReader {
    inner: BufReader<File>,
    index: usize,
    done: bool,
}

impl ShardReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, DatagenError> {
        let mut inner = BufReader::new(File::open(path)?);
        let mut head = [0u8; 12];
        inner
            .read_exact(&mut head)
            .map_err(|_| DatagenError::Format("shard header truncated".into()))?;
        if &head[..8] != SHARD_MAGIC {
            return Err(DatagenError::Format("not a shard file".into()));
        }
        let version = u32::from_le_bytes(head[8..].try_into().expect("4 bytes"));
        if version != SHARD_VERSION {
            return Err(DatagenError::Format(format!(
                "shard version {version}, expected {SHARD_VERSION}"
            )));
        }
        Ok(Self {
            inner,
            index: 0,
            done: false,
        })
    }

    fn corrupt(&mut self, detail: &str) -> DatagenError {
        self.done = true;
        DatagenError::Corrupt {
            record: self.index,
            detail: detail.to_string(),
        }
    }

    fn next_record(&mut self) -> Result<Option<SampleRecord>, DatagenError> {
        let mut len = [0u8; 4];
        let mut got = 0;
        while got < 4 {
            let k = self.inner.read(&mut len[got..])?;
            if k == 0 {
                break;
            }
            got += k;
        }
        if got == 0 {
            self.done = true;
            return Ok(None);
        }
        if got < 4 {
            return Err(self.corrupt("checksum error: truncated length prefix"));
        }
        let len = u32::from_le_bytes(len) as usize;
        let mut payload = vec![0u8; len];
        let mut crc = [0u8; 4];
        if self.inner.read_exact(&mut payload).is_err() || self.inner.read_exact(&mut crc).is_err()
        {
            return Err(self.corrupt("checksum error: record truncated"));
        }
        if crc32fast::hash(&payload) != u32::from_le_bytes(crc) {
            return Err(self.corrupt("checksum error: crc mismatch"));
        }
        let record = decode_record(&payload).map_err(|e| self.corrupt(&e))?;
        self.index += 1;
        Ok(Some(record))
    }
}

impl Iterator for ShardReader {
    type Item = Result<SampleRecord, DatagenError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        self.next_record().transpose()
    }
}

pub fn read_shard(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>, DatagenError> {
    ShardReader::open(path)?.collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{BipartiteState, CONS_FEATS, EDGE_FEATS, VAR_FEATS};

    fn record(k: usize) -> SampleRecord {
        let (m, n) = (2, 3 + k);
        SampleRecord {
            instance_id: format!("train-{k:06}"),
            node: 7 * k,
            state: BipartiteState {
                m,
                n,
                cons_feats: (0..m * CONS_FEATS).map(|i| i as f64 * 0.5 - 1.0).collect(),
                edge_rows: vec![0, 1, 1],
                edge_cols: vec![0, 1, 2],
                edge_feats: vec![0.25; 3 * EDGE_FEATS],
                var_feats: (0..n * VAR_FEATS).map(|i| (i as f64).sin()).collect(),
                candidate_mask: (0..n).map(|j| j % 2 == 0).collect(),
            },
            candidates: vec![0, 2],
            sb_scores: vec![1e-12, f64::INFINITY],
            expert_action: 2,
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let recs: Vec<_> = (0..3).map(record).collect();
        write_shard(&recs, &path).unwrap();
        assert_eq!(read_shard(&path).unwrap(), recs);
        assert_eq!(decode_record(&encode_record(&recs[1])).unwrap(), recs[1]);
    }

    #[test]
    fn truncation_names_the_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        write_shard(&(0..3).map(record).collect::<Vec<_>>(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        let out: Vec<_> = ShardReader::open(&path).unwrap().collect();
        assert_eq!(out.len(), 3);
        assert!(out[0].is_ok() && out[1].is_ok());
        match &out[2] {
            Err(DatagenError::Corrupt { record, detail }) => {
                assert_eq!(*record, 2);
                assert!(detail.contains("checksum"));
            }
            other => panic!("expected a corruption error, got {other:?}"),
        }
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        write_shard(&(0..2).map(record).collect::<Vec<_>>(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 20;
        bytes[last] ^= 0x40;
        std::fs::write(&path, &bytes).unwrap();
        let err = read_shard(&path).unwrap_err();
        assert!(
            matches!(err, DatagenError::Corrupt { record: 1, .. }),
            "{err}"
        );
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        std::fs::write(&path, b"not a shard at all").unwrap();
        assert!(matches!(
            ShardReader::open(&path),
            Err(DatagenError::Format(_))
        ));
    }
}
