//! Binary cache of pretraining examples.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! magic   "ABPT" 0x00 "001"            8 bytes
//! count   number of records
//! record  byte_len, then byte_len bytes:
//!           T, token_ids[T], type_ids[T], attention_mask[T],
//!           n, mlm_positions[n], mlm_labels[n], sop_label
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{CorpusError, PretrainExample, SopLabel};
use crate::tokenizer::InputSequence;

pub const CACHE_MAGIC: &[u8; 8] = b"ABPT\x00001";

fn push(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn encode_record(ex: &PretrainExample) -> Vec<u8> {
    let t = ex.input.len();
    let n = ex.mlm_positions.len();
    let mut buf = Vec::with_capacity(4 * (3 * t + 2 * n + 3));
    push(&mut buf, t as u32);
    for seq in [&ex.input.token_ids, &ex.input.type_ids, &ex.input.attention_mask] {
        seq.iter().for_each(|&v| push(&mut buf, v));
    }
    push(&mut buf, n as u32);
    ex.mlm_positions.iter().for_each(|&v| push(&mut buf, v));
    ex.mlm_labels.iter().for_each(|&v| push(&mut buf, v));
    push(&mut buf, ex.sop_label.class() as u32);
    buf
}

pub fn write_examples(path: &Path, examples: &[PretrainExample]) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&(examples.len() as u32).to_le_bytes())?;
    for ex in examples {
        let rec = encode_record(ex);
        w.write_all(&(rec.len() as u32).to_le_bytes())?;
        w.write_all(&rec)?;
    }
    w.flush()?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn u32(&mut self) -> Result<u32, CorpusError> {
        let end = self.pos + 4;
        let b = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| CorpusError::Cache(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn vec(&mut self, n: usize) -> Result<Vec<u32>, CorpusError> {
        if self.bytes.len().saturating_sub(self.pos) < n.saturating_mul(4) {
            return Err(CorpusError::Cache(format!("truncated at byte {}", self.pos)));
        }
        (0..n).map(|_| self.u32()).collect()
    }
}

pub fn read_examples(path: &Path) -> Result<Vec<PretrainExample>, CorpusError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 8 || &bytes[..8] != CACHE_MAGIC {
        return Err(CorpusError::Cache("bad magic header".into()));
    }
    let mut r = Reader { bytes: &bytes, pos: 8 };
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let start = r.pos;
        let t = r.u32()? as usize;
        let token_ids = r.vec(t)?;
        let type_ids = r.vec(t)?;
        let attention_mask = r.vec(t)?;
        let n = r.u32()? as usize;
        let mlm_positions = r.vec(n)?;
        let mlm_labels = r.vec(n)?;
        let sop = r.u32()?;
        let sop_label = SopLabel::from_class(sop).ok_or_else(|| CorpusError::Cache(format!("bad SOP label {sop}")))?;
        if r.pos - start != len {
            return Err(CorpusError::Cache(format!("record length {len} disagrees with contents")));
        }
        out.push(PretrainExample {
            input: InputSequence {
                token_ids,
                type_ids,
                attention_mask,
            },
            mlm_positions,
            mlm_labels,
            sop_label,
        });
    }
    if r.pos != bytes.len() {
        return Err(CorpusError::Cache("trailing bytes after last record".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_pretrain_examples, ExampleOptions};
    use crate::numerics::RngStream;

    fn sample() -> Vec<PretrainExample> {
        let docs: Vec<Vec<Vec<u32>>> = (0..4)
            .map(|d| (0..3).map(|s| (0..6).map(|i| 5 + d * 20 + s * 6 + i).collect()).collect())
            .collect();
        let opts = ExampleOptions {
            max_seq_length: 16,
            dup_factor: 2,
            ..Default::default()
        };
        build_pretrain_examples(&docs, 200, &opts, &mut RngStream::new(8)).unwrap()
    }

    #[test]
    fn roundtrip() {
        let ex = sample();
        assert_eq!(ex.len(), 16);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ex.bin");
        write_examples(&p, &ex).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..8], b"ABPT\x00001");
        assert_eq!(read_examples(&p).unwrap(), ex);
    }

    #[test]
    fn corrupt_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ex.bin");
        write_examples(&p, &sample()).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_examples(&p), Err(CorpusError::Cache(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        fs::write(&p, &bad).unwrap();
        assert!(matches!(read_examples(&p), Err(CorpusError::Cache(_))));
    }
}
