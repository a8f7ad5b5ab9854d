//! Checkpoint files.
//!
//! Layout, integers little-endian `u32`:
//!
//! ```text
//! magic    "ABCK0001"
//! hlen     header byte length, then hlen bytes of `key=value` lines
//! count    number of tensors
//! tensor   name_len, name, rank, dims[rank], values as f32 LE
//! ```
//!
//! Model configuration keys sit in the header as-is; free-form metadata is
//! stored under `meta.`. Optimizer tensors live under [`OPTIM_PREFIX`].

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{HeadSet, ModelConfig, ModelError, ParameterSet};
use super::params::names;
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ABCK0001";
pub const OPTIM_PREFIX: &str = "optim/";
const META_PREFIX: &str = "meta.";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParameterSet<f32>,
    /// Tensors under [`OPTIM_PREFIX`], stored with the prefix stripped.
    pub optimizer: ParameterSet<f32>,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: ParameterSet<f32>) -> Self {
        Self {
            config,
            params,
            optimizer: ParameterSet::new(),
            metadata: BTreeMap::new(),
        }
    }

    /// Heads whose tensors are present.
    pub fn heads(&self) -> HeadSet {
        infer_heads(&self.params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = String::new();
        for (k, v) in self.config.to_header() {
            header.push_str(&format!("{k}={v}\n"));
        }
        for (k, v) in &self.metadata {
            header.push_str(&format!("{META_PREFIX}{k}={v}\n"));
        }
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put(&mut out, header.len());
        out.extend_from_slice(header.as_bytes());
        put(&mut out, self.params.len() + self.optimizer.len());
        let optim = self.optimizer.iter().map(|(n, t)| (format!("{OPTIM_PREFIX}{n}"), t));
        for (name, t) in self.params.iter().map(|(n, t)| (n.clone(), t)).chain(optim) {
            put(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            put(&mut out, t.shape().len());
            t.shape().iter().for_each(|&d| put(&mut out, d));
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Writes to a sibling temp file, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = Path::new(&tmp);
        {
            let mut f = fs::File::create(tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(ModelError::Corrupt("bad magic".into()));
        }
        let mut r = Reader { bytes, pos: 8 };
        let hlen = r.u32()?;
        let header = std::str::from_utf8(r.take(hlen)?).map_err(|_| ModelError::Corrupt("header not UTF-8".into()))?;
        let mut cfg_keys = BTreeMap::new();
        let mut metadata = BTreeMap::new();
        for line in header.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ModelError::Corrupt(format!("header line {line:?}")))?;
            match k.strip_prefix(META_PREFIX) {
                Some(m) => metadata.insert(m.to_string(), v.to_string()),
                None => cfg_keys.insert(k.to_string(), v.to_string()),
            };
        }
        let config = ModelConfig::from_header(&cfg_keys)?;

        let count = r.u32()?;
        let mut params = ParameterSet::new();
        let mut optimizer = ParameterSet::new();
        for _ in 0..count {
            let nlen = r.u32()?;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| ModelError::Corrupt("tensor name not UTF-8".into()))?
                .to_string();
            let rank = r.u32()?;
            let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let n = n.ok_or_else(|| ModelError::Corrupt(format!("{name}: shape overflow")))?;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| ModelError::Corrupt("size overflow".into()))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| ModelError::Corrupt(format!("{name}: {e}")))?;
            let dup = match name.strip_prefix(OPTIM_PREFIX) {
                Some(rest) => optimizer.insert_new(rest, t),
                None => params.insert_new(&name, t.with_grad()),
            };
            if !dup {
                return Err(ModelError::Corrupt(format!("duplicate tensor {name}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(ModelError::Corrupt("trailing bytes".into()));
        }
        params.validate(&config, infer_heads(&params))?;
        Ok(Self {
            config,
            params,
            optimizer,
            metadata,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Loads and checks the stored architecture against `expected`, ignoring
    /// `num_labels` and `dropout_rate`, which fine-tuning may change.
    pub fn load_expecting(path: &Path, expected: &ModelConfig) -> Result<Self, ModelError> {
        let ck = Self::load(path)?;
        let mut found = ck.config.to_header();
        let mut want = expected.to_header();
        for k in ["num_labels", "dropout_rate"] {
            found.remove(k);
            want.remove(k);
        }
        for (k, v) in want {
            if found[&k] != v {
                return Err(ModelError::ConfigMismatch {
                    expected: v,
                    found: found[&k].clone(),
                    key: k,
                });
            }
        }
        Ok(ck)
    }
}

fn infer_heads<F>(params: &ParameterSet<F>) -> HeadSet
where
    F: crate::numerics::Scalar,
{
    HeadSet {
        mlm: params.contains(names::MLM_OUTPUT_BIAS),
        sop: params.contains(names::SOP_W),
        ner: params.contains(names::NER_W),
    }
}

fn put(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ModelError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, ModelError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }
}
