//! Binary checkpoint format.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! "SECO" | u32 version
//! u32 len | config text (key = value lines)
//! u64 epoch | f64 best validation MRR | u32 len | dataset directory (may be empty)
//! u64 |E| | u64 |R| | u64 K | 32-byte vocabulary digest
//! incidence: entity sets then relation sets, each `u32 count` of `u32 len, u32 ids..`
//! u64 optimizer step
//! u32 tensor count | per tensor: u32 len, name, u64 rows, u64 cols
//! per tensor: value, first moment, second moment as raw f64
//! ```

use std::fs;
use std::path::Path;

use crate::collab::HyperIncidence;
use crate::event::{Vocab, VocabFingerprint};
use crate::model::Model;
use crate::numerics::{Matrix, Param, ParamStore};
use crate::train::TrainConfig;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"SECO";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub epoch: usize,
    pub best_valid_mrr: f64,
    /// Dataset the model was trained on, if recorded.
    pub data_dir: Option<String>,
}

impl Checkpoint {
    /// Errors unless `vocab` is the vocabulary the model was trained with.
    pub fn check_vocab(&self, vocab: &Vocab) -> Result<()> {
        self.model.fingerprint.check(&vocab.fingerprint())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        put_u32(&mut w, VERSION);
        put_str(&mut w, &self.model.config.to_text());
        put_u64(&mut w, self.epoch as u64);
        w.extend_from_slice(&self.best_valid_mrr.to_le_bytes());
        put_str(&mut w, self.data_dir.as_deref().unwrap_or(""));
        let fp = &self.model.fingerprint;
        put_u64(&mut w, fp.entities);
        put_u64(&mut w, fp.relations);
        put_u64(&mut w, fp.contexts);
        w.extend_from_slice(&fp.digest);
        for sets in [&self.model.incidence.entity_contexts, &self.model.incidence.relation_contexts] {
            put_u32(&mut w, sets.len() as u32);
            for set in sets {
                put_u32(&mut w, set.len() as u32);
                for &c in set {
                    put_u32(&mut w, c as u32);
                }
            }
        }
        let store = &self.model.store;
        put_u64(&mut w, store.step());
        put_u32(&mut w, store.len() as u32);
        for (_, p) in store.iter() {
            put_str(&mut w, &p.name);
            put_u64(&mut w, p.value.rows() as u64);
            put_u64(&mut w, p.value.cols() as u64);
        }
        for (_, p) in store.iter() {
            for m in [&p.value, &p.first_moment, &p.second_moment] {
                for v in m.as_slice() {
                    w.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let config = TrainConfig::parse(&r.string()?, "checkpoint config")
            .map_err(|e| Error::Format(format!("config block: {e}")))?;
        let epoch = r.u64()? as usize;
        let best_valid_mrr = r.f64()?;
        let data_dir = Some(r.string()?).filter(|s| !s.is_empty());
        let mut fingerprint = VocabFingerprint {
            entities: r.u64()?,
            relations: r.u64()?,
            contexts: r.u64()?,
            digest: [0; 32],
        };
        fingerprint.digest.copy_from_slice(r.take(32)?);
        let entity_contexts = r.sets()?;
        let relation_contexts = r.sets()?;
        let incidence = HyperIncidence {
            contexts: fingerprint.contexts as usize,
            entity_contexts,
            relation_contexts,
        };
        let step = r.u64()?;
        let count = r.u32()? as usize;
        let mut directory = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name = r.string()?;
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            directory.push((name, rows, cols));
        }
        let mut store = ParamStore::new();
        for (name, rows, cols) in directory {
            let mut read = || r.matrix(rows, cols);
            let param = Param {
                value: read()?,
                first_moment: read()?,
                second_moment: read()?,
                grad: Matrix::zeros(rows, cols),
                name,
            };
            store.push_restored(param)?;
        }
        store.set_step(step);
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let model = Model::from_store(config, store, incidence, fingerprint)?;
        Ok(Checkpoint {
            model,
            epoch,
            best_valid_mrr,
            data_dir,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(w: &mut Vec<u8>, v: u64) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_str(w: &mut Vec<u8>, s: &str) {
    put_u32(w, s.len() as u32);
    w.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("string is not UTF-8".into()))
    }

    fn sets(&mut self) -> Result<Vec<Vec<usize>>> {
        let n = self.u32()? as usize;
        let mut out = Vec::with_capacity(n.min(self.bytes.len()));
        for _ in 0..n {
            let len = self.u32()? as usize;
            let set = (0..len).map(|_| self.u32().map(|c| c as usize)).collect::<Result<_>>()?;
            out.push(set);
        }
        Ok(out)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Format("tensor size overflows".into()))?;
        let data = self
            .take(n)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Matrix::from_vec(rows, cols, data).map_err(|e| Error::Format(e.to_string()))
    }
}
