//! `SLM1` checkpoint files.
//!
//! Layout: the magic `SLM1`, a `u32` little-endian header length, a UTF-8
//! `key = value` header ending with a `[config]` section that holds the
//! canonical model and training settings, then one record per parameter
//! array: `u32` name length, name, `u8` dtype tag, `u32` rank, `u64` dims,
//! and the values as `f64` little-endian. Both element types store `f64`, so
//! `f32` values round-trip exactly.

use std::fmt::Write as _;
use std::path::Path;

use sublm_core::compose::VocabShape;
use sublm_core::compute::{DType, Real, Tensor};
use sublm_core::model::Model;
use sublm_core::train::TrainConfig;
use sublm_core::vocab::Vocabularies;

use crate::config::{echo, RunConfig};
use crate::error::{CliError, CliResult};

const MAGIC: &[u8; 4] = b"SLM1";
const VERSION: u32 = 1;
const TAG_F32: u8 = 1;
const TAG_F64: u8 = 2;

/// A trained model of either element type.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    F64(Model<f64>),
    F32(Model<f32>),
}

/// Runs `$body` with `$m` bound to the inner `Model<T>`.
#[macro_export]
macro_rules! with_model {
    ($any:expr, $m:ident => $body:expr) => {
        match $any {
            $crate::checkpoint::AnyModel::F64($m) => $body,
            $crate::checkpoint::AnyModel::F32($m) => $body,
        }
    };
}

impl AnyModel {
    pub fn from_model<T: Real>(model: Model<T>) -> Self {
        let mut slot = Some(model);
        let any: &mut dyn std::any::Any = &mut slot;
        if let Some(m) = any.downcast_mut::<Option<Model<f64>>>() {
            return AnyModel::F64(m.take().expect("model present"));
        }
        match any.downcast_mut::<Option<Model<f32>>>() {
            Some(m) => AnyModel::F32(m.take().expect("model present")),
            None => unreachable!("Real is implemented for f32 and f64 only"),
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            AnyModel::F64(_) => DType::F64,
            AnyModel::F32(_) => DType::F32,
        }
    }

    pub fn shape(&self) -> VocabShape {
        with_model!(self, m => m.shape)
    }

    pub fn count_parameters(&self) -> usize {
        with_model!(self, m => m.count_parameters())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub train: TrainConfig,
    pub model: AnyModel,
    pub word_hash: String,
    pub subword_hash: String,
    pub epoch: usize,
    pub best_val_ppl: f64,
}

impl SavedModel {
    /// Fails with a vocabulary mismatch unless `vocabs` is the one the model
    /// was trained with.
    pub fn check_vocab(&self, vocabs: &Vocabularies) -> CliResult<()> {
        let w = vocabs.word_hash();
        if w != self.word_hash {
            return Err(CliError::VocabMismatch(format!(
                "checkpoint word hash {} but vocabulary hash {w}",
                short(&self.word_hash)
            )));
        }
        let s = vocabs.subword_hash();
        if s != self.subword_hash {
            return Err(CliError::VocabMismatch(format!(
                "checkpoint subword hash {} but vocabulary hash {s}",
                short(&self.subword_hash)
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = self.model.shape();
        let mut header = String::new();
        let dtype = match self.model.dtype() {
            DType::F64 => "f64",
            DType::F32 => "f32",
        };
        let arrays = with_model!(&self.model, m => m.params.len());
        for (k, v) in [
            ("format", "SLM1".to_string()),
            ("version", VERSION.to_string()),
            ("dtype", dtype.to_string()),
            ("words", shape.words.to_string()),
            ("subwords", shape.subwords.to_string()),
            ("n", shape.n.to_string()),
            ("word_hash", self.word_hash.clone()),
            ("subword_hash", self.subword_hash.clone()),
            ("epoch", self.epoch.to_string()),
            ("best_val_ppl", format!("{:?}", self.best_val_ppl)),
            ("arrays", arrays.to_string()),
        ] {
            let _ = writeln!(header, "{k} = {v}");
        }
        header.push_str("[config]\n");
        header.push_str(&echo(&self.train, self.model.dtype()));

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        with_model!(&self.model, m => write_arrays(&mut out, m));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> CliResult<Self> {
        let mut r = Cursor { bytes, at: 0 };
        if r.take(4)? != MAGIC {
            return Err(corrupt("missing SLM1 magic"));
        }
        let len = r.u32()? as usize;
        let header = std::str::from_utf8(r.take(len)?).map_err(|_| corrupt("header is not UTF-8"))?;
        let (fields, config) = header.split_once("[config]\n").ok_or_else(|| corrupt("header lacks [config]"))?;
        let get = |key: &str| -> CliResult<String> {
            fields
                .lines()
                .filter_map(|l| l.split_once(" = "))
                .find(|(k, _)| *k == key)
                .map(|(_, v)| v.to_string())
                .ok_or_else(|| corrupt(&format!("header lacks `{key}`")))
        };
        let num = |v: String, key: &str| -> CliResult<usize> { v.parse().map_err(|_| corrupt(&format!("bad `{key}`"))) };
        if get("version")? != VERSION.to_string() {
            return Err(corrupt("unsupported version"));
        }
        let shape = VocabShape {
            words: num(get("words")?, "words")?,
            subwords: num(get("subwords")?, "subwords")?,
            n: num(get("n")?, "n")?,
        };
        let arrays = num(get("arrays")?, "arrays")?;
        let epoch = num(get("epoch")?, "epoch")?;
        let best_val_ppl: f64 = get("best_val_ppl")?.parse().map_err(|_| corrupt("bad `best_val_ppl`"))?;
        let word_hash = get("word_hash")?;
        let subword_hash = get("subword_hash")?;
        let run = RunConfig::parse(config, None)?;
        let train = run.train;
        let model = match run.dtype {
            DType::F64 => AnyModel::F64(read_model(&mut r, &train, shape, arrays)?),
            DType::F32 => AnyModel::F32(read_model(&mut r, &train, shape, arrays)?),
        };
        if r.at != bytes.len() {
            return Err(corrupt("trailing bytes after the last array"));
        }
        Ok(SavedModel {
            train,
            model,
            word_hash,
            subword_hash,
            epoch,
            best_val_ppl,
        })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        crate::error::write(path, self.to_bytes())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            CliError::Other(m) => CliError::Other(format!("{}: {m}", path.display())),
            e => e,
        })
    }
}

fn short(h: &str) -> &str {
    &h[..h.len().min(12)]
}

fn corrupt(m: &str) -> CliError {
    CliError::Other(format!("corrupt checkpoint: {m}"))
}

fn write_arrays<T: Real>(out: &mut Vec<u8>, model: &Model<T>) {
    let tag = match T::DTYPE {
        DType::F32 => TAG_F32,
        DType::F64 => TAG_F64,
    };
    for (name, t) in model.params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(tag);
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in t.data() {
            out.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> CliResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn read_model<T: Real>(r: &mut Cursor<'_>, train: &TrainConfig, shape: VocabShape, arrays: usize) -> CliResult<Model<T>> {
    let mut model = Model::<T>::new(train.model.clone(), shape)?;
    if arrays != model.params.len() {
        return Err(corrupt(&format!("{arrays} arrays but the model has {}", model.params.len())));
    }
    let want = match T::DTYPE {
        DType::F32 => TAG_F32,
        DType::F64 => TAG_F64,
    };
    let mut seen = std::collections::BTreeSet::new();
    for _ in 0..arrays {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| corrupt("array name is not UTF-8"))?.to_string();
        if r.take(1)?[0] != want {
            return Err(corrupt(&format!("array `{name}` has the wrong dtype tag")));
        }
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<CliResult<Vec<_>>>()?;
        let count = dims.iter().product::<usize>();
        let raw = r.take(count.checked_mul(8).ok_or_else(|| corrupt("array too large"))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        model.params.set(&name, Tensor::new(&dims, data)?)?;
        if !seen.insert(name.clone()) {
            return Err(corrupt(&format!("array `{name}` appears twice")));
        }
    }
    Ok(model)
}
