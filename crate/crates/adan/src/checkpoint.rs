//! Binary checkpoint persistence.
//!
//! Layout: magic `ADANCKPT`, a version byte, a length-prefixed UTF-8 config
//! block of sorted `key=value` lines (model shape, training knobs,
//! best_epoch, dev_accuracy), a tensor count, then per tensor a
//! length-prefixed name, rank, dims, and row-major little-endian f64 values.
//! Tensors cover parameters and batch-norm running statistics. An optional
//! trailer carries Adam state. Serialization is canonical: loading a
//! checkpoint and saving it again reproduces the byte stream exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{AdanError, Result};
use crate::matrix::Matrix;
use crate::model::{build_model, AdanModel, ModelConfig, ModelMode};
use crate::trainer::TrainConfig;

const MAGIC: &[u8; 8] = b"ADANCKPT";
const VERSION: u8 = 1;

/// Optional optimizer state: step counter plus per-parameter first and
/// second moments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamDump {
    pub t: u64,
    pub moments: BTreeMap<String, (Matrix, Matrix)>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub best_epoch: usize,
    pub dev_accuracy: f64,
    pub tensors: BTreeMap<String, Matrix>,
    pub adam_fp: Option<AdamDump>,
    pub adam_q: Option<AdamDump>,
}

impl Checkpoint {
    /// Snapshot of a trained model plus its provenance.
    pub fn from_model(
        model: &AdanModel,
        train_config: &TrainConfig,
        best_epoch: usize,
        dev_accuracy: f64,
    ) -> Self {
        Checkpoint {
            model_config: model.config.clone(),
            train_config: train_config.clone(),
            best_epoch,
            dev_accuracy,
            tensors: model.state_tensors().into_iter().collect(),
            adam_fp: None,
            adam_q: None,
        }
    }

    /// Rebuilds the model this checkpoint was taken from.
    pub fn restore_model(&self) -> Result<AdanModel> {
        let mut model = build_model(&self.model_config, 0)?;
        model.load_state_tensors(&self.tensors)?;
        Ok(model)
    }

    fn config_block(&self) -> String {
        let mc = &self.model_config;
        let tc = &self.train_config;
        let mut lines: Vec<String> = vec![
            format!("best_epoch={}", self.best_epoch),
            format!("dev_accuracy={}", self.dev_accuracy),
            format!("model.embed_dim={}", mc.embed_dim),
            format!("model.f_depth={}", mc.f_depth),
            format!("model.hidden_width={}", mc.hidden_width),
            format!("model.mode={}", mc.mode),
            format!("model.num_classes={}", mc.num_classes),
            format!("model.p_depth={}", mc.p_depth),
            format!("model.q_depth={}", mc.q_depth),
            format!("train.batch_size={}", tc.batch_size),
            format!("train.clip_bound={}", tc.clip_bound),
            format!("train.clip_exempt_norm={}", tc.clip_exempt_norm),
            format!("train.epochs={}", tc.epochs),
            format!("train.k={}", tc.k),
            format!("train.lambda={}", tc.lambda),
            format!("train.lr_fp={}", tc.lr_fp),
            format!("train.lr_q={}", tc.lr_q),
            format!("train.mode={}", tc.mode),
            format!("train.seed={}", tc.seed),
        ];
        lines.sort();
        let mut out = String::new();
        for line in lines {
            let _ = writeln!(out, "{line}");
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);

        let config = self.config_block();
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(config.as_bytes());

        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, tensor) in &self.tensors {
            write_tensor(&mut out, name, tensor);
        }

        let flags = (self.adam_fp.is_some() as u8) | ((self.adam_q.is_some() as u8) << 1);
        out.push(flags);
        for dump in [&self.adam_fp, &self.adam_q].into_iter().flatten() {
            out.extend_from_slice(&dump.t.to_le_bytes());
            out.extend_from_slice(&(dump.moments.len() as u32).to_le_bytes());
            for (name, (m, v)) in &dump.moments {
                write_name(&mut out, name);
                write_shape_values(&mut out, m);
                write_shape_values(&mut out, v);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(8)?;
        if magic != MAGIC {
            return Err(AdanError::Checkpoint("bad checkpoint magic".to_string()));
        }
        let version = cur.take(1)?[0];
        if version != VERSION {
            return Err(AdanError::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }

        let config_len = cur.read_u32()? as usize;
        let config_bytes = cur.take(config_len)?;
        let config_text = std::str::from_utf8(config_bytes)
            .map_err(|_| AdanError::Checkpoint("config block is not UTF-8".to_string()))?;
        let kv = parse_kv(config_text)?;

        let tensor_count = cur.read_u32()? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..tensor_count {
            let (name, tensor) = read_tensor(&mut cur)?;
            tensors.insert(name, tensor);
        }

        let flags = cur.take(1)?[0];
        let mut read_dump = |present: bool| -> Result<Option<AdamDump>> {
            if !present {
                return Ok(None);
            }
            let t = cur.read_u64()?;
            let count = cur.read_u32()? as usize;
            let mut moments = BTreeMap::new();
            for _ in 0..count {
                let name = read_name(&mut cur)?;
                let m = read_shape_values(&mut cur)?;
                let v = read_shape_values(&mut cur)?;
                moments.insert(name, (m, v));
            }
            Ok(Some(AdamDump { t, moments }))
        };
        let adam_fp = read_dump(flags & 1 != 0)?;
        let adam_q = read_dump(flags & 2 != 0)?;

        let get = |key: &str| -> Result<&String> {
            kv.get(key)
                .ok_or_else(|| AdanError::Checkpoint(format!("missing config key {key}")))
        };
        let parse_usize = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| AdanError::Checkpoint(format!("bad value for {key}")))
        };
        let parse_f64 = |key: &str| -> Result<f64> {
            get(key)?
                .parse()
                .map_err(|_| AdanError::Checkpoint(format!("bad value for {key}")))
        };

        let model_config = ModelConfig {
            embed_dim: parse_usize("model.embed_dim")?,
            hidden_width: parse_usize("model.hidden_width")?,
            f_depth: parse_usize("model.f_depth")?,
            p_depth: parse_usize("model.p_depth")?,
            q_depth: parse_usize("model.q_depth")?,
            num_classes: parse_usize("model.num_classes")?,
            mode: get("model.mode")?.parse::<ModelMode>()?,
        };
        let train_config = TrainConfig {
            lambda: parse_f64("train.lambda")?,
            k: parse_usize("train.k")?,
            lr_fp: parse_f64("train.lr_fp")?,
            lr_q: parse_f64("train.lr_q")?,
            clip_bound: parse_f64("train.clip_bound")?,
            epochs: parse_usize("train.epochs")?,
            batch_size: parse_usize("train.batch_size")?,
            seed: parse_usize("train.seed")? as u64,
            mode: get("train.mode")?.parse::<ModelMode>()?,
            clip_exempt_norm: get("train.clip_exempt_norm")? == "true",
        };

        Ok(Checkpoint {
            model_config,
            train_config,
            best_epoch: parse_usize("best_epoch")?,
            dev_accuracy: parse_f64("dev_accuracy")?,
            tensors,
            adam_fp,
            adam_q,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_bytes(&fs::read(path)?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(AdanError::Checkpoint("truncated checkpoint".to_string()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn read_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn read_u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn write_name(out: &mut Vec<u8>, name: &str) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
}

fn read_name(cur: &mut Cursor<'_>) -> Result<String> {
    let len = cur.read_u32()? as usize;
    let bytes = cur.take(len)?;
    String::from_utf8(bytes.to_vec())
        .map_err(|_| AdanError::Checkpoint("tensor name is not UTF-8".to_string()))
}

fn write_shape_values(out: &mut Vec<u8>, tensor: &Matrix) {
    out.push(2u8); // rank
    out.extend_from_slice(&(tensor.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(tensor.cols() as u32).to_le_bytes());
    for v in tensor.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_shape_values(cur: &mut Cursor<'_>) -> Result<Matrix> {
    let rank = cur.take(1)?[0];
    if rank != 2 {
        return Err(AdanError::Checkpoint(format!("unsupported rank {rank}")));
    }
    let rows = cur.read_u32()? as usize;
    let cols = cur.read_u32()? as usize;
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| AdanError::Checkpoint("tensor too large".to_string()))?;
    let raw = cur.take(n * 8)?;
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::from_vec(rows, cols, values)
}

fn write_tensor(out: &mut Vec<u8>, name: &str, tensor: &Matrix) {
    write_name(out, name);
    write_shape_values(out, tensor);
}

fn read_tensor(cur: &mut Cursor<'_>) -> Result<(String, Matrix)> {
    let name = read_name(cur)?;
    let tensor = read_shape_values(cur)?;
    Ok((name, tensor))
}

fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| AdanError::Checkpoint(format!("malformed config line {line}")))?;
        map.insert(key.to_string(), value.to_string());
    }
    Ok(map)
}
