//! Binary checkpoint format.
//!
//! ```text
//! magic     8 bytes  "ADASIDCK"
//! version   u32 LE
//! hdr_len   u64 LE
//! header    hdr_len bytes of TOML: step, rng position, config, and the
//!           parameter manifest (name, rows, cols) in blob order
//! blobs     f32 LE values, row-major, one blob per manifest entry
//! ```
//!
//! Parameter values are rounded to `f32` when a checkpoint is captured, so
//! the in-memory checkpoint and its reloaded copy are bit-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::numeric::{Linear, Matrix, Mlp, Parameter, RngState};
use crate::tokenizer::{Codebook, ModelState};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ADASIDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub model: ModelState,
    pub step: u64,
    pub rng: RngState,
}

#[derive(Debug, Serialize, Deserialize)]
struct RngHeader {
    seed: u64,
    stream: u64,
    // u128 does not fit a TOML integer
    position: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    step: u64,
    rng: RngHeader,
    config: TrainConfig,
    params: Vec<ParamEntry>,
}

fn frozen(p: &Parameter) -> Parameter {
    let (r, c) = p.shape();
    let data = p.value.data().iter().map(|&v| f64::from(v as f32)).collect();
    Parameter::new(p.name(), Matrix::from_vec(r, c, data).expect("same shape"))
}

fn frozen_linear(l: &Linear) -> Linear {
    Linear::new(frozen(&l.weight), frozen(&l.bias)).expect("shapes already valid")
}

fn frozen_mlp(m: &Mlp) -> Mlp {
    Mlp::new(frozen_linear(&m.first), frozen_linear(&m.second)).expect("shapes already valid")
}

impl Checkpoint {
    /// Snapshot of parameter values (rounded to `f32`) without gradients,
    /// optimizer moments, or recorded activations.
    pub fn capture(config: &TrainConfig, model: &ModelState, step: u64, rng: &RngState) -> Self {
        let model = ModelState {
            config: model.config.clone(),
            encoder: frozen_mlp(&model.encoder),
            decoder: frozen_mlp(&model.decoder),
            codebooks: model
                .codebooks
                .iter()
                .map(|cb| Codebook {
                    layer: cb.layer,
                    codewords: frozen(&cb.codewords),
                })
                .collect(),
        };
        Self {
            config: config.clone(),
            model,
            step,
            rng: rng.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let params = self.model.parameters();
        let header = Header {
            step: self.step,
            rng: RngHeader {
                seed: self.rng.seed(),
                stream: self.rng.stream(),
                position: self.rng.position().to_string(),
            },
            config: self.config.clone(),
            params: params
                .iter()
                .map(|p| ParamEntry {
                    name: p.name().to_string(),
                    rows: p.shape().0,
                    cols: p.shape().1,
                })
                .collect(),
        };
        let header = toml::to_string(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for p in params {
            for &v in p.value.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptCheckpoint(m.to_string());
        if bytes.len() < 20 {
            return Err(corrupt("file shorter than the fixed preamble"));
        }
        if &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic bytes"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::CorruptCheckpoint(format!(
                "unsupported version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let hdr_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let hdr_end = 20usize
            .checked_add(hdr_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| corrupt("header truncated"))?;
        let header_text = std::str::from_utf8(&bytes[20..hdr_end]).map_err(|_| corrupt("header is not UTF-8"))?;
        let header: Header =
            toml::from_str(header_text).map_err(|e| Error::CorruptCheckpoint(format!("header: {e}")))?;
        header
            .config
            .validate()
            .map_err(|e| Error::CorruptCheckpoint(format!("config: {e}")))?;

        let mut cursor = hdr_end;
        let mut params = Vec::with_capacity(header.params.len());
        for entry in &header.params {
            let n = entry.rows * entry.cols;
            let end = cursor
                .checked_add(n * 4)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| Error::CorruptCheckpoint(format!("blob `{}` truncated", entry.name)))?;
            let data = bytes[cursor..end]
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect();
            cursor = end;
            params.push(Parameter::new(
                entry.name.clone(),
                Matrix::from_vec(entry.rows, entry.cols, data)?,
            ));
        }
        if cursor != bytes.len() {
            return Err(corrupt("trailing bytes after the last blob"));
        }

        let tok = &header.config.tokenizer;
        let expected = 8 + tok.layers;
        if params.len() != expected {
            return Err(Error::CorruptCheckpoint(format!(
                "{} parameter blobs, expected {expected}",
                params.len()
            )));
        }
        let mut it = params.into_iter();
        let mut linear = |fan_in: usize, fan_out: usize| -> Result<Linear> {
            let w = it.next().expect("count checked");
            let b = it.next().expect("count checked");
            if w.shape() != (fan_in, fan_out) || b.shape() != (1, fan_out) {
                return Err(Error::CorruptCheckpoint(format!(
                    "`{}` has shape {:?}, expected ({fan_in}, {fan_out})",
                    w.name(),
                    w.shape()
                )));
            }
            Linear::new(w, b)
        };
        let d = tok.d;
        let encoder = Mlp::new(linear(tok.d_in, 2 * d)?, linear(2 * d, d)?)?;
        let decoder = Mlp::new(linear(d, 2 * d)?, linear(2 * d, tok.d_in)?)?;
        let codebooks = it
            .enumerate()
            .map(|(layer, p)| {
                if p.shape() != (tok.codebook_size, d) {
                    return Err(Error::CorruptCheckpoint(format!(
                        "codebook {layer} has shape {:?}",
                        p.shape()
                    )));
                }
                Ok(Codebook { layer, codewords: p })
            })
            .collect::<Result<Vec<_>>>()?;
        let position: u128 = header
            .rng
            .position
            .parse()
            .map_err(|_| corrupt("rng position is not an integer"))?;
        Ok(Self {
            model: ModelState {
                config: tok.clone(),
                encoder,
                decoder,
                codebooks,
            },
            config: header.config,
            step: header.step,
            rng: RngState::restore(header.rng.seed, header.rng.stream, position),
        })
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, checkpoint.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
