//! Checkpoint layout: magic `CPRC`, u32 version, u32 header length, a JSON
//! header, then little-endian f64 blocks (projection row-major, bias, and
//! the combiner tensors when present).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Params, TrainConfig, TrainError};
use crate::features::{CombinerParams, MergerKind, MergerParams, TextEncoderParams};

const MAGIC: &[u8; 4] = b"CPRC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub d: usize,
    pub d_raw: usize,
    pub merger: MergerKind,
    pub config: TrainConfig,
}

fn err(path: &Path, message: impl Into<String>) -> TrainError {
    TrainError::Checkpoint { path: path.to_path_buf(), message: message.into() }
}

pub fn save_checkpoint(path: &Path, params: &Params, config: &TrainConfig) -> Result<(), TrainError> {
    let header = CheckpointHeader {
        version: VERSION,
        d: params.dim(),
        d_raw: params.text.raw_dim(),
        merger: params.merger.kind(),
        config: config.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| err(path, e.to_string()))?;
    let io = |e: std::io::Error| err(path, e.to_string());
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(json.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    let mut put = |x: f64| w.write_all(&x.to_le_bytes());
    for &x in params.text.projection.iter().chain(params.text.bias.iter()) {
        put(x).map_err(io)?;
    }
    if let MergerParams::Combiner(c) = &params.merger {
        for x in c.values() {
            put(x).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<(Params, CheckpointHeader), TrainError> {
    let bytes = fs::read(path).map_err(|e| err(path, e.to_string()))?;
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(err(path, "not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(err(path, format!("unsupported checkpoint version {version}")));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body_start = 12 + header_len;
    if bytes.len() < body_start {
        return Err(err(path, "truncated header"));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[12..body_start]).map_err(|e| err(path, format!("bad header: {e}")))?;

    let (d, d_raw) = (header.d, header.d_raw);
    let mut text = TextEncoderParams::zeros(d_raw, d);
    let mut combiner = match header.merger {
        MergerKind::Sum => None,
        MergerKind::Combiner => Some(CombinerParams::zeros(d)),
    };
    let expected = d * d_raw + d + combiner.as_ref().map_or(0, |c| c.len());
    let body = &bytes[body_start..];
    if body.len() != expected * 8 {
        return Err(err(path, format!("expected {} parameter bytes, found {}", expected * 8, body.len())));
    }
    let mut values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for x in text.projection.iter_mut().chain(text.bias.iter_mut()) {
        *x = values.next().unwrap();
    }
    if let Some(c) = combiner.as_mut() {
        c.for_each_mut(|x| *x = values.next().unwrap());
    }
    let params = Params { text, merger: combiner.map_or(MergerParams::Sum, MergerParams::Combiner) };
    if !params.is_finite() {
        return Err(err(path, "non-finite parameter"));
    }
    Ok((params, header))
}
