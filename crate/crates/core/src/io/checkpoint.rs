//! Network checkpoints and exact optimizer state for resuming training.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::denoiser::{ArchDescriptor, NoiseNet};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "PDCK1";
pub const STATE_MAGIC: &str = "PDOS1";

/// Everything a checkpoint records besides the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub arch: ArchDescriptor,
    pub param_count: usize,
    /// Training patch size.
    pub patch_size: usize,
    pub steps: usize,
    pub final_loss: f64,
    #[serde(default)]
    pub extra: serde_json::Value,
}

fn split_header(bytes: &[u8], magic: &str) -> Result<(String, usize)> {
    let nl = |from: usize| bytes[from..].iter().position(|&b| b == b'\n').map(|p| p + from);
    let first = nl(0).ok_or_else(|| Error::Format("missing magic line".into()))?;
    if &bytes[..first] != magic.as_bytes() {
        return Err(Error::Format(format!("expected {magic} file")));
    }
    let second = nl(first + 1).ok_or_else(|| Error::Format("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[first + 1..second]).map_err(|e| Error::Format(e.to_string()))?;
    Ok((header.to_string(), second + 1))
}

/// Magic line, JSON header, parameters as little-endian f32.
pub fn encode_checkpoint(net: &NoiseNet, header: &CheckpointHeader) -> Result<Vec<u8>> {
    if header.param_count != net.param_count() || &header.arch != net.arch() {
        return Err(Error::Format("checkpoint header does not describe this network".into()));
    }
    let json = serde_json::to_string(header).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = format!("{CHECKPOINT_MAGIC}\n{json}\n").into_bytes();
    for p in net.params() {
        out.extend_from_slice(&(*p as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(NoiseNet, CheckpointHeader)> {
    let (json, start) = split_header(bytes, CHECKPOINT_MAGIC)?;
    let header: CheckpointHeader =
        serde_json::from_str(&json).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    header.arch.validate()?;
    let payload = &bytes[start..];
    if payload.len() != header.param_count * 4 || header.param_count != header.arch.param_count() {
        return Err(Error::Format("checkpoint parameter count mismatch".into()));
    }
    let params = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok((NoiseNet::from_params(header.arch.clone(), params)?, header))
}

pub fn save_checkpoint(path: &Path, net: &NoiseNet, header: &CheckpointHeader) -> Result<()> {
    std::fs::write(path, encode_checkpoint(net, header)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(NoiseNet, CheckpointHeader)> {
    decode_checkpoint(&std::fs::read(path)?)
}

/// Full-precision parameters, Adam moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: usize,
    pub params: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateHeader {
    step: usize,
    len: usize,
}

pub fn encode_state(s: &OptimizerState) -> Result<Vec<u8>> {
    let n = s.params.len();
    if s.m.len() != n || s.v.len() != n {
        return Err(Error::Format("optimizer vectors differ in length".into()));
    }
    let json =
        serde_json::to_string(&StateHeader { step: s.step, len: n }).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = format!("{STATE_MAGIC}\n{json}\n").into_bytes();
    for v in s.params.iter().chain(&s.m).chain(&s.v) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_state(bytes: &[u8]) -> Result<OptimizerState> {
    let (json, start) = split_header(bytes, STATE_MAGIC)?;
    let h: StateHeader = serde_json::from_str(&json).map_err(|e| Error::Format(format!("state header: {e}")))?;
    let payload = &bytes[start..];
    if payload.len() != 3 * h.len * 8 {
        return Err(Error::Format("optimizer state length mismatch".into()));
    }
    let vals: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(OptimizerState {
        step: h.step,
        params: vals[..h.len].to_vec(),
        m: vals[h.len..2 * h.len].to_vec(),
        v: vals[2 * h.len..].to_vec(),
    })
}
