//! Binary checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic     4 bytes  "KBCM"
//! variant   u8       0 = CP, 1 = ComplEx, 2 = DistMult
//! precision u8       bytes per value, always 8
//! reserved  u16      0
//! N, P, R   3 x u32
//! blocks    f64 values, each factor block row-major, in model block order
//! ```
//!
//! A JSON sidecar next to the checkpoint (same stem, `.json`) carries the
//! training configuration the parameters came from.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{ModelParams, Variant};
use crate::error::{KbcError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"KBCM";
const HEADER_LEN: usize = 20;

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_checkpoint<S: Serialize>(path: &Path, model: &ModelParams, sidecar: &S) -> Result<()> {
    let file = File::create(path).map_err(|e| KbcError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(CHECKPOINT_MAGIC);
    header.push(model.variant().tag());
    header.push(8);
    header.extend_from_slice(&0u16.to_le_bytes());
    for dim in [model.num_entities(), model.num_predicates(), model.rank()] {
        header.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    w.write_all(&header).map_err(|e| KbcError::io(path, e))?;
    for block in model.blocks() {
        for x in block.data() {
            w.write_all(&x.to_le_bytes()).map_err(|e| KbcError::io(path, e))?;
        }
    }
    w.flush().map_err(|e| KbcError::io(path, e))?;

    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(sidecar)?;
    std::fs::write(&side, json).map_err(|e| KbcError::io(&side, e))
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParams> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| KbcError::io(path, e))?;
    let bad = |reason: String| KbcError::BadCheckpoint {
        path: path.to_owned(),
        reason,
    };
    if bytes.len() < HEADER_LEN || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("missing KBCM header".into()));
    }
    let variant = Variant::from_tag(bytes[4]).ok_or_else(|| bad(format!("variant tag {}", bytes[4])))?;
    if bytes[5] != 8 {
        return Err(bad(format!("unsupported precision {} bytes", bytes[5])));
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (n, p, r) = (u32_at(8), u32_at(12), u32_at(16));
    let mut model = ModelParams::zeros(variant, n, p, r);
    let expected = HEADER_LEN + 8 * model.num_parameters();
    if bytes.len() != expected {
        return Err(bad(format!("length {} does not match {expected}", bytes.len())));
    }
    let mut at = HEADER_LEN;
    for block in model.blocks_mut() {
        for x in block.data_mut() {
            *x = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
            at += 8;
        }
    }
    Ok(model)
}
