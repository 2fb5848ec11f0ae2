use std::fs;
use std::io::{self, ErrorKind};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ArchConfig, ConditionSpec, GanError, GanModel, Hyperparams};

pub const CHECKPOINT_VERSION: u32 = 1;

const MAGIC: &[u8; 4] = b"DFGN";
const META_FILE: &str = "meta.json";
const PARAMS_FILE: &str = "params.bin";

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    condition: ConditionSpec,
    hyperparams: Hyperparams,
    arch: ArchConfig,
    step_count: usize,
    params_sha256: String,
}

fn invalid(msg: impl Into<String>) -> GanError {
    GanError::Io(io::Error::new(ErrorKind::InvalidData, msg.into()))
}

/// Writes `meta.json` and `params.bin` into directory `path`, creating it if
/// needed. Parameters are stored generator first, then critic, each array as
/// a little-endian length followed by little-endian `f64` values.
pub fn save_checkpoint(model: &GanModel, path: &Path) -> Result<(), GanError> {
    fs::create_dir_all(path)?;
    let arrays: Vec<&Vec<f64>> = model
        .generator
        .params()
        .into_iter()
        .chain(model.discriminator.params())
        .collect();
    let mut bytes = Vec::with_capacity(16 + arrays.iter().map(|a| 8 + 8 * a.len()).sum::<usize>());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(arrays.len() as u64).to_le_bytes());
    for a in &arrays {
        bytes.extend_from_slice(&(a.len() as u64).to_le_bytes());
        for v in a.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let meta = Meta {
        format_version: CHECKPOINT_VERSION,
        condition: model.condition,
        hyperparams: model.hyperparams.clone(),
        arch: model.arch.clone(),
        step_count: model.step_count,
        params_sha256: hex::encode(Sha256::digest(&bytes)),
    };
    fs::write(path.join(PARAMS_FILE), &bytes)?;
    let json = serde_json::to_string_pretty(&meta).map_err(io::Error::from)?;
    fs::write(path.join(META_FILE), json + "\n")?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], GanError> {
        if self.bytes.len() < n {
            return Err(invalid("parameter file is truncated"));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64, GanError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Loads a checkpoint written by [`save_checkpoint`]. Any inconsistency is
/// an error; a partially restored model is never returned.
pub fn load_checkpoint(path: &Path) -> Result<GanModel, GanError> {
    let meta_text = fs::read_to_string(path.join(META_FILE))?;
    let raw: serde_json::Value = serde_json::from_str(&meta_text).map_err(|e| invalid(format!("meta.json: {e}")))?;
    let version = raw.get("format_version").and_then(|v| v.as_u64());
    if version != Some(CHECKPOINT_VERSION as u64) {
        return Err(GanError::VersionMismatch(format!(
            "expected format {CHECKPOINT_VERSION}, found {}",
            version.map_or("none".to_owned(), |v| v.to_string())
        )));
    }
    let meta: Meta = serde_json::from_value(raw).map_err(|e| invalid(format!("meta.json: {e}")))?;

    let bytes = fs::read(path.join(PARAMS_FILE))?;
    if hex::encode(Sha256::digest(&bytes)) != meta.params_sha256 {
        return Err(invalid("parameter file digest does not match meta.json"));
    }
    let mut reader = Reader { bytes: &bytes };
    if reader.take(4)? != MAGIC {
        return Err(invalid("not a parameter file"));
    }
    let file_version = u32::from_le_bytes(reader.take(4)?.try_into().expect("4 bytes"));
    if file_version != CHECKPOINT_VERSION {
        return Err(GanError::VersionMismatch(format!(
            "expected format {CHECKPOINT_VERSION}, parameter file has {file_version}"
        )));
    }

    let mut model = GanModel::new(meta.condition, meta.hyperparams, meta.arch)?;
    model.step_count = meta.step_count;
    let count = reader.u64()? as usize;
    let g_arrays = model.generator.params().len();
    let d_arrays = model.discriminator.params().len();
    if count != g_arrays + d_arrays {
        return Err(invalid(format!("expected {} arrays, found {count}", g_arrays + d_arrays)));
    }
    let mut targets: Vec<&mut Vec<f64>> = model.generator.params_mut();
    targets.extend(model.discriminator.params_mut());
    for (i, target) in targets.into_iter().enumerate() {
        let len = reader.u64()? as usize;
        if len != target.len() {
            return Err(invalid(format!("array {i}: expected {} values, found {len}", target.len())));
        }
        let data = reader.take(len.checked_mul(8).ok_or_else(|| invalid("array length overflow"))?)?;
        for (slot, chunk) in target.iter_mut().zip(data.chunks_exact(8)) {
            *slot = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    if !reader.bytes.is_empty() {
        return Err(invalid("trailing bytes after parameters"));
    }
    Ok(model)
}
