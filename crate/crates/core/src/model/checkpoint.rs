//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `MAFAAECK`, a little-endian `u32` format
//! version, a little-endian `u64` header length, the JSON header, every
//! parameter array as little-endian `f64` in header order, then the SHA-256
//! digest of all preceding bytes. MADE masks are not stored; they are rebuilt
//! from the config and must reproduce exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::{DiscriminatorParams, GeneratorParams};
use super::ModelConfig;
use crate::data::NormStats;
use crate::detection::CalibrationStats;
use crate::error::{Error, Result};
use crate::numerics::{ParamTree, Role};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MAFAAECK";
const DIGEST_LEN: usize = 32;

/// Provenance carried in the header. Contains no timestamps so that equal
/// runs produce equal bytes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub crate_version: String,
    pub seed: Option<u64>,
    pub epochs_trained: usize,
    /// Effective run configuration, echoed verbatim.
    #[serde(default)]
    pub run_config: Option<serde_json::Value>,
}

impl CheckpointMeta {
    pub fn new(seed: Option<u64>, epochs_trained: usize) -> Self {
        Self { crate_version: env!("CARGO_PKG_VERSION").to_string(), seed, epochs_trained, run_config: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub norm: NormStats,
    pub generator: GeneratorParams,
    pub discriminator: DiscriminatorParams,
    pub calibration: Option<CalibrationStats>,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    role: Role,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model_config: ModelConfig,
    norm_stats: NormStats,
    calibration: Option<CalibrationStats>,
    meta: CheckpointMeta,
    arrays: Vec<ArrayEntry>,
}

impl Checkpoint {
    /// Validates array shapes, finiteness, masks and normalization width.
    pub fn check(&self) -> Result<()> {
        self.config.validate()?;
        self.generator.check(&self.config)?;
        self.discriminator.check(&self.config)?;
        if self.norm.n_signals() != self.config.n_signals {
            return Err(Error::Config(format!(
                "normalization covers {} signals, model expects {}",
                self.norm.n_signals(),
                self.config.n_signals
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.check()?;
        let names = self.generator.names().into_iter().chain(self.discriminator.names());
        let arrays: Vec<_> = self.generator.arrays().into_iter().chain(self.discriminator.arrays()).collect();
        let header = Header {
            format_version: FORMAT_VERSION,
            model_config: self.config.clone(),
            norm_stats: self.norm.clone(),
            calibration: self.calibration.clone(),
            meta: self.meta.clone(),
            arrays: names
                .zip(&arrays)
                .map(|(name, a)| ArrayEntry { name, shape: a.shape.clone(), role: a.role })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let n_values: usize = arrays.iter().map(|a| a.len()).sum();
        let mut buf = Vec::with_capacity(20 + json.len() + 8 * n_values + DIGEST_LEN);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        for a in &arrays {
            for v in &a.values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < MAGIC.len() + 12 + DIGEST_LEN || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (this build reads {FORMAT_VERSION})"
            )));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("content digest mismatch (file is corrupted)"));
        }
        let header_len = u64::from_le_bytes(body[12..20].try_into().unwrap()) as usize;
        let header_end =
            20usize.checked_add(header_len).filter(|&e| e <= body.len()).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&body[20..header_end])?;

        let mut generator = GeneratorParams::zeros(&header.model_config)?;
        let mut discriminator = DiscriminatorParams::zeros(&header.model_config)?;
        let mut targets: Vec<_> = generator.arrays_mut();
        targets.extend(discriminator.arrays_mut());
        if targets.len() != header.arrays.len() {
            return Err(bad("array manifest does not match the model config"));
        }
        let mut cursor = header_end;
        for (dst, entry) in targets.into_iter().zip(&header.arrays) {
            if dst.shape != entry.shape || dst.role != entry.role {
                return Err(Error::Checkpoint(format!("array {} does not match the model config", entry.name)));
            }
            let end = cursor + 8 * dst.len();
            if end > body.len() {
                return Err(bad("truncated array data"));
            }
            for (v, chunk) in dst.values.iter_mut().zip(body[cursor..end].chunks_exact(8)) {
                *v = f64::from_le_bytes(chunk.try_into().unwrap());
            }
            cursor = end;
        }
        if cursor != body.len() {
            return Err(bad("trailing bytes after array data"));
        }
        let ck = Checkpoint {
            config: header.model_config,
            norm: header.norm_stats,
            generator,
            discriminator,
            calibration: header.calibration,
            meta: header.meta,
        };
        ck.check()?;
        Ok(ck)
    }

    /// Calibration statistics, required by every scoring path.
    pub fn calibration(&self) -> Result<&CalibrationStats> {
        self.calibration
            .as_ref()
            .ok_or_else(|| Error::Calibration("checkpoint is not calibrated; run `calibrate` first".into()))
    }
}

/// Writes atomically through a sibling temporary file.
pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = ck.to_bytes()?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    Checkpoint::from_bytes(&bytes)
}
