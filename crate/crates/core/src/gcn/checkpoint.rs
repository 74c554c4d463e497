//! Model checkpoint container.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! magic "SGCNCKPT" | version | len + feature schema manifest | len + metadata JSON
//! | input width | conv count | conv widths.. | dense count | dense widths..
//! | per layer: weights (row-major f32) then biases (f32)
//! | sha256 of everything above
//! ```

use std::path::Path;

use ndarray::{Array1, Array2};
use serde_json::Value;
use thiserror::Error;

use super::{Architecture, Layer, ModelParams};
use crate::binio::{put_text, put_u32, seal, unseal, BinError, Reader, DIGEST_LEN};
use crate::features::{FeatureError, FeatureSchema};

const MAGIC: &[u8; 8] = b"SGCNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint digest mismatch")]
    DigestMismatch,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint feature schema: {0}")]
    Schema(#[from] FeatureError),
}

/// Trained parameters plus everything needed to use them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub schema: FeatureSchema,
    /// Free-form training information (hyperparameters, epoch, metrics).
    pub metadata: Value,
}

impl From<BinError> for CheckpointError {
    fn from(e: BinError) -> Self {
        match e {
            BinError::Truncated => CheckpointError::Truncated,
            BinError::Malformed(m) => CheckpointError::Malformed(m),
        }
    }
}

fn widths(r: &mut Reader) -> Result<Vec<usize>, CheckpointError> {
    let n = r.count(4)?;
    Ok((0..n).map(|_| r.usize()).collect::<Result<_, _>>()?)
}

impl Checkpoint {
    pub fn new(params: ModelParams<f32>, schema: FeatureSchema, metadata: Value) -> Self {
        Self { params, schema, metadata }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let arch = self.params.architecture();
        let mut out = Vec::with_capacity(64 + arch.parameter_count() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_text(&mut out, &self.schema.manifest());
        put_text(&mut out, &self.metadata.to_string());
        put_u32(&mut out, arch.input);
        for widths in [&arch.conv, &arch.dense] {
            put_u32(&mut out, widths.len());
            widths.iter().for_each(|&w| put_u32(&mut out, w));
        }
        for layer in self.params.layers() {
            for v in layer.w.iter().chain(&layer.b) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        seal(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
            return Err(CheckpointError::Truncated);
        }
        let version = Reader::new(bytes, MAGIC.len()).u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let body = unseal(bytes).ok_or(CheckpointError::DigestMismatch)?;
        let mut r = Reader::new(body, MAGIC.len() + 4);
        let schema: FeatureSchema = r.text()?.parse()?;
        let metadata: Value =
            serde_json::from_str(r.text()?).map_err(|e| CheckpointError::Malformed(format!("metadata: {e}")))?;
        let arch = Architecture { input: r.usize()?, conv: widths(&mut r)?, dense: widths(&mut r)? };
        arch.validate().map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let mut params = ModelParams::zeros(&arch);
        for (layer, (fan_in, fan_out)) in params.layers_mut().zip(arch.shapes()) {
            let w = Array2::from_shape_vec((fan_in, fan_out), r.floats(fan_in * fan_out)?).unwrap();
            *layer = Layer { w, b: Array1::from(r.floats(fan_out)?) };
        }
        if !r.at_end() {
            return Err(CheckpointError::Malformed("trailing bytes".into()));
        }
        Ok(Self { params, schema, metadata })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
