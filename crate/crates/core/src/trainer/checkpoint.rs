//! Versioned binary checkpoints: magic, version, JSON header, then raw
//! little-endian `f32` parameters and Adam moments.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SPKMIPCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    /// Batch position inside the current epoch.
    pub cursor: usize,
    pub step: u64,
    pub adam_t: u64,
    /// Free scalar behind the learnable `mu` and its Adam moments.
    pub mu_logit: f64,
    pub mu_moments: [f64; 2],
    pub best_val_loss: Option<f64>,
    /// Sum of step losses so far in the current epoch.
    pub epoch_loss_sum: f64,
    pub num_params: usize,
}

impl CheckpointHeader {
    /// The sampling stream is a pure function of these three numbers.
    pub fn rng_state(&self) -> (u64, usize, usize) {
        (self.config.sampling_seed(), self.epoch, self.cursor)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<f32>,
    pub adam_m: Vec<f32>,
    pub adam_v: Vec<f32>,
}

impl Checkpoint {
    /// Current `mu` (the fixed config value unless it is learned).
    pub fn mu(&self) -> f64 {
        if self.header.config.loss.learnable_mu {
            super::sigmoid64(self.header.mu_logit)
        } else {
            self.header.config.loss.mu
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let n = self.header.num_params;
        if self.params.len() != n || self.adam_m.len() != n || self.adam_v.len() != n {
            return Err(Error::Shape("checkpoint buffers disagree with num_params".into()));
        }
        let mut out = Vec::with_capacity(16 + header.len() + 12 * n);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for buf in [&self.params, &self.adam_m, &self.adam_v] {
            for v in buf.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |field: &'static str, message: String| Error::Format {
            path: path.to_path_buf(),
            field,
            message,
        };
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("magic", "not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(bad("version", format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("header", "truncated header".into()))?;
        let header: CheckpointHeader =
            serde_json::from_slice(body).map_err(|e| bad("header", e.to_string()))?;
        let n = header.num_params;
        let data = &bytes[20 + hlen..];
        if data.len() != 12 * n {
            return Err(bad(
                "data",
                format!("expected {} bytes of tensors, found {}", 12 * n, data.len()),
            ));
        }
        let read = |k: usize| -> Vec<f32> {
            data[4 * n * k..4 * n * (k + 1)]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect()
        };
        Ok(Checkpoint {
            params: read(0),
            adam_m: read(1),
            adam_v: read(2),
            header,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
