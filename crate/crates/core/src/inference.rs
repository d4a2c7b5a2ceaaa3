//! Whole-volume prediction by overlapping patches with mean fusion.

use serde::{Deserialize, Serialize};

use crate::dataset::enumerate_patch_boxes;
use crate::error::{Error, Result};
use crate::model::UNet;
use crate::volume::{extract_patch, BinaryMask, Grid3, PatchBox, ProbabilityVolume, ScalarVolume};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    #[default]
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub patch_size: usize,
    pub stride: [usize; 3],
    pub fusion: Fusion,
    pub threshold: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            patch_size: 64,
            stride: [32, 32, 32],
            fusion: Fusion::Mean,
            threshold: 0.5,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.patch_size == 0 {
            issues.push("inference.patch_size: must be >= 1".into());
        }
        if self.stride.iter().any(|&s| s == 0 || s > self.patch_size) {
            issues.push(format!(
                "inference.stride: every component must be in 1..={}, got {:?}",
                self.patch_size, self.stride
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            issues.push(format!("inference.threshold: must be in (0, 1), got {}", self.threshold));
        }
        issues
    }
}

/// Anything that maps an image patch to full-resolution probabilities.
pub trait PatchPredictor: Sync {
    fn predict_patch(&self, patch: &ScalarVolume) -> Result<Vec<f32>>;
}

impl PatchPredictor for UNet {
    fn predict_patch(&self, patch: &ScalarVolume) -> Result<Vec<f32>> {
        UNet::predict_patch(self, patch)
    }
}

fn predict_boxes<P: PatchPredictor>(model: &P, volume: &ScalarVolume, boxes: &[PatchBox], workers: usize) -> Result<Vec<Vec<f32>>> {
    let run = |b: &PatchBox| -> Result<Vec<f32>> {
        let out = model.predict_patch(&extract_patch(volume, *b)?)?;
        let want = b.size.iter().product::<usize>();
        if out.len() != want {
            return Err(Error::Shape(format!("predictor returned {} values for a {want}-voxel patch", out.len())));
        }
        Ok(out)
    };
    if workers <= 1 || boxes.len() <= 1 {
        return boxes.iter().map(run).collect();
    }
    let chunk = boxes.len().div_ceil(workers);
    let parts: Vec<Result<Vec<Vec<f32>>>> = std::thread::scope(|s| {
        let handles: Vec<_> = boxes
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(run).collect::<Result<Vec<_>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("predictor thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(boxes.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Predicts every patch of a clamped sliding-window grid and averages the
/// overlapping outputs voxel by voxel.
pub fn sliding_window_predict<P: PatchPredictor>(model: &P, volume: &ScalarVolume, config: &InferenceConfig) -> Result<ProbabilityVolume> {
    sliding_window_predict_with(model, volume, config, crate::dataset::num_workers())
}

pub fn sliding_window_predict_with<P: PatchPredictor>(
    model: &P,
    volume: &ScalarVolume,
    config: &InferenceConfig,
    workers: usize,
) -> Result<ProbabilityVolume> {
    let issues = config.validate();
    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    let dims = volume.dims();
    let boxes = enumerate_patch_boxes(dims, config.patch_size, config.stride)?;
    let [_, h, w] = dims;
    let mut sum = vec![0.0f64; volume.data().len()];
    let mut count = vec![0u32; volume.data().len()];
    // bounded waves keep memory flat on large volumes; merging follows box order
    let wave = workers.max(1) * 4;
    for group in boxes.chunks(wave) {
        let outputs = predict_boxes(model, volume, group, workers)?;
        for (b, out) in group.iter().zip(outputs) {
            let [pd, ph, pw] = b.size;
            let [z0, y0, x0] = b.origin;
            for z in 0..pd {
                for y in 0..ph {
                    let src = (z * ph + y) * pw;
                    let dst = ((z0 + z) * h + y0 + y) * w + x0;
                    for x in 0..pw {
                        sum[dst + x] += out[src + x] as f64;
                        count[dst + x] += 1;
                    }
                }
            }
        }
    }
    let data = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| ((s / c as f64) as f32).clamp(0.0, 1.0))
        .collect();
    ProbabilityVolume::new(Grid3::new(dims, data)?)
}

/// Voxel is foreground iff `prob >= threshold`.
pub fn binarize(prob: &ProbabilityVolume, threshold: f64) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidInput(format!("threshold must be in (0, 1), got {threshold}")));
    }
    Ok(BinaryMask::from_grid_unchecked(prob.grid().map(|p| (p as f64 >= threshold) as u8)))
}
