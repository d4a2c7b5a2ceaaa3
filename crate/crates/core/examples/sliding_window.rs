//! Sliding-window inference with overlap averaging. A thresholding predictor
//! stands in for a trained network so the fused output is easy to check.

use spockmip::inference::{binarize, sliding_window_predict, InferenceConfig, PatchPredictor};
use spockmip::metrics::dice;
use spockmip::phantom::{generate_phantom, PhantomConfig};
use spockmip::volume::ScalarVolume;

struct Threshold(f32);

impl PatchPredictor for Threshold {
    fn predict_patch(&self, patch: &ScalarVolume) -> spockmip::Result<Vec<f32>> {
        Ok(patch.data().iter().map(|&v| if v > self.0 { 1.0 } else { 0.0 }).collect())
    }
}

pub fn run() -> spockmip::Result<()> {
    let (image, label) = generate_phantom(&PhantomConfig {
        dims: [40, 36, 44],
        noise_sigma: 0.25,
        seed: 4,
        ..Default::default()
    })?;
    let config = InferenceConfig {
        patch_size: 16,
        stride: [8, 12, 16],
        ..Default::default()
    };
    let prob = sliding_window_predict(&Threshold(0.5), &image, &config)?;
    let mask = binarize(&prob, config.threshold)?;
    println!("volume {:?}, patch {}, stride {:?}", image.dims(), config.patch_size, config.stride);
    println!("foreground {} of {} voxels, dice vs label {:.4}", mask.count(), label.count(), dice(&mask, &label)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> spockmip::Result<()> {
    run()
}
