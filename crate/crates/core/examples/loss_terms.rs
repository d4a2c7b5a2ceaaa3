//! Multi-scale, single-axis and multi-axis MIP loss terms for one training
//! sample, with the untrained network's predictions.

use spockmip::dataset::TrainingVolume;
use spockmip::losses::{combined_loss_with_mu, LossConfig, MipMode, MultiScalePrediction};
use spockmip::model::{ops::Tensor, ModelConfig, UNet};
use spockmip::phantom::{generate_phantom, PhantomConfig};
use spockmip::volume::{Axis, Grid3, PatchBox};

pub fn run() -> spockmip::Result<()> {
    let (image, label) = generate_phantom(&PhantomConfig {
        dims: [32, 32, 32],
        seed: 5,
        ..Default::default()
    })?;
    let volume = TrainingVolume::new("demo", image, label)?;
    let sample = volume.sample(PatchBox::cube([8, 8, 8], 16), &Axis::ALL)?;

    let model = UNet::new(
        ModelConfig {
            base_features: 4,
            ..Default::default()
        },
        0,
    )?;
    let input = Tensor::from_data(1, sample.image_patch.dims(), sample.image_patch.data().to_vec());
    let outputs = model.forward(input)?;
    let preds = MultiScalePrediction::new(
        outputs
            .iter()
            .map(|t| Grid3::new(t.dims, t.data.iter().map(|&v| v as f64).collect()))
            .collect::<spockmip::Result<Vec<_>>>()?,
    )?;
    println!("prediction levels: {:?}", preds.levels().iter().map(|l| l.dims()).collect::<Vec<_>>());

    let cfg = LossConfig::default();
    for mode in [MipMode::None, MipMode::Single, MipMode::Multi] {
        let b = combined_loss_with_mu(&preds, &sample.label_patch, &sample.label_mip_patches, &cfg, mode, cfg.mu, true)?;
        let grad_norm: f64 = b.level_grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        println!(
            "{mode:?}: L_mss {:.4}  L_mip {}  total {:.4}  |grad| {:.3e}",
            b.l_mss,
            b.l_mip.map_or("-".to_string(), |v| format!("{v:.4}")),
            b.total,
            grad_norm
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> spockmip::Result<()> {
    run()
}
