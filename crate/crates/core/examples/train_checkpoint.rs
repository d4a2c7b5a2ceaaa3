//! A few epochs on two small phantoms with the multi-axis MIP loss and a
//! learnable balance weight, then a checkpoint save, reload and resume.

use spockmip::dataset::{SamplerConfig, TrainingVolume};
use spockmip::losses::{LossConfig, MipMode};
use spockmip::model::ModelConfig;
use spockmip::phantom::{generate_phantom, PhantomConfig};
use spockmip::trainer::{Checkpoint, TrainConfig, TrainOptions, Trainer};

fn volumes() -> spockmip::Result<Vec<TrainingVolume>> {
    (0..2)
        .map(|i| {
            let (image, label) = generate_phantom(&PhantomConfig {
                dims: [32, 32, 32],
                seed: 20 + i,
                ..Default::default()
            })?;
            TrainingVolume::new(format!("ph{i}"), image, label)
        })
        .collect()
}

pub fn run() -> spockmip::Result<()> {
    let config = TrainConfig {
        train: TrainOptions {
            learning_rate: 1e-3,
            epochs: 3,
            batch_size: 4,
            mip_mode: MipMode::Multi,
            validation_patches: 4,
            ..Default::default()
        },
        loss: LossConfig {
            learnable_mu: true,
            ..Default::default()
        },
        sampler: SamplerConfig {
            patch_size: 16,
            stride: [8, 8, 8],
            samples_per_epoch: 16,
            ..Default::default()
        },
        model: ModelConfig {
            base_features: 4,
            ..Default::default()
        },
    };
    let mut trainer = Trainer::new(config, volumes()?, volumes()?)?;
    trainer.run_epoch()?;
    let epoch = trainer.run_epoch()?;
    println!(
        "after epoch {}: train loss {:.4}, val loss {:?}, mu {:.4}",
        epoch.epoch, epoch.mean_train_loss, epoch.val_loss, epoch.mu
    );

    let path = std::env::temp_dir().join("spockmip_train_example.ckpt");
    trainer.checkpoint().save(&path)?;
    let restored = Checkpoint::load(&path)?;
    println!("checkpoint at step {} ({} params)", restored.header.step, restored.params.len());

    let mut resumed = Trainer::resume(restored, volumes()?, volumes()?)?;
    let mut original = trainer;
    let a = original.run_epoch()?;
    let b = resumed.run_epoch()?;
    println!("final epoch: original {:.6}, resumed {:.6}", a.mean_train_loss, b.mean_train_loss);
    assert_eq!(a, b);
    Ok(())
}

#[allow(dead_code)]
fn main() -> spockmip::Result<()> {
    run()
}
