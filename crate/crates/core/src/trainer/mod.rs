//! Patch-based training: Adam with global-norm clipping, an optional learned
//! `mu`, per-epoch validation with best-checkpoint tracking, and k-fold splits.

mod checkpoint;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    enumerate_patch_boxes, load_samples, num_workers, sample_epoch, PatchSample, SampleRef, SamplerConfig, TrainingVolume,
};
use crate::error::{Error, Result};
use crate::losses::{combined_loss_with_mu, LossConfig, MipMode, MultiScalePrediction};
use crate::model::ops::Tensor;
use crate::model::{ModelConfig, UNet};
use crate::volume::{Axis, Grid3, PatchBox};

pub use checkpoint::{Checkpoint, CheckpointHeader, CHECKPOINT_VERSION};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

pub(crate) fn sigmoid64(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_clip_norm: f64,
    pub seed: u64,
    pub mip_mode: MipMode,
    /// Fixed validation patches scored after every epoch.
    pub validation_patches: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            learning_rate: 1e-4,
            epochs: 50,
            batch_size: 15,
            grad_clip_norm: 1.0,
            seed: 0,
            mip_mode: MipMode::None,
            validation_patches: 64,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub train: TrainOptions,
    pub loss: LossConfig,
    pub sampler: SamplerConfig,
    pub model: ModelConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Vec<String> {
        let t = &self.train;
        let mut issues = Vec::new();
        if !(t.learning_rate.is_finite() && t.learning_rate > 0.0) {
            issues.push(format!("train.learning_rate: must be > 0, got {}", t.learning_rate));
        }
        if t.epochs == 0 {
            issues.push("train.epochs: must be >= 1".into());
        }
        if t.batch_size == 0 {
            issues.push("train.batch_size: must be >= 1".into());
        }
        if !(t.grad_clip_norm.is_finite() && t.grad_clip_norm > 0.0) {
            issues.push(format!("train.grad_clip_norm: must be > 0, got {}", t.grad_clip_norm));
        }
        if self.sampler.samples_per_epoch < t.batch_size {
            issues.push(format!(
                "sampler.samples_per_epoch: {} is smaller than train.batch_size {}",
                self.sampler.samples_per_epoch, t.batch_size
            ));
        }
        issues.extend(self.model.validate());
        issues.extend(self.sampler.validate());
        issues.extend(self.loss.validate(self.model.output_levels()));
        if self.loss.learnable_mu && !(self.loss.mu > 0.0 && self.loss.mu < 1.0) {
            issues.push("loss.mu: a learnable mu must start strictly inside (0, 1)".into());
        }
        let div = self.model.size_divisor();
        if !self.sampler.patch_size.is_multiple_of(div) {
            issues.push(format!(
                "sampler.patch_size: {} is not divisible by {div} (2^(model.depth - 1))",
                self.sampler.patch_size
            ));
        }
        issues
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.sampler.samples_per_epoch / self.train.batch_size
    }

    /// Seed of the patch-sampling stream.
    pub fn sampling_seed(&self) -> u64 {
        self.sampler.seed ^ self.train.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }

    /// Label-MIP axes each sample must carry.
    pub fn mip_axes(&self) -> Vec<Axis> {
        let mut axes: Vec<Axis> = self.sampler.mip_axes.clone();
        axes.extend_from_slice(self.train.mip_mode.axes());
        axes.sort();
        axes.dedup();
        axes
    }
}

/// One JSON line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub l_mss: f64,
    pub l_mip: Option<f64>,
    pub total: f64,
    pub mu: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step: u64,
    pub mean_train_loss: f64,
    pub val_loss: Option<f64>,
    pub mu: f64,
}

struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    t: u64,
}

impl Adam {
    fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f64) {
        self.t += 1;
        let (c1, c2) = bias_corrections(self.t);
        for i in 0..params.len() {
            let g = grads[i] as f64;
            let m = ADAM_BETA1 * self.m[i] as f64 + (1.0 - ADAM_BETA1) * g;
            let v = ADAM_BETA2 * self.v[i] as f64 + (1.0 - ADAM_BETA2) * g * g;
            self.m[i] = m as f32;
            self.v[i] = v as f32;
            params[i] = (params[i] as f64 - lr * (m / c1) / ((v / c2).sqrt() + ADAM_EPS)) as f32;
        }
    }
}

fn bias_corrections(t: u64) -> (f64, f64) {
    (1.0 - ADAM_BETA1.powi(t as i32), 1.0 - ADAM_BETA2.powi(t as i32))
}

/// Scales `grads` (and the scalar `extra`) in place so their joint L2 norm is at
/// most `max_norm`; returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [f32], extra: &mut f64, max_norm: f64) -> f64 {
    let sq: f64 = grads.iter().map(|&g| (g as f64) * (g as f64)).sum::<f64>() + *extra * *extra;
    let norm = sq.sqrt();
    if norm > max_norm {
        // f32 rounding can leave the result a hair above the bound
        let scale = max_norm / norm * (1.0 - 1e-7);
        grads.iter_mut().for_each(|g| *g = (*g as f64 * scale) as f32);
        *extra *= scale;
    }
    norm
}

fn to_prediction(outputs: &[Tensor]) -> Result<MultiScalePrediction> {
    MultiScalePrediction::new(
        outputs
            .iter()
            .map(|t| Grid3::new(t.dims, t.data.iter().map(|&v| v as f64).collect()))
            .collect::<Result<Vec<_>>>()?,
    )
}

fn input_tensor(sample: &PatchSample) -> Tensor {
    Tensor::from_data(1, sample.image_patch.dims(), sample.image_patch.data().to_vec())
}

fn batch_ids(samples: &[PatchSample]) -> String {
    samples
        .iter()
        .map(|s| format!("{}@{:?}", s.volume_id, s.patch.origin))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Owns the model and optimiser state for one training run.
pub struct Trainer {
    config: TrainConfig,
    model: UNet,
    adam: Adam,
    mu_logit: f64,
    mu_moments: [f64; 2],
    volumes: Vec<TrainingVolume>,
    val_volumes: Vec<TrainingVolume>,
    boxes: Vec<Vec<PatchBox>>,
    val_refs: Vec<SampleRef>,
    axes: Vec<Axis>,
    epoch: usize,
    cursor: usize,
    step: u64,
    epoch_refs: Vec<SampleRef>,
    epoch_loss_sum: f64,
    best_val: Option<f64>,
    best: Option<Checkpoint>,
    steps: Vec<StepRecord>,
    epochs: Vec<EpochRecord>,
    workers: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig, volumes: Vec<TrainingVolume>, val_volumes: Vec<TrainingVolume>) -> Result<Self> {
        let issues = config.validate();
        if !issues.is_empty() {
            return Err(Error::Config(issues));
        }
        let model = UNet::new(config.model.clone(), config.train.seed)?;
        let n = model.num_params();
        let mu_logit = if config.loss.learnable_mu {
            (config.loss.mu / (1.0 - config.loss.mu)).ln()
        } else {
            0.0
        };
        let state = Checkpoint {
            header: CheckpointHeader {
                config,
                epoch: 0,
                cursor: 0,
                step: 0,
                adam_t: 0,
                mu_logit,
                mu_moments: [0.0; 2],
                best_val_loss: None,
                epoch_loss_sum: 0.0,
                num_params: n,
            },
            params: model.params().to_vec(),
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
        };
        Self::resume(state, volumes, val_volumes)
    }

    /// Rebuilds a trainer from a checkpoint; the next step matches the one the
    /// original run would have taken.
    pub fn resume(checkpoint: Checkpoint, volumes: Vec<TrainingVolume>, val_volumes: Vec<TrainingVolume>) -> Result<Self> {
        let Checkpoint {
            header,
            params,
            adam_m,
            adam_v,
        } = checkpoint;
        let config = header.config.clone();
        let issues = config.validate();
        if !issues.is_empty() {
            return Err(Error::Config(issues));
        }
        if volumes.is_empty() {
            return Err(Error::InvalidInput("training needs at least one volume".into()));
        }
        let model = UNet::from_params(config.model.clone(), params)?;
        let patch = config.sampler.patch_size;
        let boxes = volumes
            .iter()
            .map(|v| enumerate_patch_boxes(v.dims(), patch, config.sampler.stride))
            .collect::<Result<Vec<_>>>()?;
        let val_refs = if val_volumes.is_empty() || config.train.validation_patches == 0 {
            Vec::new()
        } else {
            let vb = val_volumes
                .iter()
                .map(|v| enumerate_patch_boxes(v.dims(), patch, config.sampler.stride))
                .collect::<Result<Vec<_>>>()?;
            let total: usize = vb.iter().map(Vec::len).sum();
            sample_epoch(&vb, config.train.validation_patches.min(total), config.sampling_seed() ^ 0x5641_4C49)?
        };
        let axes = config.mip_axes();
        let mut trainer = Trainer {
            model,
            adam: Adam {
                m: adam_m,
                v: adam_v,
                t: header.adam_t,
            },
            mu_logit: header.mu_logit,
            mu_moments: header.mu_moments,
            volumes,
            val_volumes,
            boxes,
            val_refs,
            axes,
            epoch: header.epoch,
            cursor: header.cursor,
            step: header.step,
            epoch_refs: Vec::new(),
            epoch_loss_sum: header.epoch_loss_sum,
            best_val: header.best_val_loss,
            best: None,
            steps: Vec::new(),
            epochs: Vec::new(),
            workers: num_workers(),
            config,
        };
        trainer.epoch_refs = trainer.draw_epoch(trainer.epoch)?;
        Ok(trainer)
    }

    fn draw_epoch(&self, epoch: usize) -> Result<Vec<SampleRef>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.sampling_seed());
        rng.set_stream(epoch as u64);
        sample_epoch(&self.boxes, self.config.sampler.samples_per_epoch, rng.next_u64())
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &UNet {
        &self.model
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn set_workers(&mut self, workers: usize) {
        self.workers = workers.max(1);
    }

    pub fn mu(&self) -> f64 {
        if self.config.loss.learnable_mu {
            sigmoid64(self.mu_logit)
        } else {
            self.config.loss.mu
        }
    }

    pub fn step_log(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn epoch_log(&self) -> &[EpochRecord] {
        &self.epochs
    }

    pub fn best_checkpoint(&self) -> Option<&Checkpoint> {
        self.best.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.config.train.epochs
    }

    /// Loss value and gradients (w.r.t. parameters and `mu`) for one batch.
    fn batch_gradients(&self, samples: &[PatchSample]) -> Result<(Vec<f32>, f64, StepRecord)> {
        let mode = self.config.train.mip_mode;
        let mu = self.mu();
        let b = samples.len() as f64;
        let mut grads = vec![0.0f32; self.model.num_params()];
        let (mut l_mss, mut l_mip, mut total, mut dmu) = (0.0, 0.0, 0.0, 0.0);
        for sample in samples {
            let (outputs, cache) = self.model.forward_train(input_tensor(sample))?;
            let preds = to_prediction(&outputs)?;
            let parts = combined_loss_with_mu(
                &preds,
                &sample.label_patch,
                &sample.label_mip_patches,
                &self.config.loss,
                mode,
                mu,
                true,
            )?;
            if !parts.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: self.step,
                    batch: batch_ids(samples),
                });
            }
            let d_outputs: Vec<Tensor> = outputs
                .iter()
                .zip(&parts.level_grads)
                .map(|(o, g)| Tensor::from_data(1, o.dims, g.iter().map(|&v| (v / b) as f32).collect()))
                .collect();
            self.model.backward(&cache, &d_outputs, &mut grads)?;
            l_mss += parts.l_mss / b;
            total += parts.total / b;
            if let Some(m) = parts.l_mip {
                l_mip += m / b;
                dmu += (parts.l_mss - m) / b;
            }
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss {
                step: self.step,
                batch: batch_ids(samples),
            });
        }
        let dz = if self.config.loss.learnable_mu && mode != MipMode::None {
            dmu * mu * (1.0 - mu)
        } else {
            0.0
        };
        let record = StepRecord {
            step: self.step + 1,
            l_mss,
            l_mip: (mode != MipMode::None).then_some(l_mip),
            total,
            mu,
            grad_norm: 0.0,
        };
        Ok((grads, dz, record))
    }

    /// Runs one optimiser step on the next batch of the epoch.
    pub fn step(&mut self) -> Result<StepRecord> {
        if self.is_finished() {
            return Err(Error::InvalidInput("training already ran every epoch".into()));
        }
        let bs = self.config.train.batch_size;
        let refs = &self.epoch_refs[self.cursor * bs..(self.cursor + 1) * bs];
        let samples = load_samples(&self.volumes, refs, &self.axes, self.workers)?;
        let (mut grads, mut dz, mut record) = self.batch_gradients(&samples)?;
        record.grad_norm = clip_global_norm(&mut grads, &mut dz, self.config.train.grad_clip_norm);

        let lr = self.config.train.learning_rate;
        self.adam.step(self.model.params_mut(), &grads, lr);
        if self.config.loss.learnable_mu && self.config.train.mip_mode != MipMode::None {
            let (c1, c2) = bias_corrections(self.adam.t);
            let [m, v] = &mut self.mu_moments;
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * dz;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * dz * dz;
            self.mu_logit -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }

        self.step += 1;
        self.cursor += 1;
        self.epoch_loss_sum += record.total;
        self.steps.push(record.clone());
        if self.cursor == self.config.steps_per_epoch() {
            self.finish_epoch()?;
        }
        Ok(record)
    }

    fn finish_epoch(&mut self) -> Result<()> {
        let val_loss = self.validation_loss()?;
        let record = EpochRecord {
            epoch: self.epoch + 1,
            step: self.step,
            mean_train_loss: self.epoch_loss_sum / self.config.steps_per_epoch() as f64,
            val_loss,
            mu: self.mu(),
        };
        log::info!(
            "epoch {} step {} train {:.5} val {}",
            record.epoch,
            record.step,
            record.mean_train_loss,
            val_loss.map_or("-".to_string(), |v| format!("{v:.5}"))
        );
        self.epochs.push(record);
        self.epoch += 1;
        self.cursor = 0;
        self.epoch_loss_sum = 0.0;
        let improved = match (val_loss, self.best_val) {
            (Some(v), Some(b)) => v < b,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if improved {
            self.best_val = val_loss;
            self.best = Some(self.checkpoint());
        }
        if !self.is_finished() {
            self.epoch_refs = self.draw_epoch(self.epoch)?;
        }
        Ok(())
    }

    /// Runs the remaining steps of the current epoch.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let epoch = self.epoch;
        while self.epoch == epoch {
            self.step()?;
        }
        Ok(self.epochs.last().expect("epoch recorded").clone())
    }

    /// Mean combined loss over the fixed validation patches.
    pub fn validation_loss(&self) -> Result<Option<f64>> {
        if self.val_refs.is_empty() {
            return Ok(None);
        }
        let samples = load_samples(&self.val_volumes, &self.val_refs, &self.axes, self.workers)?;
        let mut sum = 0.0;
        for s in &samples {
            let outputs = self.model.forward(input_tensor(s))?;
            let preds = to_prediction(&outputs)?;
            let parts = combined_loss_with_mu(
                &preds,
                &s.label_patch,
                &s.label_mip_patches,
                &self.config.loss,
                self.config.train.mip_mode,
                self.mu(),
                false,
            )?;
            sum += parts.total;
        }
        Ok(Some(sum / samples.len() as f64))
    }

    /// Snapshot of the complete training state.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            header: CheckpointHeader {
                config: self.config.clone(),
                epoch: self.epoch,
                cursor: self.cursor,
                step: self.step,
                adam_t: self.adam.t,
                mu_logit: self.mu_logit,
                mu_moments: self.mu_moments,
                best_val_loss: self.best_val,
                epoch_loss_sum: self.epoch_loss_sum,
                num_params: self.model.num_params(),
            },
            params: self.model.params().to_vec(),
            adam_m: self.adam.m.clone(),
            adam_v: self.adam.v.clone(),
        }
    }
}

/// Everything a finished run leaves behind.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub last: Checkpoint,
    pub best: Option<Checkpoint>,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for r in rows {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

/// Trains to completion. With `run_dir`, writes `train_log.jsonl`,
/// `epochs.jsonl`, `last.ckpt` and `best.ckpt` there.
pub fn train(
    train_volumes: Vec<TrainingVolume>,
    val_volumes: Vec<TrainingVolume>,
    config: TrainConfig,
    run_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config, train_volumes, val_volumes)?;
    while !trainer.is_finished() {
        trainer.run_epoch()?;
    }
    let outcome = TrainOutcome {
        last: trainer.checkpoint(),
        best: trainer.best_checkpoint().cloned(),
        steps: trainer.step_log().to_vec(),
        epochs: trainer.epoch_log().to_vec(),
    };
    if let Some(dir) = run_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_jsonl(&dir.join("train_log.jsonl"), &outcome.steps)?;
        write_jsonl(&dir.join("epochs.jsonl"), &outcome.epochs)?;
        outcome.last.save(dir.join("last.ckpt"))?;
        outcome.best.as_ref().unwrap_or(&outcome.last).save(dir.join("best.ckpt"))?;
    }
    Ok(outcome)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub val: Vec<String>,
}

/// Shuffles `ids` and cuts them into `k` contiguous validation folds whose sizes
/// differ by at most one (the first `len % k` folds get the extra id).
pub fn kfold_split(ids: &[String], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 || k > ids.len() {
        return Err(Error::InvalidInput(format!(
            "k-fold needs 2 <= k <= {} ids, got k = {k}",
            ids.len()
        )));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (ids.len() / k, ids.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let val = shuffled[start..start + size].to_vec();
        let train = shuffled[..start]
            .iter()
            .chain(&shuffled[start + size..])
            .cloned()
            .collect();
        folds.push(Fold { train, val });
        start += size;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_phantom, PhantomConfig};

    fn tiny_config(mode: MipMode, seed: u64) -> TrainConfig {
        TrainConfig {
            train: TrainOptions {
                learning_rate: 3e-3,
                epochs: 2,
                batch_size: 2,
                seed,
                mip_mode: mode,
                validation_patches: 4,
                ..Default::default()
            },
            loss: LossConfig {
                level_weights: vec![1.0, 0.66],
                ..Default::default()
            },
            sampler: SamplerConfig {
                patch_size: 8,
                stride: [4, 4, 4],
                samples_per_epoch: 6,
                seed: 1,
                mip_axes: Vec::new(),
            },
            model: ModelConfig {
                base_features: 2,
                depth: 2,
                mss_levels: 2,
                ..Default::default()
            },
        }
    }

    fn volume(seed: u64) -> TrainingVolume {
        let (img, mask) = generate_phantom(&PhantomConfig {
            dims: [16, 16, 16],
            n_vessels: 3,
            seed,
            ..Default::default()
        })
        .unwrap();
        TrainingVolume::new(format!("p{seed}"), img, mask).unwrap()
    }

    #[test]
    fn kfold_partition_arithmetic() {
        let ids: Vec<String> = (0..14).map(|i| format!("v{i}")).collect();
        let folds = kfold_split(&ids, 5, 3).unwrap();
        let sizes: Vec<usize> = folds.iter().map(|f| f.val.len()).collect();
        assert_eq!(sizes, vec![3, 3, 3, 3, 2]);
        let mut all: Vec<String> = folds.iter().flat_map(|f| f.val.clone()).collect();
        all.sort();
        let mut want = ids.clone();
        want.sort();
        assert_eq!(all, want);
        for f in &folds {
            assert!(f.val.iter().all(|v| !f.train.contains(v)));
            assert_eq!(f.train.len() + f.val.len(), 14);
        }
        assert_eq!(kfold_split(&ids, 5, 3).unwrap(), folds);
        let loo = kfold_split(&ids[..4], 4, 0).unwrap();
        assert!(loo.iter().all(|f| f.val.len() == 1));
        assert!(kfold_split(&ids[..3], 4, 0).is_err());
    }

    #[test]
    fn clipping_bounds_the_global_norm() {
        let mut g = vec![3.0f32, 4.0];
        let mut extra = 12.0;
        let before = clip_global_norm(&mut g, &mut extra, 1.0);
        assert!((before - 13.0).abs() < 1e-12);
        let after = (g.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() + extra * extra).sqrt();
        assert!(after <= 1.0 + 1e-6);
        let mut small = vec![0.1f32];
        let mut e = 0.0;
        clip_global_norm(&mut small, &mut e, 1.0);
        assert_eq!(small, vec![0.1f32]);
    }

    #[test]
    fn config_validation_lists_every_issue() {
        let mut c = tiny_config(MipMode::None, 0);
        c.train.batch_size = 0;
        c.train.learning_rate = -1.0;
        c.sampler.patch_size = 7;
        let issues = c.validate();
        assert!(issues.len() >= 3, "{issues:?}");
    }

    #[test]
    fn runs_are_deterministic_and_resumable() {
        let cfg = tiny_config(MipMode::Multi, 4);
        let mut a = Trainer::new(cfg.clone(), vec![volume(1)], vec![]).unwrap();
        let mut b = Trainer::new(cfg.clone(), vec![volume(1)], vec![]).unwrap();
        a.set_workers(1);
        b.set_workers(3);
        for _ in 0..4 {
            let (ra, rb) = (a.step().unwrap(), b.step().unwrap());
            assert_eq!(ra.total.to_bits(), rb.total.to_bits());
        }
        assert_eq!(a.model().params(), b.model().params());

        let ckpt = a.checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mid.ckpt");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, ckpt);
        let mut c = Trainer::resume(loaded, vec![volume(1)], vec![]).unwrap();
        let (ra, rc) = (a.step().unwrap(), c.step().unwrap());
        assert_eq!(ra.total.to_bits(), rc.total.to_bits());
        assert_eq!(a.model().params(), c.model().params());
    }

    #[test]
    fn every_step_moves_parameters_and_mu_stays_bounded() {
        let mut cfg = tiny_config(MipMode::Single, 2);
        cfg.loss.learnable_mu = true;
        cfg.train.learning_rate = 0.5;
        let mut t = Trainer::new(cfg, vec![volume(2)], vec![volume(3)]).unwrap();
        let mut mus = Vec::new();
        while !t.is_finished() {
            let before = t.model().params().to_vec();
            let rec = t.step().unwrap();
            assert_ne!(before, t.model().params());
            assert!(rec.grad_norm.is_finite());
            assert!(rec.mu > 0.0 && rec.mu < 1.0);
            mus.push(t.mu());
        }
        assert!(mus.iter().any(|&m| m != 0.7));
        assert_eq!(t.epoch_log().len(), 2);
        assert!(t.epoch_log()[0].val_loss.is_some());
        assert!(t.best_checkpoint().is_some());
    }

    #[test]
    fn corrupt_checkpoints_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        match Checkpoint::load(&path) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "magic"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
