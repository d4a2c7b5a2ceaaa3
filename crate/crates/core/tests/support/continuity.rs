//! Scaled-down continuity experiment: train on phantoms with corrupted labels
//! under each MIP mode and score the test phantoms against clean labels.

use std::time::Instant;

use spockmip::config::RunConfig;
use spockmip::dataset::TrainingVolume;
use spockmip::inference::{binarize, sliding_window_predict_with};
use spockmip::losses::MipMode;
use spockmip::metrics::{continuity_report, dice, median};
use spockmip::phantom::{corrupt_labels, generate_phantom, CorruptionConfig};
use spockmip::trainer::train;
use spockmip::volume::{BinaryMask, ScalarVolume};
use spockmip::Result;

#[derive(Clone, Debug)]
pub struct Experiment {
    pub base: RunConfig,
    pub n_train: usize,
    pub n_test: usize,
    pub drop_fraction: f64,
    pub seeds: Vec<u64>,
    pub modes: Vec<MipMode>,
}

impl Default for Experiment {
    fn default() -> Self {
        let mut base = RunConfig::default();
        base.phantom.dims = [64, 64, 64];
        // empty patches need a usable false-positive gradient against the MIP term
        base.loss.smooth_eps = 1.0;
        // slab depth 24 of 64 keeps the patch-to-volume depth ratio near 0.4
        base.sampler.patch_size = 24;
        base.sampler.stride = [12, 12, 12];
        base.sampler.samples_per_epoch = 500;
        base.model.base_features = 4;
        base.model.output_prior = 0.02;
        base.train.epochs = 15;
        base.train.batch_size = 4;
        base.train.learning_rate = 1e-3;
        base.train.validation_patches = 0;
        base.inference.patch_size = 24;
        base.inference.stride = [12, 12, 12];
        Experiment {
            base,
            n_train: 6,
            n_test: 2,
            drop_fraction: 0.05,
            seeds: vec![0, 1, 2],
            modes: vec![MipMode::None, MipMode::Single, MipMode::Multi],
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub mode: MipMode,
    pub seed: u64,
    /// Mean over test phantoms.
    pub dice: f64,
    pub gap_excess: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct ModeSummary {
    pub mode: MipMode,
    pub median_dice: f64,
    pub median_gap_excess: f64,
}

pub struct Data {
    pub train: Vec<TrainingVolume>,
    pub test: Vec<(ScalarVolume, BinaryMask)>,
}

impl Experiment {
    pub fn data(&self) -> Result<Data> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for i in 0..self.n_train + self.n_test {
            let cfg = spockmip::phantom::PhantomConfig {
                seed: 1000 + i as u64,
                ..self.base.phantom.clone()
            };
            let (image, clean) = generate_phantom(&cfg)?;
            if i < self.n_train {
                let corruption = CorruptionConfig {
                    drop_fraction: self.drop_fraction,
                    seed: cfg.seed,
                    ..Default::default()
                };
                let label = corrupt_labels(&clean, &corruption)?;
                train.push(TrainingVolume::new(format!("train_{i}"), image, label)?);
            } else {
                test.push((image, clean));
            }
        }
        Ok(Data { train, test })
    }

    pub fn run_one(&self, data: &Data, mode: MipMode, seed: u64) -> Result<RunResult> {
        let start = Instant::now();
        let mut cfg = self.base.clone();
        cfg.train.mip_mode = mode;
        cfg.train.seed = seed;
        cfg.sampler.seed = seed;
        let outcome = train(data.train.clone(), Vec::new(), cfg.train_config(), None)?;
        let model = spockmip::model::UNet::from_params(cfg.model.clone(), outcome.last.params)?;
        let (mut d, mut g) = (0.0, 0.0);
        for (image, gt) in &data.test {
            let prob = sliding_window_predict_with(&model, image, &cfg.inference, 1)?;
            let mask = binarize(&prob, cfg.inference.threshold)?;
            d += dice(&mask, gt)?;
            g += continuity_report(&mask, gt)?.skeleton_gap_excess as f64;
        }
        let n = data.test.len() as f64;
        Ok(RunResult {
            mode,
            seed,
            dice: d / n,
            gap_excess: g / n,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn summarize(&self, results: &[RunResult]) -> Vec<ModeSummary> {
        self.modes
            .iter()
            .map(|&mode| {
                let of = |f: fn(&RunResult) -> f64| -> Vec<f64> { results.iter().filter(|r| r.mode == mode).map(f).collect() };
                ModeSummary {
                    mode,
                    median_dice: median(&of(|r| r.dice)).unwrap_or(f64::NAN),
                    median_gap_excess: median(&of(|r| r.gap_excess)).unwrap_or(f64::NAN),
                }
            })
            .collect()
    }
}
