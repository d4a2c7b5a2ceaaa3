//! Focal Tversky base loss, multi-scale supervision (MSS) loss, and the
//! maximum-intensity-projection (MIP) losses that compare projections of each
//! predicted patch with the matching window of the *full-volume* label MIP.
//!
//! The label window may contain vessels that lie outside the patch's own slab
//! along the projection axis. That asymmetry is intentional: a prediction that
//! is perfect inside the patch still pays for the missing projected vessel,
//! which rewards continuity across patches.
//!
//! Every function here works in `f64` and returns analytic gradients with
//! respect to each prediction level when asked.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{maxpool2d_image, maxpool3d, project_max, Axis, BinaryMask, Dims, Grid3, Image2};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the MSS term; the MIP term gets `1 - mu`.
    pub mu: f64,
    pub learnable_mu: bool,
    /// Per-level weights, finest level first.
    pub level_weights: Vec<f64>,
    /// Per-axis weight of the multi-axis MIP loss.
    pub axis_weight: f64,
    pub tversky_alpha: f64,
    pub tversky_beta: f64,
    pub tversky_gamma: f64,
    pub smooth_eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            mu: 0.7,
            learnable_mu: false,
            level_weights: vec![1.0, 0.66, 0.34],
            axis_weight: 1.0 / 3.0,
            tversky_alpha: 0.7,
            tversky_beta: 0.3,
            tversky_gamma: 4.0 / 3.0,
            smooth_eps: 1e-6,
        }
    }
}

impl LossConfig {
    /// Collects every violated constraint; `levels` is the number of model outputs.
    pub fn validate(&self, levels: usize) -> Vec<String> {
        let mut issues = Vec::new();
        if !(self.mu > 0.0 && self.mu < 1.0) && self.mu != 1.0 {
            issues.push(format!("loss.mu: must be in (0, 1), got {}", self.mu));
        }
        if self.level_weights.len() != levels {
            issues.push(format!(
                "loss.level_weights: expected {levels} entries (one per output level), got {}",
                self.level_weights.len()
            ));
        }
        if self.level_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            issues.push("loss.level_weights: all weights must be > 0".into());
        }
        if !(self.axis_weight.is_finite() && self.axis_weight >= 0.0) {
            issues.push(format!("loss.axis_weight: must be >= 0, got {}", self.axis_weight));
        }
        for (name, v) in [
            ("loss.tversky_alpha", self.tversky_alpha),
            ("loss.tversky_beta", self.tversky_beta),
            ("loss.tversky_gamma", self.tversky_gamma),
            ("loss.smooth_eps", self.smooth_eps),
        ] {
            if !(v.is_finite() && v > 0.0) {
                issues.push(format!("{name}: must be > 0, got {v}"));
            }
        }
        issues
    }

    fn check_levels(&self, m: usize) -> Result<()> {
        if self.level_weights.len() != m {
            return Err(Error::Config(vec![format!(
                "loss.level_weights: expected {m} entries, got {}",
                self.level_weights.len()
            )]));
        }
        Ok(())
    }
}

/// Which projection term joins the MSS loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MipMode {
    /// Plain MSS loss (the baselines).
    #[default]
    #[serde(alias = "no_mip")]
    None,
    /// Slice-axis (`Z`) projection only.
    #[serde(alias = "single_mip", alias = "mip")]
    Single,
    /// Equal-weight sum over `X`, `Y` and `Z` projections.
    #[serde(alias = "multi_mip", alias = "mmip")]
    Multi,
}

impl MipMode {
    pub fn axes(self) -> &'static [Axis] {
        match self {
            MipMode::None => &[],
            MipMode::Single => &[Axis::Z],
            MipMode::Multi => &Axis::ALL,
        }
    }
}

impl std::str::FromStr for MipMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "no_mip" => Ok(MipMode::None),
            "single" | "single_mip" | "mip" => Ok(MipMode::Single),
            "multi" | "multi_mip" | "mmip" => Ok(MipMode::Multi),
            other => Err(Error::InvalidInput(format!(
                "unknown MIP mode `{other}` (expected none, single_mip or multi_mip)"
            ))),
        }
    }
}

/// Probability patches at full, 1/2, 1/4, ... resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiScalePrediction {
    levels: Vec<Grid3<f64>>,
}

impl MultiScalePrediction {
    pub fn new(levels: Vec<Grid3<f64>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidInput("prediction has no levels".into()));
        }
        let top = levels[0].dims();
        for (i, level) in levels.iter().enumerate() {
            let want = [top[0] >> i, top[1] >> i, top[2] >> i];
            if level.dims() != want || (0..3).any(|k| want[k] << i != top[k]) {
                return Err(Error::Shape(format!(
                    "level {i} has dims {:?}, expected {want:?} (half of the level above)",
                    level.dims()
                )));
            }
            if let Some(j) = level.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Validation(format!(
                    "level {i} value {} at index {j} is outside [0, 1]",
                    level.data()[j]
                )));
            }
        }
        Ok(MultiScalePrediction { levels })
    }

    pub fn levels(&self) -> &[Grid3<f64>] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn top_dims(&self) -> Dims {
        self.levels[0].dims()
    }
}

/// A loss value with its gradient per prediction level.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub level_grads: Vec<Vec<f64>>,
}

impl LossGrad {
    fn zeros_like(preds: &MultiScalePrediction) -> Self {
        LossGrad {
            value: 0.0,
            level_grads: preds.levels.iter().map(|l| vec![0.0; l.len()]).collect(),
        }
    }

    fn add_scaled(&mut self, other: &LossGrad, scale: f64) {
        self.value += scale * other.value;
        for (a, b) in self.level_grads.iter_mut().zip(&other.level_grads) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
    }
}

fn check_pair(pred: &[f64], target: &[u8]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "prediction has {} values, target has {}",
            pred.len(),
            target.len()
        )));
    }
    if let Some(i) = pred.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Validation(format!(
            "prediction {} at index {i} is outside [0, 1]",
            pred[i]
        )));
    }
    if let Some(i) = target.iter().position(|&t| t > 1) {
        return Err(Error::Validation(format!("target {} at index {i} is not 0 or 1", target[i])));
    }
    Ok(())
}

/// `(1 - TI)^(1/gamma)` with soft counts and its gradient in `pred`.
fn focal_tversky_core(pred: &[f64], target: &[u8], cfg: &LossConfig, grad: Option<&mut [f64]>) -> f64 {
    let (mut tp, mut fn_, mut fp) = (0.0f64, 0.0f64, 0.0f64);
    for (&p, &t) in pred.iter().zip(target) {
        if t != 0 {
            tp += p;
            fn_ += 1.0 - p;
        } else {
            fp += p;
        }
    }
    let (a, b, eps) = (cfg.tversky_alpha, cfg.tversky_beta, cfg.smooth_eps);
    let num = tp + eps;
    let den = tp + a * fn_ + b * fp + eps;
    let ti = num / den;
    let base = (1.0 - ti).max(0.0);
    let exponent = 1.0 / cfg.tversky_gamma;
    let loss = base.powf(exponent);
    if let Some(g) = grad {
        if base > 0.0 {
            let dloss_dti = -exponent * base.powf(exponent - 1.0);
            // d(TI)/dp for a foreground and a background voxel
            let d_fg = (den - num * (1.0 - a)) / (den * den);
            let d_bg = (-num * b) / (den * den);
            for (gi, &t) in g.iter_mut().zip(target) {
                *gi = dloss_dti * if t != 0 { d_fg } else { d_bg };
            }
        } else {
            g.fill(0.0);
        }
    }
    loss
}

/// Focal Tversky loss between soft predictions and a binary target.
pub fn focal_tversky(pred: &[f64], target: &[u8], cfg: &LossConfig) -> Result<f64> {
    check_pair(pred, target)?;
    Ok(focal_tversky_core(pred, target, cfg, None))
}

pub fn focal_tversky_grad(pred: &[f64], target: &[u8], cfg: &LossConfig) -> Result<(f64, Vec<f64>)> {
    check_pair(pred, target)?;
    let mut g = vec![0.0; pred.len()];
    let v = focal_tversky_core(pred, target, cfg, Some(&mut g));
    Ok((v, g))
}

fn mss_impl(preds: &MultiScalePrediction, label: &BinaryMask, cfg: &LossConfig, want_grad: bool) -> Result<LossGrad> {
    let m = preds.len();
    cfg.check_levels(m)?;
    if label.dims() != preds.top_dims() {
        return Err(Error::Shape(format!(
            "label patch {:?} does not match prediction {:?}",
            label.dims(),
            preds.top_dims()
        )));
    }
    let mut out = LossGrad::zeros_like(preds);
    let mut value = 0.0;
    for (i, level) in preds.levels.iter().enumerate() {
        let target = if i == 0 { label.clone() } else { maxpool3d(label, 1 << i)? };
        check_pair(level.data(), target.data())?;
        let weight = cfg.level_weights[i] / m as f64;
        let grad = want_grad.then_some(&mut out.level_grads[i][..]);
        let li = focal_tversky_core(level.data(), target.data(), cfg, grad);
        if want_grad {
            out.level_grads[i].iter_mut().for_each(|g| *g *= weight);
        }
        value += weight * li;
    }
    out.value = value;
    Ok(out)
}

/// `(1/m) * sum_i alpha_i * FT(pred_i, maxpool(label, 2^i))`.
pub fn mss_loss(preds: &MultiScalePrediction, label_patch: &BinaryMask, cfg: &LossConfig) -> Result<f64> {
    mss_impl(preds, label_patch, cfg, false).map(|l| l.value)
}

pub fn mss_loss_grad(preds: &MultiScalePrediction, label_patch: &BinaryMask, cfg: &LossConfig) -> Result<LossGrad> {
    mss_impl(preds, label_patch, cfg, true)
}

fn mip_axis_impl(
    preds: &MultiScalePrediction,
    label_mip: &Image2<u8>,
    axis: Axis,
    cfg: &LossConfig,
    want_grad: bool,
) -> Result<LossGrad> {
    let m = preds.len();
    cfg.check_levels(m)?;
    let (rows, cols) = axis.image_shape(preds.top_dims());
    if (label_mip.rows, label_mip.cols) != (rows, cols) {
        return Err(Error::Shape(format!(
            "{axis}-axis label MIP patch is {}x{}, prediction projects to {rows}x{cols}",
            label_mip.rows, label_mip.cols
        )));
    }
    let mut out = LossGrad::zeros_like(preds);
    let mut value = 0.0;
    for (i, level) in preds.levels.iter().enumerate() {
        let target = maxpool2d_image(label_mip, 1 << i)?;
        let mut argmax = vec![0usize; target.data.len()];
        let projected = project_max(level, axis, |pixel, voxel| argmax[pixel] = voxel);
        check_pair(&projected.data, &target.data)?;
        let weight = cfg.level_weights[i] / m as f64;
        if want_grad {
            let mut g2 = vec![0.0; projected.data.len()];
            let li = focal_tversky_core(&projected.data, &target.data, cfg, Some(&mut g2));
            let g3 = &mut out.level_grads[i];
            for (pixel, &voxel) in argmax.iter().enumerate() {
                g3[voxel] += weight * g2[pixel];
            }
            value += weight * li;
        } else {
            value += weight * focal_tversky_core(&projected.data, &target.data, cfg, None);
        }
    }
    out.value = value;
    Ok(out)
}

/// MIP loss along one axis: `(1/m) * sum_i alpha_i * FT(MIP(pred_i), maxpool(label_mip, 2^i))`.
pub fn mip_loss_axis(preds: &MultiScalePrediction, label_mip_patch: &Image2<u8>, axis: Axis, cfg: &LossConfig) -> Result<f64> {
    mip_axis_impl(preds, label_mip_patch, axis, cfg, false).map(|l| l.value)
}

pub fn mip_loss_axis_grad(
    preds: &MultiScalePrediction,
    label_mip_patch: &Image2<u8>,
    axis: Axis,
    cfg: &LossConfig,
) -> Result<LossGrad> {
    mip_axis_impl(preds, label_mip_patch, axis, cfg, true)
}

/// Slice-axis MIP loss against the `Z` label MIP window.
pub fn mip_loss_single(preds: &MultiScalePrediction, label_mip_patch_z: &Image2<u8>, cfg: &LossConfig) -> Result<f64> {
    mip_loss_axis(preds, label_mip_patch_z, Axis::Z, cfg)
}

pub fn mip_loss_single_grad(preds: &MultiScalePrediction, label_mip_patch_z: &Image2<u8>, cfg: &LossConfig) -> Result<LossGrad> {
    mip_loss_axis_grad(preds, label_mip_patch_z, Axis::Z, cfg)
}

fn multi_impl(
    preds: &MultiScalePrediction,
    label_mips: &BTreeMap<Axis, Image2<u8>>,
    cfg: &LossConfig,
    want_grad: bool,
) -> Result<LossGrad> {
    let missing: Vec<String> = Axis::ALL
        .iter()
        .filter(|a| !label_mips.contains_key(a))
        .map(|a| format!("label MIP patch for axis {a} is missing"))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(missing));
    }
    let mut out = LossGrad::zeros_like(preds);
    // beta * (L_x + L_y + L_z), each L_a already carrying (1/m) * alpha_i
    for axis in [Axis::X, Axis::Y, Axis::Z] {
        let term = mip_axis_impl(preds, &label_mips[&axis], axis, cfg, want_grad)?;
        out.add_scaled(&term, cfg.axis_weight);
    }
    Ok(out)
}

/// `(1/m) * beta * sum_i alpha_i * (lmip_x,i + lmip_y,i + lmip_z,i)`.
pub fn mip_loss_multi(preds: &MultiScalePrediction, label_mip_patches: &BTreeMap<Axis, Image2<u8>>, cfg: &LossConfig) -> Result<f64> {
    multi_impl(preds, label_mip_patches, cfg, false).map(|l| l.value)
}

pub fn mip_loss_multi_grad(
    preds: &MultiScalePrediction,
    label_mip_patches: &BTreeMap<Axis, Image2<u8>>,
    cfg: &LossConfig,
) -> Result<LossGrad> {
    multi_impl(preds, label_mip_patches, cfg, true)
}

/// The parts of one combined-loss evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub l_mss: f64,
    /// Absent in [`MipMode::None`].
    pub l_mip: Option<f64>,
    pub total: f64,
    pub mu: f64,
    /// Gradient of `total` per prediction level (empty unless requested).
    pub level_grads: Vec<Vec<f64>>,
}

fn mip_term(
    preds: &MultiScalePrediction,
    label_mips: &BTreeMap<Axis, Image2<u8>>,
    cfg: &LossConfig,
    mode: MipMode,
    want_grad: bool,
) -> Result<Option<LossGrad>> {
    match mode {
        MipMode::None => Ok(None),
        MipMode::Single => {
            let z = label_mips
                .get(&Axis::Z)
                .ok_or_else(|| Error::Config(vec!["label MIP patch for axis z is missing".into()]))?;
            mip_axis_impl(preds, z, Axis::Z, cfg, want_grad).map(Some)
        }
        MipMode::Multi => multi_impl(preds, label_mips, cfg, want_grad).map(Some),
    }
}

/// `mu * L_MSS + (1 - mu) * L_MIP` with an explicit `mu` (used when `mu` is learned).
pub fn combined_loss_with_mu(
    preds: &MultiScalePrediction,
    label_patch: &BinaryMask,
    label_mips: &BTreeMap<Axis, Image2<u8>>,
    cfg: &LossConfig,
    mode: MipMode,
    mu: f64,
    want_grad: bool,
) -> Result<LossBreakdown> {
    let mss = mss_impl(preds, label_patch, cfg, want_grad)?;
    let Some(mip) = mip_term(preds, label_mips, cfg, mode, want_grad)? else {
        return Ok(LossBreakdown {
            l_mss: mss.value,
            l_mip: None,
            total: mss.value,
            mu,
            level_grads: if want_grad { mss.level_grads } else { Vec::new() },
        });
    };
    let total = mu * mss.value + (1.0 - mu) * mip.value;
    let level_grads = if want_grad {
        mss.level_grads
            .iter()
            .zip(&mip.level_grads)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| mu * x + (1.0 - mu) * y).collect())
            .collect()
    } else {
        Vec::new()
    };
    Ok(LossBreakdown {
        l_mss: mss.value,
        l_mip: Some(mip.value),
        total,
        mu,
        level_grads,
    })
}

/// Total training loss for one patch. `MipMode::None` returns the MSS loss unchanged.
pub fn combined_loss(
    preds: &MultiScalePrediction,
    label_patch: &BinaryMask,
    label_mips: &BTreeMap<Axis, Image2<u8>>,
    cfg: &LossConfig,
    mode: MipMode,
) -> Result<f64> {
    combined_loss_with_mu(preds, label_patch, label_mips, cfg, mode, cfg.mu, false).map(|b| b.total)
}

pub fn combined_loss_grad(
    preds: &MultiScalePrediction,
    label_patch: &BinaryMask,
    label_mips: &BTreeMap<Axis, Image2<u8>>,
    cfg: &LossConfig,
    mode: MipMode,
) -> Result<LossBreakdown> {
    combined_loss_with_mu(preds, label_patch, label_mips, cfg, mode, cfg.mu, true)
}
