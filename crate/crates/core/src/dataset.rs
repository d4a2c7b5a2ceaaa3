//! Patch enumeration, epoch sampling, and assembly of training samples with
//! their full-volume label-MIP windows.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{
    extract_patch, load_mask, load_volume, mip, mip_patch_region, Axis, BinaryMask, Dims, Image2, PatchBox, ScalarVolume,
};

/// Environment variable capping concurrent sample-loading threads.
pub const NUM_WORKERS_ENV: &str = "SPOCKMIP_NUM_WORKERS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub patch_size: usize,
    /// Per-axis stride `(sd, sh, sw)`.
    pub stride: [usize; 3],
    pub samples_per_epoch: usize,
    pub seed: u64,
    /// Label-MIP windows carried by each sample. The trainer adds any axis its
    /// loss mode needs.
    pub mip_axes: Vec<Axis>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            patch_size: 64,
            stride: [16, 32, 32],
            samples_per_epoch: 8000,
            seed: 0,
            mip_axes: Vec::new(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.patch_size == 0 {
            issues.push("sampler.patch_size: must be >= 1".to_string());
        }
        if self.stride.contains(&0) {
            issues.push(format!("sampler.stride: every component must be >= 1, got {:?}", self.stride));
        }
        if self.samples_per_epoch == 0 {
            issues.push("sampler.samples_per_epoch: must be >= 1".to_string());
        }
        issues
    }
}

fn axis_origins(dim: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = dim - patch;
    let mut origins: Vec<usize> = (0..=last).step_by(stride).collect();
    if origins.last() != Some(&last) {
        origins.push(last);
    }
    origins
}

/// Cubic patch boxes at stride multiples plus a final origin clamped to
/// `dim - patch_size` per axis, ordered z, then y, then x.
pub fn enumerate_patch_boxes(dims: Dims, patch_size: usize, stride: [usize; 3]) -> Result<Vec<PatchBox>> {
    if patch_size == 0 || stride.contains(&0) {
        return Err(Error::InvalidInput(format!(
            "patch size {patch_size} and stride {stride:?} must be positive"
        )));
    }
    if dims.iter().any(|&d| d < patch_size) {
        return Err(Error::InvalidInput(format!(
            "patch size {patch_size} exceeds volume dims {dims:?}"
        )));
    }
    let per_axis: Vec<Vec<usize>> = (0..3).map(|k| axis_origins(dims[k], patch_size, stride[k])).collect();
    let mut boxes = Vec::with_capacity(per_axis.iter().map(Vec::len).product());
    for &z in &per_axis[0] {
        for &y in &per_axis[1] {
            for &x in &per_axis[2] {
                boxes.push(PatchBox::cube([z, y, x], patch_size));
            }
        }
    }
    Ok(boxes)
}

/// One sampled patch: the index of its volume and the box within it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRef {
    pub volume: usize,
    pub patch: PatchBox,
}

/// Draws `n` boxes uniformly over the union of all volumes' boxes: without
/// replacement when `n` fits, with replacement otherwise.
pub fn sample_epoch(boxes_by_volume: &[Vec<PatchBox>], n: usize, seed: u64) -> Result<Vec<SampleRef>> {
    let total: usize = boxes_by_volume.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::InvalidInput("no patch boxes to sample from".into()));
    }
    let mut starts = Vec::with_capacity(boxes_by_volume.len());
    let mut acc = 0;
    for b in boxes_by_volume {
        starts.push(acc);
        acc += b.len();
    }
    let resolve = |flat: usize| {
        let volume = starts.partition_point(|&s| s <= flat) - 1;
        // skip volumes with no boxes that share a start offset
        let volume = (volume..boxes_by_volume.len())
            .find(|&v| flat - starts[v] < boxes_by_volume[v].len())
            .expect("flat index within total");
        SampleRef {
            volume,
            patch: boxes_by_volume[volume][flat - starts[volume]],
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flat: Vec<usize> = if n <= total {
        rand::seq::index::sample(&mut rng, total, n).into_vec()
    } else {
        (0..n).map(|_| rng.gen_range(0..total)).collect()
    };
    Ok(flat.into_iter().map(resolve).collect())
}

/// A volume held in memory for training, with its label MIPs computed once.
#[derive(Clone, Debug)]
pub struct TrainingVolume {
    pub id: String,
    pub image: ScalarVolume,
    pub label: BinaryMask,
    pub label_mips: BTreeMap<Axis, Image2<u8>>,
}

impl TrainingVolume {
    pub fn new(id: impl Into<String>, image: ScalarVolume, label: BinaryMask) -> Result<Self> {
        let id = id.into();
        if image.dims() != label.dims() {
            return Err(Error::Shape(format!(
                "volume `{id}`: image {:?} and label {:?} differ",
                image.dims(),
                label.dims()
            )));
        }
        let mut label_mips = BTreeMap::new();
        for axis in Axis::ALL {
            label_mips.insert(axis, mip(&label, axis)?.image);
        }
        Ok(TrainingVolume {
            id,
            image,
            label,
            label_mips,
        })
    }

    pub fn dims(&self) -> Dims {
        self.image.dims()
    }

    pub fn sample(&self, patch: PatchBox, axes: &[Axis]) -> Result<PatchSample> {
        make_sample(&self.id, &self.image, &self.label, &self.label_mips, patch, axes)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchSample {
    pub image_patch: ScalarVolume,
    pub label_patch: BinaryMask,
    /// Crop of the full-volume label MIP at `mip_patch_region(patch, axis)`.
    pub label_mip_patches: BTreeMap<Axis, Image2<u8>>,
    pub patch: PatchBox,
    pub volume_id: String,
}

pub fn make_sample(
    volume_id: &str,
    image: &ScalarVolume,
    label: &BinaryMask,
    label_mips: &BTreeMap<Axis, Image2<u8>>,
    patch: PatchBox,
    axes: &[Axis],
) -> Result<PatchSample> {
    let image_patch = extract_patch(image, patch)?;
    let label_patch = extract_patch(label, patch)?;
    let mut label_mip_patches = BTreeMap::new();
    for &axis in axes {
        let full = label_mips
            .get(&axis)
            .ok_or_else(|| Error::Shape(format!("volume `{volume_id}` has no cached {axis}-axis label MIP")))?;
        let expected = axis.image_shape(label.dims());
        if (full.rows, full.cols) != expected {
            return Err(Error::Shape(format!(
                "volume `{volume_id}`: cached {axis}-axis MIP is {}x{}, label projects to {}x{}",
                full.rows, full.cols, expected.0, expected.1
            )));
        }
        label_mip_patches.insert(axis, full.crop(mip_patch_region(patch, axis))?);
    }
    Ok(PatchSample {
        image_patch,
        label_patch,
        label_mip_patches,
        patch,
        volume_id: volume_id.to_string(),
    })
}

/// Loader concurrency from [`NUM_WORKERS_ENV`], else the available cores.
pub fn num_workers() -> usize {
    std::env::var(NUM_WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Assembles the samples for `refs`, returned in the order of `refs` whatever
/// the worker count.
pub fn load_samples(volumes: &[TrainingVolume], refs: &[SampleRef], axes: &[Axis], workers: usize) -> Result<Vec<PatchSample>> {
    let build = |r: &SampleRef| -> Result<PatchSample> {
        let v = volumes
            .get(r.volume)
            .ok_or_else(|| Error::InvalidInput(format!("sample refers to missing volume {}", r.volume)))?;
        v.sample(r.patch, axes)
    };
    let workers = workers.clamp(1, refs.len().max(1));
    if workers == 1 {
        return refs.iter().map(build).collect();
    }
    let chunk = refs.len().div_ceil(workers);
    let results: Vec<Result<Vec<PatchSample>>> = std::thread::scope(|s| {
        let handles: Vec<_> = refs
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(build).collect::<Result<Vec<_>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("loader thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(refs.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub volume_id: String,
    pub image_path: PathBuf,
    pub label_path: PathBuf,
    /// Clean reference for evaluation when `label_path` holds training labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_path: Option<PathBuf>,
}

/// Reads a JSON manifest; relative paths resolve against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries: Vec<ManifestEntry> = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new(""));
    for e in &mut entries {
        if e.image_path.is_relative() {
            e.image_path = base.join(&e.image_path);
        }
        if e.label_path.is_relative() {
            e.label_path = base.join(&e.label_path);
        }
        if let Some(gt) = e.gt_path.as_mut().filter(|g| g.is_relative()) {
            *gt = base.join(&*gt);
        }
    }
    Ok(entries)
}

pub fn save_manifest(entries: &[ManifestEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(entries)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_training_volume(entry: &ManifestEntry) -> Result<TrainingVolume> {
    let image = load_volume(&entry.image_path)?;
    let label = load_mask(&entry.label_path)?;
    TrainingVolume::new(entry.volume_id.clone(), image, label)
}
