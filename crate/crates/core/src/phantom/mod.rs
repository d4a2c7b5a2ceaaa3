//! Synthetic vascular volumes: smooth random tubes, noisy intensities, and
//! label corruption that deletes small foreground clusters.

mod skeleton;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Dims, Grid3, ScalarVolume};

pub use skeleton::{centerline_of, skeletonize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub dims: Dims,
    pub n_vessels: usize,
    /// Tube radius range in voxels; each vessel interpolates linearly between two draws.
    pub radius_range: [f64; 2],
    /// Control-point displacement as a fraction of the volume extent.
    pub curvature: f64,
    pub intensity_vessel: f64,
    pub noise_sigma: f64,
    pub background_level: f64,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            dims: [64, 64, 64],
            n_vessels: 8,
            radius_range: [0.8, 2.5],
            curvature: 0.35,
            intensity_vessel: 1.0,
            noise_sigma: 0.05,
            background_level: 0.1,
            seed: 0,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.dims.iter().any(|&d| d < 16) {
            issues.push(format!("phantom.dims: every extent must be >= 16, got {:?}", self.dims));
        }
        let [r0, r1] = self.radius_range;
        if !(r0.is_finite() && r1.is_finite() && r0 > 0.0 && r0 <= r1) {
            issues.push(format!("phantom.radius_range: need 0 < r_min <= r_max, got [{r0}, {r1}]"));
        }
        if !(self.curvature.is_finite() && self.curvature >= 0.0) {
            issues.push(format!("phantom.curvature: must be >= 0, got {}", self.curvature));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            issues.push(format!("phantom.noise_sigma: must be >= 0, got {}", self.noise_sigma));
        }
        if !(self.intensity_vessel.is_finite() && self.intensity_vessel > 0.0) {
            issues.push(format!("phantom.intensity_vessel: must be > 0, got {}", self.intensity_vessel));
        }
        if !self.background_level.is_finite() {
            issues.push("phantom.background_level: must be finite".into());
        }
        issues
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionConfig {
    pub drop_fraction: f64,
    pub cluster_size_range: [usize; 2],
    pub seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            drop_fraction: 0.05,
            cluster_size_range: [1, 5],
            seed: 0,
        }
    }
}

impl CorruptionConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if !(0.0..=1.0).contains(&self.drop_fraction) {
            issues.push(format!("corruption.drop_fraction: must be in [0, 1], got {}", self.drop_fraction));
        }
        let [s0, s1] = self.cluster_size_range;
        if s0 < 1 || s0 > s1 {
            issues.push(format!("corruption.cluster_size_range: need 1 <= s_min <= s_max, got [{s0}, {s1}]"));
        }
        issues
    }
}

type P3 = [f64; 3];

fn bezier(p: &[P3; 4], t: f64) -> P3 {
    let u = 1.0 - t;
    let c = [u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t];
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        *o = (0..4).map(|j| c[j] * p[j][k]).sum();
    }
    out
}

fn random_centerline(dims: Dims, curvature: f64, rng: &mut ChaCha8Rng) -> [P3; 4] {
    let axis = rng.gen_range(0..3);
    let ext: P3 = dims.map(|d| d as f64 - 1.0);
    let mut p0 = [0.0; 3];
    let mut p3 = [0.0; 3];
    for k in 0..3 {
        if k == axis {
            p0[k] = 0.0;
            p3[k] = ext[k];
        } else {
            p0[k] = rng.gen_range(0.15..0.85) * ext[k];
            p3[k] = rng.gen_range(0.15..0.85) * ext[k];
        }
    }
    if rng.gen_bool(0.5) {
        std::mem::swap(&mut p0, &mut p3);
    }
    let mut ctrl = |frac: f64| {
        let mut c = [0.0; 3];
        for k in 0..3 {
            let base = p0[k] + frac * (p3[k] - p0[k]);
            let jitter = if k == axis { 0.0 } else { rng.gen_range(-1.0..1.0) * curvature * ext[k] };
            c[k] = (base + jitter).clamp(0.0, ext[k]);
        }
        c
    };
    let p1 = ctrl(1.0 / 3.0);
    let p2 = ctrl(2.0 / 3.0);
    [p0, p1, p2, p3]
}

fn rasterize_tube(mask: &mut Grid3<u8>, curve: &[P3; 4], radii: [f64; 2]) {
    let [d, h, w] = mask.dims();
    let mut length = 0.0;
    let mut prev = curve[0];
    for i in 1..=64 {
        let p = bezier(curve, i as f64 / 64.0);
        length += (0..3).map(|k| (p[k] - prev[k]).powi(2)).sum::<f64>().sqrt();
        prev = p;
    }
    let steps = ((length / 0.25).ceil() as usize).max(2);
    let lim = [d, h, w];
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let c = bezier(curve, t);
        let r = radii[0] + t * (radii[1] - radii[0]);
        let lo: Vec<usize> = (0..3).map(|k| (c[k] - r).floor().max(0.0) as usize).collect();
        let hi: Vec<usize> = (0..3).map(|k| ((c[k] + r).ceil().max(0.0) as usize).min(lim[k] - 1)).collect();
        for z in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for x in lo[2]..=hi[2] {
                    let dist2 = (z as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2) + (x as f64 - c[2]).powi(2);
                    if dist2 <= r * r {
                        mask.set(z, y, x, 1);
                    }
                }
            }
        }
        // the nearest voxel keeps thin tubes connected
        let near: Vec<usize> = (0..3).map(|k| (c[k].round().max(0.0) as usize).min(lim[k] - 1)).collect();
        mask.set(near[0], near[1], near[2], 1);
    }
}

/// Generates a noisy intensity volume and its ground-truth vessel mask.
pub fn generate_phantom(config: &PhantomConfig) -> Result<(ScalarVolume, BinaryMask)> {
    let issues = config.validate();
    if !issues.is_empty() {
        if config.dims.iter().any(|&d| d < 16) {
            return Err(Error::InvalidInput(issues.join("; ")));
        }
        return Err(Error::Config(issues));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut mask = Grid3::filled(config.dims, 0u8);
    let [r0, r1] = config.radius_range;
    for _ in 0..config.n_vessels {
        let curve = random_centerline(config.dims, config.curvature, &mut rng);
        let radii = [rng.gen_range(r0..=r1), rng.gen_range(r0..=r1)];
        rasterize_tube(&mut mask, &curve, radii);
    }
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let data = mask
        .data()
        .iter()
        .map(|&m| {
            let clean = config.background_level + config.intensity_vessel * m as f64;
            let n = if config.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            (clean + n).max(0.0) as f32
        })
        .collect();
    let volume = ScalarVolume::new(Grid3::new(config.dims, data)?)?;
    Ok((volume, BinaryMask::from_grid_unchecked(mask)))
}

/// Deletes randomly grown face-connected clusters until `round(drop_fraction * |mask|)`
/// foreground voxels are gone.
pub fn corrupt_labels(mask: &BinaryMask, config: &CorruptionConfig) -> Result<BinaryMask> {
    let issues = config.validate();
    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut grid = mask.grid().clone();
    let dims = grid.dims();
    let mut remaining: Vec<usize> = (0..grid.len()).filter(|&i| grid.data()[i] != 0).collect();
    let mut position = vec![usize::MAX; grid.len()];
    for (p, &i) in remaining.iter().enumerate() {
        position[i] = p;
    }
    let target = (config.drop_fraction * remaining.len() as f64).round() as usize;
    let [smin, smax] = config.cluster_size_range;
    let faces = crate::labelprep::Connectivity::Face.offsets();
    let mut removed = 0;
    let remove = |i: usize, remaining: &mut Vec<usize>, position: &mut Vec<usize>| {
        let p = position[i];
        let last = *remaining.last().expect("nonempty");
        remaining.swap_remove(p);
        if last != i {
            position[last] = p;
        }
        position[i] = usize::MAX;
    };
    while removed < target && !remaining.is_empty() {
        let size = rng.gen_range(smin..=smax).min(target - removed);
        let seed = remaining[rng.gen_range(0..remaining.len())];
        let mut cluster = vec![seed];
        grid.data_mut()[seed] = 0;
        remove(seed, &mut remaining, &mut position);
        while cluster.len() < size {
            let mut frontier = Vec::new();
            for &c in &cluster {
                crate::labelprep::neighbour_indices(dims, &faces, c, |n| {
                    if grid.data()[n] != 0 {
                        frontier.push(n);
                    }
                });
            }
            frontier.sort_unstable();
            frontier.dedup();
            let Some(&next) = frontier.choose(&mut rng) else { break };
            grid.data_mut()[next] = 0;
            remove(next, &mut remaining, &mut position);
            cluster.push(next);
        }
        removed += cluster.len();
    }
    Ok(BinaryMask::from_grid_unchecked(grid))
}
