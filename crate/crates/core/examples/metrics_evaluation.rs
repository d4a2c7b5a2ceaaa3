//! Scores a perturbed mask against its reference and summarises a small cohort.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spockmip::metrics::{evaluate_pair, summarize};
use spockmip::phantom::{generate_phantom, PhantomConfig};
use spockmip::volume::{BinaryMask, Grid3, ProbabilityVolume};

pub fn run() -> spockmip::Result<()> {
    let mut reports = Vec::new();
    for seed in 0..4u64 {
        let (_, gt) = generate_phantom(&PhantomConfig {
            dims: [32, 32, 32],
            seed,
            ..Default::default()
        })?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // soft scores: true voxels lean high, a few flipped either way
        let scores: Vec<f32> = gt.data().iter().map(|&v| {
            let base = if v != 0 { 0.8 } else { 0.1 };
            (base + rng.gen_range(-0.5..0.5f32)).clamp(0.0, 1.0)
        }).collect();
        let prob = ProbabilityVolume::new(Grid3::new(gt.dims(), scores)?)?;
        let pred = BinaryMask::new(prob.grid().map(|p| u8::from(p >= 0.5)))?;
        let report = evaluate_pair(Some(&prob), &pred, &gt)?;
        if seed == 0 {
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        reports.push(report);
    }
    println!("{:<24} {:>3} {:>10} {:>12}", "metric", "n", "median", "variance");
    for row in summarize(&reports) {
        let fmt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |v| format!("{v:.prec$}"));
        println!("{:<24} {:>3} {:>10} {:>12}", row.metric, row.n, fmt(row.median, 4), fmt(row.variance, 6));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> spockmip::Result<()> {
    run()
}
