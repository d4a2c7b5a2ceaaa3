//! Generates a synthetic vessel phantom, knocks small clusters out of its label
//! and writes all three volumes as NIfTI.

use spockmip::labelprep::{connected_components, Connectivity};
use spockmip::phantom::{corrupt_labels, generate_phantom, CorruptionConfig, PhantomConfig};
use spockmip::volume::{load_mask, save_mask, save_volume};

pub fn run() -> spockmip::Result<()> {
    let cfg = PhantomConfig {
        dims: [48, 48, 48],
        seed: 11,
        ..Default::default()
    };
    let (image, clean) = generate_phantom(&cfg)?;
    let corrupt = corrupt_labels(&clean, &CorruptionConfig { seed: 11, ..Default::default() })?;

    let full = Connectivity::Full;
    println!("dims {:?}, {} vessels", cfg.dims, cfg.n_vessels);
    println!(
        "clean label: {} voxels in {} components",
        clean.count(),
        connected_components(&clean, full).count()
    );
    println!(
        "corrupted label: {} voxels in {} components ({} dropped)",
        corrupt.count(),
        connected_components(&corrupt, full).count(),
        clean.count() - corrupt.count()
    );

    let dir = std::env::temp_dir().join("spockmip_phantom_example");
    std::fs::create_dir_all(&dir).map_err(|e| spockmip::Error::io(&dir, e))?;
    save_volume(&image, dir.join("image.nii.gz"))?;
    save_mask(&clean, dir.join("label_clean.nii.gz"))?;
    save_mask(&corrupt, dir.join("label_corrupt.nii.gz"))?;
    assert_eq!(load_mask(dir.join("label_clean.nii.gz"))?, clean);
    println!("wrote {}", dir.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> spockmip::Result<()> {
    run()
}
