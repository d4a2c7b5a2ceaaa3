//! Area opening then area closing on a speckled tube mask.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spockmip::labelprep::{area_closing, area_opening, connected_components, Connectivity, MorphologyParams};
use spockmip::volume::BinaryMask;

pub fn run() -> spockmip::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // a 3x3 tube along x with pinholes, plus isolated specks
    let mask = BinaryMask::from_fn([24, 24, 24], |z, y, x| {
        let tube = (11..14).contains(&z) && (11..14).contains(&y) && (2..22).contains(&x) && !(z == 12 && y == 12 && x % 5 == 0);
        tube || rng.gen_bool(0.01)
    });
    let params = MorphologyParams::default();
    let opened = area_opening(&mask, &params)?;
    let closed = area_closing(&opened, &params)?;

    let count = |m: &BinaryMask| connected_components(m, Connectivity::Full).count();
    println!("input:   {:5} voxels, {:3} components", mask.count(), count(&mask));
    println!("opened:  {:5} voxels, {:3} components", opened.count(), count(&opened));
    println!("closed:  {:5} voxels, {:3} components", closed.count(), count(&closed));
    assert!(closed.get(12, 12, 10), "pinhole inside the tube is filled");
    Ok(())
}

#[allow(dead_code)]
fn main() -> spockmip::Result<()> {
    run()
}
