//! Axis projections of a label volume, and how a patch's own MIP compares with
//! its window on the full-volume MIP.

use spockmip::volume::{extract_patch, maxpool2d, mip, mip_patch_region, Axis, BinaryMask, PatchBox};

fn show(name: &str, rows: usize, cols: usize, data: &[u8]) {
    println!("{name}:");
    for r in 0..rows {
        let line: String = data[r * cols..(r + 1) * cols].iter().map(|&v| if v != 0 { '#' } else { '.' }).collect();
        println!("  {line}");
    }
}

pub fn run() -> spockmip::Result<()> {
    // two straight vessels along x: one at depth 2, one at depth 12
    let label = BinaryMask::from_fn([16, 8, 8], |z, y, _| (z == 2 && y == 1) || (z == 12 && y == 5));
    for axis in Axis::ALL {
        let m = mip(&label, axis)?;
        println!("axis {axis}: projection is {} x {}", m.image.rows, m.image.cols);
    }

    let full = mip(&label, Axis::Z)?;
    let bx = PatchBox::new([0, 0, 0], [8, 8, 8]);
    let window = full.image.crop(mip_patch_region(bx, Axis::Z))?;
    let local = mip(&extract_patch(&label, bx)?, Axis::Z)?;
    show("patch MIP (only the vessel inside the slab)", 8, 8, &local.image.data);
    show("full-volume MIP window (both vessels)", 8, 8, &window.data);

    let pooled = maxpool2d(&full, 2)?;
    show("full MIP pooled by 2", pooled.image.rows, pooled.image.cols, &pooled.image.data);
    Ok(())
}

#[allow(dead_code)]
fn main() -> spockmip::Result<()> {
    run()
}
