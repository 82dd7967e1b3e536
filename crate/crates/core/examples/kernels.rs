//! Low-level building blocks: unfolding patches, normalising raw kernels and
//! applying them per pixel.

use idf::ops::KernelField;
use idf::{apply_kernels, power_normalize, unfold, Image};

fn main() -> idf::Result<()> {
    let img = Image::from_fn(1, 5, 5, |_, y, x| if x == 2 || y == 2 { 1.0 } else { 0.0 });
    let patches = unfold(&img, 3, 1)?;
    println!(
        "patch field: {} taps × {} positions",
        patches.kernel_area(),
        patches.positions()
    );

    // one raw kernel per position: a horizontal bar everywhere
    let m = 25;
    let mut raw = vec![0.0; 9 * m];
    for tap in 3..6 {
        raw[tap * m..(tap + 1) * m].fill(1.0);
    }
    let kernels = power_normalize(&KernelField::raw(3, 5, 5, raw)?, 3.0, 1e-4)?;
    println!(
        "tap weights at the centre: {:?}",
        (0..9).map(|i| kernels.get(i, 12)).collect::<Vec<_>>()
    );

    let out = apply_kernels(&patches, &kernels)?;
    for y in 0..5 {
        let row: Vec<String> = (0..5).map(|x| format!("{:.2}", out.get(0, y, x))).collect();
        println!("{}", row.join(" "));
    }
    Ok(())
}
