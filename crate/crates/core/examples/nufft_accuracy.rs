//! Compares the gridding NUFFT with the direct nonuniform sum for several
//! kernel widths, and times both.

use std::f64::consts::PI;
use std::time::Instant;

use born_odt::nufft::{ndft_direct, norm2, NufftOptions, NufftPlan};
use born_odt::phantom::GridSpec;
use born_odt::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = GridSpec::new(16, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let band = PI / grid.spacing;
    let nodes: Vec<[f64; 3]> = (0..2000)
        .map(|_| std::array::from_fn(|_| rng.random_range(-band..band)))
        .collect();
    let f: Vec<Complex64> = (0..grid.len())
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();

    let start = Instant::now();
    let exact = ndft_direct(&grid, &f, &nodes);
    println!("direct sum: {:.3} s", start.elapsed().as_secs_f64());

    println!("{:>6} {:>12} {:>10}", "width", "rel. error", "seconds");
    for width in [4, 6, 8, 10, 12] {
        let start = Instant::now();
        let plan = NufftPlan::new(
            grid,
            &nodes,
            NufftOptions {
                oversampling: 2.0,
                width,
            },
        )?;
        let fast = plan.apply(&f);
        let seconds = start.elapsed().as_secs_f64();
        let diff: Vec<Complex64> = fast.iter().zip(&exact).map(|(a, b)| a - b).collect();
        println!(
            "{width:>6} {:>12.3e} {seconds:>10.4}",
            norm2(&diff) / norm2(&exact)
        );
    }
    Ok(())
}
