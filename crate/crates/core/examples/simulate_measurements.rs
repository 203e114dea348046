//! Simulates detector frames of the default cell phantom for the moving-axis
//! trajectory, optionally with noise, and writes them to a measurement
//! directory.
//!
//! ```text
//! cargo run --example simulate_measurements -- [n] [frames] [noise] [out_dir]
//! ```

use std::path::PathBuf;

use born_odt::forward::{add_noise, simulate_oversampled, ExperimentConfig};
use born_odt::geometry::RotationTrajectory;
use born_odt::io::{write_measurements, write_trajectory};
use born_odt::phantom::BallPhantom;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(32);
    let frames: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(60);
    let noise: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.0);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/simulated".into()));

    let config = ExperimentConfig::desk(n);
    let trajectory = RotationTrajectory::moving_axis(frames)?;
    let phantom = BallPhantom::default_cell();
    let mut stack = simulate_oversampled(&phantom, &trajectory, &config, 2)?;
    stack = add_noise(&stack, noise, 7)?;

    let field = stack.complex()?;
    let incident = config.incident();
    let rms = |f: &dyn Fn(&born_odt::Complex64) -> f64| {
        (field.iter().map(|z| f(z).powi(2)).sum::<f64>() / field.len() as f64).sqrt()
    };
    println!(
        "detector {n} x {n}, pitch {:.4}, k0 {:.4}, r_M {}",
        config.pitch, config.k0, config.r_m
    );
    println!("{frames} frames, noise level {noise}");
    println!("rms |u_tot|       = {:.4}", rms(&|z| z.norm()));
    println!("rms |u_tot - inc| = {:.4}", rms(&|z| (z - incident).norm()));

    std::fs::create_dir_all(&out)?;
    write_trajectory(&out.join("trajectory.txt"), &trajectory)?;
    write_measurements(&out.join("measurements"), &stack)?;
    println!("wrote {}", out.display());
    Ok(())
}
