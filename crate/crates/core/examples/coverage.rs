//! k-space coverage of a fixed rotation axis versus the moving axis, and how
//! it grows along the moving-axis trajectory.

use std::f64::consts::PI;

use born_odt::forward::ExperimentConfig;
use born_odt::geometry::{coverage_fraction, RotationTrajectory};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k0 = ExperimentConfig::desk(64).k0;
    let frames = 120;
    let end = 2.0 * PI * (frames as f64 - 1.0) / frames as f64;
    let moving = RotationTrajectory::moving_axis(frames)?;
    println!("coverage of the ball of radius sqrt(2) k0 at resolution 64:");
    for (name, axis) in [
        ("e1", [1.0, 0.0, 0.0]),
        ("e2", [0.0, 1.0, 0.0]),
        ("e3", [0.0, 0.0, 1.0]),
    ] {
        let fixed = RotationTrajectory::fixed_axis(axis, frames, end)?;
        println!(
            "  fixed axis {name}: {:.4}",
            coverage_fraction(&fixed, k0, 64)
        );
    }
    println!("  moving axis:  {:.4}", coverage_fraction(&moving, k0, 64));
    println!("moving axis, first j samples:");
    for j in [1, 10, 30, 60, 90, 120] {
        println!(
            "  j = {j:>3}: {:.4}",
            coverage_fraction(&moving.prefix(j)?, k0, 64)
        );
    }
    Ok(())
}
