//! Hybrid input-output phase retrieval from detector magnitudes, with CG and
//! with TV primal-dual as the inner solver.
//!
//! ```text
//! cargo run --release --example phase_retrieval -- [n] [noise] [outer_tv]
//! ```

use std::time::Instant;

use born_odt::forward::{add_noise, simulate_oversampled, ExperimentConfig};
use born_odt::geometry::RotationTrajectory;
use born_odt::metrics::QualityReport;
use born_odt::phantom::BallPhantom;
use born_odt::phase::{hio_with_model, HioParams, MeasurementModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(24);
    let noise: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.0);
    let outer: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(50);

    let config = ExperimentConfig::desk(n);
    let trajectory = RotationTrajectory::moving_axis(120)?;
    let phantom = BallPhantom::default_cell();
    let stack = add_noise(
        &simulate_oversampled(&phantom, &trajectory, &config, 2)?,
        noise,
        7,
    )?;
    let d = stack.magnitudes();
    let grid = config.matching_grid();
    let truth = phantom.eval_grid(&grid)?;
    let model = MeasurementModel::new(config, trajectory, grid, Default::default())?;

    let lambda = if noise > 0.0 { 0.05 } else { 0.01 };
    for (label, params) in [
        ("hio-cg", HioParams::cg()),
        (
            "hio-tv",
            HioParams {
                outer,
                ..HioParams::tv(lambda)
            },
        ),
    ] {
        let start = Instant::now();
        let result = hio_with_model(&d, &model, &params)?;
        let report = QualityReport::compare(&truth, &result.volume, None)?;
        let defect = result.magnitude_defect.iter().cloned().fold(0.0, f64::max);
        println!(
            "{label}: {} x {} iterations, PSNR {:.2} dB, SSIM {:.4}, max | |g| - d | / max d = {defect:.1e}, {:.1} s",
            params.outer,
            params.inner,
            report.psnr,
            report.ssim,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
