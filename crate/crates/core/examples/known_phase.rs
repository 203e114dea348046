//! Known-phase reconstruction of the cell phantom with filtered
//! backpropagation, CG and TV-regularized primal-dual, followed by a metrics
//! table.
//!
//! ```text
//! cargo run --release --example known_phase -- [n] [noise] [lambda]
//! ```

use std::time::Instant;

use born_odt::forward::{add_noise, preprocess, simulate_oversampled, ExperimentConfig};
use born_odt::geometry::RotationTrajectory;
use born_odt::metrics::{write_csv, MetricsRow, QualityReport};
use born_odt::phantom::BallPhantom;
use born_odt::recon::{
    backpropagate, reconstruct_cg, reconstruct_tv, with_backpropagation_weights, ReconParams,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(32);
    let noise: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.0);
    let lambda: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.01);

    let config = ExperimentConfig::desk(n);
    let trajectory = RotationTrajectory::moving_axis(120)?;
    let phantom = BallPhantom::default_cell();
    let stack = add_noise(
        &simulate_oversampled(&phantom, &trajectory, &config, 2)?,
        noise,
        7,
    )?;
    let samples = with_backpropagation_weights(&preprocess(&stack, &trajectory)?, &trajectory)?;
    let grid = config.matching_grid();
    let truth = phantom.eval_grid(&grid)?;
    println!(
        "{} k-space samples, {n}^3 grid, noise {noise}",
        samples.len()
    );

    let mut rows = Vec::new();
    let mut row = |method: &str,
                   volume: &born_odt::phantom::Volume,
                   start: Instant|
     -> born_odt::Result<()> {
        rows.push(MetricsRow {
            method: method.into(),
            report: QualityReport::compare(&truth, volume, None)?,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        Ok(())
    };

    let start = Instant::now();
    row(
        "bp",
        &backpropagate(&samples, grid, Default::default())?,
        start,
    )?;
    let start = Instant::now();
    let cg = reconstruct_cg(&samples, grid, &ReconParams::cg())?;
    row("cg", &cg.volume, start)?;
    let start = Instant::now();
    let tv = reconstruct_tv(&samples, grid, &ReconParams::tv(lambda), None)?;
    row("tv", &tv.volume, start)?;

    write_csv(std::io::stdout().lock(), &rows)?;
    println!(
        "cg normal residuals: {:.3e} -> {:.3e}",
        cg.residuals[0],
        cg.residuals[cg.residuals.len() - 1]
    );
    if let (Some(first), Some(last)) = (tv.objective.first(), tv.objective.last()) {
        println!(
            "tv objective: {:.4e} (iteration {}) -> {:.4e} (iteration {})",
            first.1, first.0, last.1, last.0
        );
    }
    Ok(())
}
