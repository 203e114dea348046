//! Backpropagation weights along the moving-axis trajectory: the Jacobian
//! `|∇Φ|`, the multiplicity estimate and their integral against the covered
//! k-space volume.

use born_odt::forward::ExperimentConfig;
use born_odt::geometry::{
    coverage_fraction, crofton_weights, jacobian_weight, KSpaceSamples, RotationTrajectory,
};
use born_odt::recon::{backpropagation_weights, sampling_bin_width};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ExperimentConfig::desk(32);
    let trajectory = RotationTrajectory::moving_axis(120)?;
    let grid = config.semisphere_grid();
    let k0 = config.k0;

    println!("|grad Phi| at (k1, k2) = (0.3 k0, 0.2 k0):");
    for j in (0..trajectory.len()).step_by(15) {
        let t = trajectory.times()[j];
        println!(
            "  t = {t:.3}: {:.5}",
            jacobian_weight(0.3 * k0, 0.2 * k0, t, &trajectory, k0)?
        );
    }

    let mut samples = KSpaceSamples::nodes_for(&grid, &trajectory);
    let cell = grid.dk * grid.dk * trajectory.time_step();
    samples.weights.iter_mut().for_each(|w| *w = cell);
    let bin = sampling_bin_width(&samples, &trajectory);
    let cards = crofton_weights(&samples, bin);
    let max_card = cards.iter().cloned().fold(0.0, f64::max);
    let mean_card = cards.iter().sum::<f64>() / cards.len() as f64;
    println!("multiplicity bin width {bin:.4}: mean {mean_card:.3}, max {max_card}");

    let factors = backpropagation_weights(&samples, &trajectory, Some(bin))?;
    let integral: f64 = factors.iter().map(|f| f * cell).sum();
    let covered = coverage_fraction(&trajectory, k0, 64) * (2.0 * 2f64.sqrt() * k0).powi(3);
    println!(
        "sum of weights {integral:.4} vs covered volume {covered:.4} (ratio {:.3})",
        integral / covered
    );
    Ok(())
}
