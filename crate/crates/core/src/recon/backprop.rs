use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{OdtError, Result};
use crate::geometry::{
    crofton_weights, default_crofton_bin_width, jacobian_weight, KSpaceSamples, RotationTrajectory,
};
use crate::nufft::{NufftOptions, NufftPlan};
use crate::phantom::{GridSpec, Volume};

/// Multiplicity bin width matched to the sampling: two and a half times the
/// larger of the detector frequency step and the distance a node at `|k| = k0`
/// travels between frames, and never below [`default_crofton_bin_width`].
pub fn sampling_bin_width(samples: &KSpaceSamples, trajectory: &RotationTrajectory) -> f64 {
    let dk = samples
        .planar
        .iter()
        .map(|k| k[0].abs())
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let dk = if dk.is_finite() { dk } else { 0.0 };
    let travel = if trajectory.len() > 1 {
        let t = trajectory.times();
        let mut worst = 0.0f64;
        for j in 1..t.len() {
            let a = trajectory.rotation(j - 1);
            let b = trajectory.rotation(j);
            let mut diff = 0.0;
            for r in 0..3 {
                for c in 0..3 {
                    diff += (a.0[r][c] - b.0[r][c]).powi(2);
                }
            }
            worst = worst.max(diff.sqrt());
        }
        // Frobenius distance bounds the operator distance.
        worst * samples.k0
    } else {
        0.0
    };
    (2.5 * dk.max(travel)).max(default_crofton_bin_width(samples.k0))
}

/// `|∇Φ| / Card Φ⁻¹(Φ)` at every sample, with multiplicities binned at
/// `bin_width` ([`sampling_bin_width`] when `None`).
pub fn backpropagation_weights(
    samples: &KSpaceSamples,
    trajectory: &RotationTrajectory,
    bin_width: Option<f64>,
) -> Result<Vec<f64>> {
    samples.validate()?;
    let k0 = samples.k0;
    let cards = crofton_weights(
        samples,
        bin_width.unwrap_or_else(|| sampling_bin_width(samples, trajectory)),
    );
    samples
        .planar
        .par_iter()
        .zip(samples.times.par_iter())
        .zip(cards.par_iter())
        .map(|((k, &t), &card)| Ok(jacobian_weight(k[0], k[1], t, trajectory, k0)? / card))
        .collect()
}

/// Copy of `samples` whose cell-volume weights are multiplied by
/// [`backpropagation_weights`].
pub fn with_backpropagation_weights(
    samples: &KSpaceSamples,
    trajectory: &RotationTrajectory,
) -> Result<KSpaceSamples> {
    let factors = backpropagation_weights(samples, trajectory, None)?;
    let mut out = samples.clone();
    out.weights
        .iter_mut()
        .zip(&factors)
        .for_each(|(w, f)| *w *= f);
    Ok(out)
}

/// `f(x) = (2π)^{-3/2} Σ_m w_m g_m exp(i Φ_m · x)`, the weighted Riemann sum
/// of the inverse Fourier transform over the sampled part of k-space.
pub fn backpropagate(
    samples: &KSpaceSamples,
    grid: GridSpec,
    options: NufftOptions,
) -> Result<Volume> {
    samples.validate()?;
    if samples.is_empty() {
        return Ok(Volume::zeros(grid));
    }
    if samples.weights.iter().all(|&w| w == 0.0) {
        return Err(OdtError::Contract(
            "backpropagation needs quadrature weights, all are zero".into(),
        ));
    }
    let plan = NufftPlan::new(grid, &samples.nodes, options)?;
    let weighted: Vec<Complex64> = samples
        .values
        .iter()
        .zip(&samples.weights)
        .map(|(g, w)| g * w)
        .collect();
    let voxel = grid.spacing.powi(3);
    let out = plan.adjoint(&weighted)?;
    let imaginary = out.iter().map(|z| z.im * z.im).sum::<f64>().sqrt() / voxel;
    log::info!("backpropagation: imaginary residue ||Im f||_2 = {imaginary:.3e}");
    Volume::from_data(grid, out.into_iter().map(|z| z.re / voxel).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{preprocess, simulate, ExperimentConfig};
    use crate::geometry::coverage_fraction;
    use crate::phantom::{Ball, BallPhantom};

    fn instance() -> (KSpaceSamples, GridSpec, RotationTrajectory) {
        let config = ExperimentConfig::desk(16);
        let traj = RotationTrajectory::moving_axis(12).unwrap();
        let phantom = BallPhantom::default_cell();
        let stack = simulate(&phantom, &traj, &config).unwrap();
        let samples =
            with_backpropagation_weights(&preprocess(&stack, &traj).unwrap(), &traj).unwrap();
        (samples, config.matching_grid(), traj)
    }

    #[test]
    fn zero_values_give_zero_volume() {
        let (mut samples, grid, _) = instance();
        samples
            .values
            .iter_mut()
            .for_each(|v| *v = Complex64::new(0.0, 0.0));
        let v = backpropagate(&samples, grid, NufftOptions::default()).unwrap();
        assert!(v.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn linear_in_data() {
        let (samples, grid, _) = instance();
        let once = backpropagate(&samples, grid, NufftOptions::default()).unwrap();
        let mut doubled = samples.clone();
        doubled.values.iter_mut().for_each(|v| *v *= 2.0);
        let twice = backpropagate(&doubled, grid, NufftOptions::default()).unwrap();
        for (a, b) in once.data.iter().zip(&twice.data) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn missing_weights_are_rejected() {
        let (mut samples, grid, _) = instance();
        samples.weights.iter_mut().for_each(|w| *w = 0.0);
        assert!(matches!(
            backpropagate(&samples, grid, NufftOptions::default()),
            Err(OdtError::Contract(_))
        ));
    }

    #[test]
    fn weights_combine_jacobian_and_multiplicity() {
        let traj = RotationTrajectory::fixed_axis([1.0, 0.0, 0.0], 40, 2.0 * std::f64::consts::PI)
            .unwrap();
        let config = ExperimentConfig::desk(16);
        let samples = KSpaceSamples::nodes_for(&config.semisphere_grid(), &traj);
        let w = backpropagation_weights(&samples, &traj, None).unwrap();
        let cards = crofton_weights(&samples, sampling_bin_width(&samples, &traj));
        for m in (0..samples.len()).step_by(97) {
            let [k1, k2] = samples.planar[m];
            let jac = jacobian_weight(k1, k2, samples.times[m], &traj, samples.k0).unwrap();
            assert!((w[m] * cards[m] - jac).abs() < 1e-12 * jac.max(1.0));
        }
    }

    #[test]
    fn weights_integrate_to_the_covered_volume() {
        let config = ExperimentConfig::desk(32);
        let traj = RotationTrajectory::moving_axis(120).unwrap();
        let stack = simulate(&BallPhantom::default_cell(), &traj, &config).unwrap();
        let samples =
            with_backpropagation_weights(&preprocess(&stack, &traj).unwrap(), &traj).unwrap();
        let k0 = samples.k0;
        let covered = coverage_fraction(&traj, k0, 64) * (2.0 * 2f64.sqrt() * k0).powi(3);
        let total: f64 = samples.weights.iter().sum();
        assert!(
            (total / covered - 1.0).abs() < 0.1,
            "ratio {}",
            total / covered
        );
    }

    #[test]
    fn small_ball_backprojects_near_its_centre() {
        let config = ExperimentConfig::desk(16);
        let traj = RotationTrajectory::moving_axis(30).unwrap();
        let phantom = BallPhantom::new(vec![Ball {
            center: [0.0, 0.0, 0.0],
            radius: 15.0,
            amplitude: 1.0,
        }])
        .unwrap();
        let stack = simulate(&phantom, &traj, &config).unwrap();
        let samples =
            with_backpropagation_weights(&preprocess(&stack, &traj).unwrap(), &traj).unwrap();
        let grid = config.matching_grid();
        let v = backpropagate(&samples, grid, NufftOptions::default()).unwrap();
        let centre = v.data[grid.offset(8, 8, 8)];
        let corner = v.data[grid.offset(1, 1, 1)];
        assert!(centre > 0.3, "centre value {centre}");
        assert!(centre > 3.0 * corner.abs());
    }
}
