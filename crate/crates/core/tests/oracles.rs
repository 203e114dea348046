use std::f64::consts::PI;

use born_odt::forward::{preprocess, simulate, ExperimentConfig};
use born_odt::geometry::{coverage_fraction, crofton_weights, KSpaceSamples, RotationTrajectory};
use born_odt::nufft::{NufftOptions, NufftPlan};
use born_odt::phantom::{ball_transform, Ball, BallPhantom, GridSpec, Volume, FT3_NORM};
use born_odt::recon::{backpropagate, reconstruct_cg, with_backpropagation_weights, ReconParams};
use born_odt::Complex64;

/// Composite Simpson rule on `[a, b]` with `2 m` panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / (2 * m) as f64;
    let mut sum = f(a) + f(b);
    for i in 1..2 * m {
        sum += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

#[test]
fn ball_transform_matches_radial_quadrature() {
    for &(radius, rho) in &[
        (1.0, 0.3),
        (30.0, 0.05),
        (8.0, 1.7),
        (5.0, 4.2),
        (12.0, 1e-3),
    ] {
        // F(k) = (2π)^{-3/2} ∫_0^R 4π r² sinc(ρ r) dr for a centred unit ball.
        let integrand = |r: f64| {
            let x = rho * r;
            let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
            4.0 * PI * r * r * sinc
        };
        let quad = FT3_NORM * simpson(integrand, 0.0, radius, 20_000);
        let exact = FT3_NORM * ball_transform(radius, rho);
        assert!(
            (quad - exact).abs() <= 1e-8 * exact.abs().max(1e-12),
            "R {radius}, rho {rho}: {quad} vs {exact}"
        );
    }
}

#[test]
fn analytic_transform_applies_the_shift_theorem_per_ball() {
    let phantom = BallPhantom::default_cell();
    let k: [f64; 3] = [0.21, -0.13, 0.34];
    let rho = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
    let expected: Complex64 = phantom
        .balls
        .iter()
        .map(|b| {
            let phase = -(k[0] * b.center[0] + k[1] * b.center[1] + k[2] * b.center[2]);
            Complex64::from_polar(
                b.amplitude * FT3_NORM * ball_transform(b.radius, rho),
                phase,
            )
        })
        .sum();
    assert!((phantom.analytic_ft(&k) - expected).norm() < 1e-12 * expected.norm());
}

#[test]
fn gridded_phantom_transform_converges_to_the_analytic_one() {
    let phantom = BallPhantom::default_cell();
    let nodes: Vec<[f64; 3]> = (0..300)
        .map(|i| {
            let t = i as f64;
            [
                0.4 * (0.37 * t).sin(),
                0.4 * (0.51 * t).cos(),
                0.4 * (0.23 * t).sin(),
            ]
        })
        .collect();
    let exact: Vec<Complex64> = nodes.iter().map(|k| phantom.analytic_ft(k)).collect();
    let error = |n: usize| {
        let grid = GridSpec::covering(n, 42.4).unwrap();
        let volume = phantom.eval_grid(&grid).unwrap();
        let plan = NufftPlan::new(grid, &nodes, NufftOptions::default()).unwrap();
        plan.apply_real(&volume.data)
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    let (coarse, fine) = (error(32), error(64));
    assert!(
        fine < coarse,
        "N=64 error {fine} not below N=32 error {coarse}"
    );
}

#[test]
fn crofton_counts_double_over_two_turns_about_e1() {
    let grid = ExperimentConfig::desk(16).semisphere_grid();
    let frames = 90;
    let step = 2.0 * PI / frames as f64;
    let one = RotationTrajectory::fixed_axis([1.0, 0.0, 0.0], frames, 2.0 * PI - step).unwrap();
    // The same turn repeated after a pause, so no time cluster spans both.
    let times: Vec<f64> = one
        .times()
        .iter()
        .chain(one.times())
        .enumerate()
        .map(|(j, &t)| if j < frames { t } else { t + 100.0 })
        .collect();
    let axes = [one.axes(), one.axes()].concat();
    let angles = [one.angles(), one.angles()].concat();
    let two = RotationTrajectory::new(times, axes, angles).unwrap();
    let bin = 2.5 * grid.dk;
    let mean = |traj: &RotationTrajectory| {
        let samples = KSpaceSamples::nodes_for(&grid, traj);
        let counts = crofton_weights(&samples, bin);
        counts.iter().sum::<f64>() / counts.len() as f64
    };
    let (m1, m2) = (mean(&one), mean(&two));
    assert!(
        m1 > 1.0,
        "a full turn about e1 revisits k-space, mean count {m1}"
    );
    assert!((m2 / m1 - 2.0).abs() < 0.02, "mean counts {m1} and {m2}");
}

#[test]
fn coverage_grows_with_trajectory_prefixes() {
    let k0 = ExperimentConfig::desk(32).k0;
    let traj = RotationTrajectory::moving_axis(60).unwrap();
    let mut last = 0.0;
    for len in [1, 5, 15, 30, 60] {
        let c = coverage_fraction(&traj.prefix(len).unwrap(), k0, 32);
        assert!(c >= last, "prefix {len}: {c} < {last}");
        last = c;
    }
    assert!(last > 0.0);
}

struct Shifted {
    plain: Volume,
    moved: Volume,
    shift: [usize; 3],
}

fn shifted_pair(reconstruct: impl Fn(&KSpaceSamples) -> Volume) -> Shifted {
    let config = ExperimentConfig::desk(16);
    let trajectory = RotationTrajectory::moving_axis(30).unwrap();
    let phantom = BallPhantom::new(vec![Ball {
        center: [0.0, 0.0, 0.0],
        radius: 14.0,
        amplitude: 1.0,
    }])
    .unwrap();
    let stack = simulate(&phantom, &trajectory, &config).unwrap();
    let samples =
        with_backpropagation_weights(&preprocess(&stack, &trajectory).unwrap(), &trajectory)
            .unwrap();
    let h = config.matching_grid().spacing;
    let shift = [2usize, 1, 0];
    let s = [
        shift[0] as f64 * h,
        shift[1] as f64 * h,
        shift[2] as f64 * h,
    ];
    let mut moved = samples.clone();
    for (v, k) in moved.values.iter_mut().zip(&samples.nodes) {
        *v *= Complex64::from_polar(1.0, -(k[0] * s[0] + k[1] * s[1] + k[2] * s[2]));
    }
    Shifted {
        plain: reconstruct(&samples),
        moved: reconstruct(&moved),
        shift,
    }
}

/// Relative l2 distance between `moved` and `plain` translated by `shift`,
/// over the voxels whose preimage lies inside the grid.
fn shift_error(pair: &Shifted) -> f64 {
    let grid = pair.plain.grid;
    let n = grid.n;
    let (mut num, mut den) = (0.0, 0.0);
    for iz in pair.shift[2]..n {
        for iy in pair.shift[1]..n {
            for ix in pair.shift[0]..n {
                let a = pair.moved.data[grid.offset(ix, iy, iz)];
                let b = pair.plain.data
                    [grid.offset(ix - pair.shift[0], iy - pair.shift[1], iz - pair.shift[2])];
                num += (a - b).powi(2);
                den += b * b;
            }
        }
    }
    (num / den).sqrt()
}

#[test]
fn backpropagation_follows_a_phase_ramp_shift() {
    let pair = shifted_pair(|s| {
        let grid = ExperimentConfig::desk(16).matching_grid();
        backpropagate(s, grid, NufftOptions::default()).unwrap()
    });
    let err = shift_error(&pair);
    assert!(err < 1e-6, "relative error {err}");
}

#[test]
fn cg_follows_a_phase_ramp_shift_away_from_the_boundary() {
    let pair = shifted_pair(|s| {
        let grid = ExperimentConfig::desk(16).matching_grid();
        reconstruct_cg(s, grid, &ReconParams::cg()).unwrap().volume
    });
    let err = shift_error(&pair);
    assert!(err < 0.05, "relative error {err}");
}
