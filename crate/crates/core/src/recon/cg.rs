use num_complex::Complex64;
use rayon::prelude::*;

use super::{dot_c, norm_sqr_c, DataOperator, ReconParams};
use crate::error::Result;
use crate::geometry::KSpaceSamples;
use crate::phantom::{GridSpec, Volume};

#[derive(Debug, Clone)]
pub struct CgOutcome {
    /// Real part of the final iterate.
    pub volume: Volume,
    /// `‖A*A f_k − A*b‖₂` for `k = 0, 1, …`, starting at the zero iterate.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Conjugate-gradient iteration of residual-minimizing type on the normal
/// equations `A*A f = A*b`, started at `f = 0` with complex iterates.
///
/// Search directions are `A*A`-conjugate as in plain CG, but the step length
/// minimizes the normal residual `‖A*b − A*A f‖` over the Krylov space, so the
/// recorded residuals never increase.
pub fn cg_solve(
    op: &DataOperator,
    values: &[Complex64],
    iterations: usize,
    tolerance: f64,
) -> Result<CgOutcome> {
    let grid = *op.grid();
    let b = op.data(values)?;
    let normal = |v: &[Complex64]| -> Result<Vec<Complex64>> { op.adjoint(&op.apply(v)) };
    let mut x = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut r = op.adjoint(&b)?;
    let mut br = normal(&r)?;
    let mut p = r.clone();
    let mut bp = br.clone();
    let mut rho = dot_c(&r, &br).re;
    let mut residuals = vec![norm_sqr_c(&r).sqrt()];
    let stop = tolerance * residuals[0];
    let mut done = 0;
    while done < iterations && rho > 0.0 && residuals[done] > stop {
        let bpbp = norm_sqr_c(&bp);
        if bpbp == 0.0 {
            break;
        }
        let alpha = rho / bpbp;
        x.par_iter_mut()
            .zip(p.par_iter())
            .for_each(|(x, p)| *x += p * alpha);
        r.par_iter_mut()
            .zip(bp.par_iter())
            .for_each(|(r, q)| *r -= q * alpha);
        br = normal(&r)?;
        let next = dot_c(&r, &br).re;
        let beta = next / rho;
        p.par_iter_mut()
            .zip(r.par_iter())
            .for_each(|(p, r)| *p = r + *p * beta);
        bp.par_iter_mut()
            .zip(br.par_iter())
            .for_each(|(q, b)| *q = b + *q * beta);
        rho = next;
        residuals.push(norm_sqr_c(&r).sqrt());
        done += 1;
        log::debug!(
            "cg iteration {done}: normal residual {:.6e}",
            residuals[done]
        );
    }
    Ok(CgOutcome {
        volume: Volume::from_data(grid, x.iter().map(|z| z.re).collect())?,
        residuals,
        iterations: done,
    })
}

/// Least-squares reconstruction `argmin ‖F f − g‖²` by `params.max_iterations`
/// CG steps on the normal equations.
pub fn reconstruct_cg(
    samples: &KSpaceSamples,
    grid: GridSpec,
    params: &ReconParams,
) -> Result<CgOutcome> {
    params.validate()?;
    let op = DataOperator::for_samples(samples, grid, params)?;
    cg_solve(
        &op,
        &samples.values,
        params.max_iterations,
        params.cg_tolerance,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nufft::{NufftOptions, NufftPlan};
    use crate::recon::DataWeighting;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_nodes(m: usize, band: f64, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| {
                [
                    rng.random_range(-band..band),
                    rng.random_range(-band..band),
                    rng.random_range(-band..band),
                ]
            })
            .collect()
    }

    fn samples_for(nodes: Vec<[f64; 3]>, values: Vec<Complex64>) -> KSpaceSamples {
        let m = nodes.len();
        KSpaceSamples {
            k0: 10.0,
            nodes,
            values,
            weights: vec![1.0; m],
            planar: vec![[0.0; 2]; m],
            times: vec![0.0; m],
        }
    }

    #[test]
    fn zero_data_gives_zero_volume() {
        let grid = GridSpec::new(6, 1.0).unwrap();
        let nodes = random_nodes(300, 0.9 * PI, 1);
        let samples = samples_for(nodes, vec![Complex64::new(0.0, 0.0); 300]);
        let out = reconstruct_cg(&samples, grid, &ReconParams::cg()).unwrap();
        assert!(out.volume.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nan_data_is_rejected() {
        let grid = GridSpec::new(6, 1.0).unwrap();
        let nodes = random_nodes(50, 0.9 * PI, 2);
        let mut values = vec![Complex64::new(1.0, 0.0); 50];
        values[7].re = f64::NAN;
        let samples = samples_for(nodes, values);
        assert!(reconstruct_cg(&samples, grid, &ReconParams::cg()).is_err());
    }

    #[test]
    fn recovers_volume_from_consistent_data() {
        let grid = GridSpec::new(8, 1.0).unwrap();
        let nodes = random_nodes(1500, 0.95 * PI, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth: Vec<f64> = (0..grid.len())
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        let plan = NufftPlan::new(grid, &nodes, NufftOptions::default()).unwrap();
        let values = plan.apply_real(&truth);
        let samples = samples_for(nodes, values);
        let params = ReconParams {
            max_iterations: 200,
            weighting: DataWeighting::Uniform,
            ..ReconParams::cg()
        };
        let out = reconstruct_cg(&samples, grid, &params).unwrap();
        let err: f64 = out
            .volume
            .data
            .iter()
            .zip(&truth)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = truth.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err / scale < 1e-3, "relative error {}", err / scale);
    }

    #[test]
    fn normal_residual_is_nonincreasing() {
        let grid = GridSpec::new(8, 1.0).unwrap();
        let nodes = random_nodes(900, 0.95 * PI, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let values: Vec<Complex64> = (0..900)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let samples = samples_for(nodes, values);
        let out = reconstruct_cg(&samples, grid, &ReconParams::cg()).unwrap();
        assert_eq!(out.residuals.len(), 21);
        for w in out.residuals.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "{:?}", out.residuals);
        }
    }
}
