use num_complex::Complex64;
use rayon::prelude::*;

use super::tv::{div_into, grad_into, GradientField};
use super::{norm, norm_sqr_c, sum, DataOperator, ReconParams};
use crate::error::{OdtError, Result};
use crate::geometry::KSpaceSamples;
use crate::phantom::{GridSpec, Volume};

/// Norm of the forward-difference gradient on a 3D grid is at most `√12`.
const GRAD_NORM: f64 = 3.464_101_615_137_754_6;
const POWER_ITERATIONS: usize = 20;
const NORM_SAFETY: f64 = 1.05;
const BALANCE_RATIO: f64 = 10.0;
const ADAPT_DECAY: f64 = 0.95;
const DIVERGENCE_FACTOR: f64 = 1e3;
const TRACE_EVERY: usize = 10;

/// Primal and dual variables plus step sizes, reusable as a warm start.
#[derive(Debug, Clone)]
pub struct PrimalDualState {
    pub f: Vec<f64>,
    /// Dual variable of the data term.
    pub q: Vec<Complex64>,
    /// Dual variable of the scaled gradient.
    pub p: GradientField,
    pub tau: f64,
    pub sigma: f64,
    /// Scale `μ` of the gradient block in `K = (A, μ∇)`.
    pub mu: f64,
    /// Bound used for `‖K‖`.
    pub operator_norm: f64,
    pub iterations: usize,
    adapt: f64,
    af: Vec<Complex64>,
    kty: Vec<f64>,
}

impl PrimalDualState {
    fn cold(op: &DataOperator, params: &ReconParams) -> Result<Self> {
        let grid = *op.grid();
        let norm_a = op.norm_estimate(POWER_ITERATIONS)? * NORM_SAFETY;
        let norm_a = if norm_a > 0.0 { norm_a } else { 1.0 };
        let mu = norm_a / GRAD_NORM;
        let l = (norm_a * norm_a + (mu * GRAD_NORM).powi(2)).sqrt();
        let tau = params.tau.unwrap_or(1.0 / l);
        let mut sigma = params.sigma.unwrap_or(1.0 / (tau * l * l));
        if tau * sigma * l * l > 1.0 {
            sigma = 1.0 / (tau * l * l);
            log::warn!("dual step reduced to {sigma:.3e} so that tau sigma ||K||^2 <= 1");
        }
        Ok(Self {
            f: vec![0.0; grid.len()],
            q: vec![Complex64::new(0.0, 0.0); op.len()],
            p: GradientField::zeros(grid),
            tau,
            sigma,
            mu,
            operator_norm: l,
            iterations: 0,
            adapt: 1.0 - params.backtracking,
            af: vec![Complex64::new(0.0, 0.0); op.len()],
            kty: vec![0.0; grid.len()],
        })
    }

    /// Fresh state whose primal iterate is `f` and whose dual variables are zero.
    pub fn starting_at(op: &DataOperator, params: &ReconParams, f: Vec<f64>) -> Result<Self> {
        let mut st = Self::cold(op, params)?;
        if f.len() != st.f.len() {
            return Err(OdtError::Dimension(format!(
                "initial volume has {} voxels, operator grid has {}",
                f.len(),
                st.f.len()
            )));
        }
        st.af = op.apply_real(&f);
        st.f = f;
        Ok(st)
    }

    fn check(&self, op: &DataOperator) -> Result<()> {
        if self.f.len() != op.grid().len() || self.q.len() != op.len() || self.p.grid != *op.grid()
        {
            return Err(OdtError::Dimension(
                "warm state does not match the operator".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TvOutcome {
    pub volume: Volume,
    /// `(iteration, objective)` at the start, every ten iterations and at the end.
    pub objective: Vec<(usize, f64)>,
    pub state: PrimalDualState,
}

fn objective(af: &[Complex64], b: &[Complex64], grid: &GridSpec, f: &[f64], lambda: f64) -> f64 {
    let misfit: Vec<Complex64> = af.iter().zip(b).map(|(a, b)| a - b).collect();
    let data = 0.5 * norm_sqr_c(&misfit);
    if lambda == 0.0 {
        data
    } else {
        data + lambda * super::tv::tv_of(grid, f)
    }
}

/// Minimizes `χ_{≥0}(f) + ½‖A f − b‖² + λ TV(f)` with the primal-dual
/// hybrid gradient method, where `A` is `op` and `b = W^{1/2} values`.
///
/// Step sizes are rebalanced whenever the primal and dual residuals differ
/// by more than a factor of ten, keeping `τσ` fixed. The run is aborted when
/// two consecutive objective samples exceed a thousand times the starting
/// objective and still grow.
pub fn primal_dual_solve(
    op: &DataOperator,
    values: &[Complex64],
    params: &ReconParams,
    warm: Option<PrimalDualState>,
) -> Result<TvOutcome> {
    params.validate()?;
    let grid = *op.grid();
    let b = op.data(values)?;
    let mut st = match warm {
        Some(s) => {
            s.check(op)?;
            s
        }
        None => PrimalDualState::cold(op, params)?,
    };
    let lambda = params.lambda;
    let radius = lambda / st.mu;

    let start = objective(&st.af, &b, &grid, &st.f, lambda);
    let mut trace = vec![(0, start)];
    let mut grad_buf = GradientField::zeros(grid);
    let mut div_buf = vec![0.0; grid.len()];

    for it in 1..=params.max_iterations {
        let (tau, sigma, mu) = (st.tau, st.sigma, st.mu);

        let f_old = st.f.clone();
        let af_old = std::mem::take(&mut st.af);
        let kty_old = std::mem::take(&mut st.kty);
        let q_old = st.q.clone();
        let p_old = st.p.clone();

        st.f.par_iter_mut()
            .zip(kty_old.par_iter())
            .for_each(|(f, g)| {
                let v = *f - tau * g;
                *f = if params.nonnegative { v.max(0.0) } else { v };
            });
        st.af = op.apply_real(&st.f);

        let fbar: Vec<f64> = st.f.iter().zip(&f_old).map(|(f, o)| 2.0 * f - o).collect();
        st.q.par_iter_mut()
            .zip(st.af.par_iter().zip(af_old.par_iter()))
            .zip(b.par_iter())
            .for_each(|((q, (a, ao)), b)| {
                let afbar = 2.0 * a - ao;
                *q = (*q + (afbar - b) * sigma) / (1.0 + sigma);
            });
        grad_into(&grid, &fbar, &mut grad_buf);
        let step = sigma * mu;
        st.p.x
            .par_iter_mut()
            .zip(st.p.y.par_iter_mut())
            .zip(st.p.z.par_iter_mut())
            .enumerate()
            .for_each(|(i, ((px, py), pz))| {
                let v = [
                    *px + step * grad_buf.x[i],
                    *py + step * grad_buf.y[i],
                    *pz + step * grad_buf.z[i],
                ];
                let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                let shrink = if len > radius { radius / len } else { 1.0 };
                *px = v[0] * shrink;
                *py = v[1] * shrink;
                *pz = v[2] * shrink;
            });

        div_into(&st.p, &mut div_buf);
        let atq = op.adjoint_real(&st.q)?;
        st.kty = atq.iter().zip(&div_buf).map(|(a, d)| a - mu * d).collect();

        // Residuals of the optimality conditions of both updates.
        let primal: Vec<f64> = (0..grid.len())
            .map(|i| (f_old[i] - st.f[i]) / tau - (kty_old[i] - st.kty[i]))
            .collect();
        let primal = norm(&primal);
        let df: Vec<f64> = f_old.iter().zip(&st.f).map(|(o, f)| o - f).collect();
        grad_into(&grid, &df, &mut grad_buf);
        let dual_data: Vec<Complex64> = (0..op.len())
            .map(|m| (q_old[m] - st.q[m]) / sigma - (af_old[m] - st.af[m]))
            .collect();
        let dual_grad: Vec<f64> = (0..grid.len())
            .flat_map(|i| {
                [
                    (p_old.x[i] - st.p.x[i]) / sigma - mu * grad_buf.x[i],
                    (p_old.y[i] - st.p.y[i]) / sigma - mu * grad_buf.y[i],
                    (p_old.z[i] - st.p.z[i]) / sigma - mu * grad_buf.z[i],
                ]
            })
            .collect();
        let dual = (norm_sqr_c(&dual_data)
            + sum(&dual_grad.iter().map(|x| x * x).collect::<Vec<_>>()))
        .sqrt();

        if primal > BALANCE_RATIO * dual {
            st.tau /= 1.0 - st.adapt;
            st.sigma *= 1.0 - st.adapt;
            st.adapt *= ADAPT_DECAY;
        } else if dual > BALANCE_RATIO * primal {
            st.tau *= 1.0 - st.adapt;
            st.sigma /= 1.0 - st.adapt;
            st.adapt *= ADAPT_DECAY;
        }
        st.iterations += 1;

        if it % TRACE_EVERY == 0 || it == params.max_iterations {
            let value = objective(&st.af, &b, &grid, &st.f, lambda);
            trace.push((it, value));
            log::debug!(
                "primal-dual iteration {it}: objective {value:.6e}, tau {:.3e}, sigma {:.3e}",
                st.tau,
                st.sigma
            );
            let previous = trace[trace.len() - 2].1;
            let runaway = start > 0.0
                && value > DIVERGENCE_FACTOR * start
                && previous > DIVERGENCE_FACTOR * start
                && value > previous;
            if !value.is_finite() || runaway {
                return Err(OdtError::Numerical {
                    message: format!("primal-dual diverged at iteration {it} (objective {value:.3e}, initial {start:.3e})"),
                    trace: trace.iter().map(|t| t.1).collect(),
                });
            }
        }
    }
    Ok(TvOutcome {
        volume: Volume::from_data(grid, st.f.clone())?,
        objective: trace,
        state: st,
    })
}

/// `argmin_{f ≥ 0} ½‖F f − g‖² + λ TV(f)` for `params.max_iterations`
/// primal-dual iterations, optionally continuing from `warm`.
pub fn reconstruct_tv(
    samples: &KSpaceSamples,
    grid: GridSpec,
    params: &ReconParams,
    warm: Option<PrimalDualState>,
) -> Result<TvOutcome> {
    params.validate()?;
    let op = DataOperator::for_samples(samples, grid, params)?;
    primal_dual_solve(&op, &samples.values, params, warm)
}
