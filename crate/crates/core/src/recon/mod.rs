//! Known-phase reconstruction from k-space samples.
//!
//! Three backends share one data model: filtered backpropagation
//! ([`backpropagate`]), conjugate gradients on the normal equations of the
//! nonuniform Fourier transform ([`reconstruct_cg`]) and a nonnegative,
//! TV-regularized primal-dual solver ([`reconstruct_tv`]).

mod backprop;
mod cg;
mod primal_dual;
mod tv;

use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

pub use backprop::{
    backpropagate, backpropagation_weights, sampling_bin_width, with_backpropagation_weights,
};
pub use cg::{cg_solve, reconstruct_cg, CgOutcome};
pub use primal_dual::{primal_dual_solve, reconstruct_tv, PrimalDualState, TvOutcome};
pub use tv::{div, grad, tv, GradientField};

use crate::error::{OdtError, Result};
use crate::geometry::KSpaceSamples;
use crate::nufft::{NufftOptions, NufftPlan};
use crate::phantom::{GridSpec, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Bp,
    Cg,
    Tv,
}

impl FromStr for Method {
    type Err = OdtError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bp" => Ok(Method::Bp),
            "cg" => Ok(Method::Cg),
            "tv" => Ok(Method::Tv),
            other => Err(OdtError::Config(format!(
                "unknown method '{other}' (expected bp, cg or tv)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Bp => "bp",
            Method::Cg => "cg",
            Method::Tv => "tv",
        })
    }
}

/// How residuals of individual k-space samples are weighted in the data term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataWeighting {
    /// `½ Σ_m |(F f)_m − g_m|²`.
    Uniform,
    /// `½ Σ_m W_m |(F f)_m − g_m|²` with `W_m` the sample weight divided by
    /// the voxel volume, so the sum approximates the squared L² error over
    /// the accessible set in voxel units.
    Quadrature,
}

impl FromStr for DataWeighting {
    type Err = OdtError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(DataWeighting::Uniform),
            "quadrature" => Ok(DataWeighting::Quadrature),
            other => Err(OdtError::Config(format!(
                "unknown data weighting '{other}' (expected uniform or quadrature)"
            ))),
        }
    }
}

/// Solver configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconParams {
    pub method: Method,
    /// TV weight λ.
    pub lambda: f64,
    pub max_iterations: usize,
    /// CG stops once the normal residual falls below this fraction of its
    /// initial value.
    pub cg_tolerance: f64,
    /// Initial primal step; derived from the operator norm when `None`.
    pub tau: Option<f64>,
    /// Initial dual step; derived from the operator norm when `None`.
    pub sigma: Option<f64>,
    /// Factor applied to the steps when the primal and dual residuals are out
    /// of balance.
    pub backtracking: f64,
    pub nonnegative: bool,
    pub weighting: DataWeighting,
    pub nufft: NufftOptions,
}

impl ReconParams {
    pub fn bp() -> Self {
        Self {
            method: Method::Bp,
            max_iterations: 1,
            ..Self::tv(0.0)
        }
    }

    pub fn cg() -> Self {
        Self {
            method: Method::Cg,
            max_iterations: 20,
            weighting: DataWeighting::Uniform,
            ..Self::tv(0.0)
        }
    }

    pub fn tv(lambda: f64) -> Self {
        Self {
            method: Method::Tv,
            lambda,
            max_iterations: 200,
            cg_tolerance: 0.0,
            tau: None,
            sigma: None,
            backtracking: 0.5,
            nonnegative: true,
            weighting: DataWeighting::Quadrature,
            nufft: NufftOptions::default(),
        }
    }

    pub fn for_method(method: Method) -> Self {
        match method {
            Method::Bp => Self::bp(),
            Method::Cg => Self::cg(),
            Method::Tv => Self::tv(0.01),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(OdtError::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.max_iterations == 0 {
            return Err(OdtError::Config("iterations must be >= 1".into()));
        }
        for (name, step) in [("tau", self.tau), ("sigma", self.sigma)] {
            if let Some(s) = step {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(OdtError::Config(format!(
                        "{name} must be positive, got {s}"
                    )));
                }
            }
        }
        if !(self.backtracking > 0.0 && self.backtracking < 1.0) {
            return Err(OdtError::Config(format!(
                "backtracking factor must lie in (0, 1), got {}",
                self.backtracking
            )));
        }
        if !(self.cg_tolerance >= 0.0) {
            return Err(OdtError::Config("CG tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

/// The weighted nonuniform transform `f ↦ W^{1/2} F f` used by the iterative solvers.
#[derive(Debug, Clone)]
pub struct DataOperator {
    plan: NufftPlan,
    sqrt_weights: Option<Vec<f64>>,
}

impl DataOperator {
    pub fn new(plan: NufftPlan, weights: Option<Vec<f64>>) -> Result<Self> {
        if let Some(w) = &weights {
            if w.len() != plan.num_nodes() {
                return Err(OdtError::Dimension(format!(
                    "{} data weights for {} nodes",
                    w.len(),
                    plan.num_nodes()
                )));
            }
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(OdtError::Validation(
                    "data weights must be finite and >= 0".into(),
                ));
            }
        }
        Ok(Self {
            plan,
            sqrt_weights: weights.map(|w| w.into_iter().map(f64::sqrt).collect()),
        })
    }

    /// Plans the transform at the sample nodes with the weighting from `params`.
    pub fn for_samples(
        samples: &KSpaceSamples,
        grid: GridSpec,
        params: &ReconParams,
    ) -> Result<Self> {
        samples.validate()?;
        let plan = NufftPlan::new(grid, &samples.nodes, params.nufft)?;
        let weights = match params.weighting {
            DataWeighting::Uniform => None,
            DataWeighting::Quadrature => {
                let voxel = grid.spacing.powi(3);
                Some(samples.weights.iter().map(|w| w / voxel).collect())
            }
        };
        Self::new(plan, weights)
    }

    pub fn plan(&self) -> &NufftPlan {
        &self.plan
    }

    pub fn grid(&self) -> &GridSpec {
        self.plan.grid()
    }

    pub fn len(&self) -> usize {
        self.plan.num_nodes()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn weigh(&self, mut v: Vec<Complex64>) -> Vec<Complex64> {
        if let Some(w) = &self.sqrt_weights {
            v.par_iter_mut()
                .zip(w.par_iter())
                .for_each(|(x, &s)| *x *= s);
        }
        v
    }

    pub fn apply(&self, f: &[Complex64]) -> Vec<Complex64> {
        self.weigh(self.plan.apply(f))
    }

    pub fn apply_real(&self, f: &[f64]) -> Vec<Complex64> {
        self.weigh(self.plan.apply_real(f))
    }

    pub fn adjoint(&self, q: &[Complex64]) -> Result<Vec<Complex64>> {
        if q.len() != self.len() {
            return Err(OdtError::Dimension(format!(
                "{} values for an operator with {} nodes",
                q.len(),
                self.len()
            )));
        }
        self.plan.adjoint(&self.weigh(q.to_vec()))
    }

    /// Adjoint of [`DataOperator::apply_real`] for the real inner product.
    pub fn adjoint_real(&self, q: &[Complex64]) -> Result<Vec<f64>> {
        Ok(self.adjoint(q)?.into_iter().map(|z| z.re).collect())
    }

    /// Right-hand side `W^{1/2} g`.
    pub fn data(&self, values: &[Complex64]) -> Result<Vec<Complex64>> {
        if values.len() != self.len() {
            return Err(OdtError::Dimension(format!(
                "{} sample values for an operator with {} nodes",
                values.len(),
                self.len()
            )));
        }
        if values
            .iter()
            .any(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(OdtError::Validation(
                "sample values contain NaN or infinity".into(),
            ));
        }
        Ok(self.weigh(values.to_vec()))
    }

    /// Estimate of `‖W^{1/2} F‖` on real volumes by power iteration.
    pub fn norm_estimate(&self, iterations: usize) -> Result<f64> {
        let grid = *self.grid();
        let mut v: Vec<f64> = (0..grid.len())
            .map(|i| {
                // Deterministic start with components along all frequencies.
                let s = ((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11) as f64;
                s / (1u64 << 53) as f64 + 0.5
            })
            .collect();
        let mut estimate = 0.0;
        for _ in 0..iterations.max(1) {
            let len = norm(&v);
            if len == 0.0 {
                return Ok(0.0);
            }
            v.iter_mut().for_each(|x| *x /= len);
            let w = self.adjoint_real(&self.apply_real(&v))?;
            estimate = dot(&v, &w).max(0.0).sqrt();
            v = w;
        }
        Ok(estimate)
    }
}

/// Runs the backend selected by `params.method` and returns the volume.
pub fn reconstruct(
    samples: &KSpaceSamples,
    grid: GridSpec,
    params: &ReconParams,
) -> Result<Volume> {
    match params.method {
        Method::Bp => backpropagate(samples, grid, params.nufft),
        Method::Cg => Ok(reconstruct_cg(samples, grid, params)?.volume),
        Method::Tv => Ok(reconstruct_tv(samples, grid, params, None)?.volume),
    }
}

const CHUNK: usize = 1 << 14;

/// Sums in fixed-size chunks so the result does not depend on scheduling.
pub(crate) fn sum(a: &[f64]) -> f64 {
    a.par_chunks(CHUNK)
        .map(|c| c.iter().sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn norm_sqr_c(a: &[Complex64]) -> f64 {
    a.par_chunks(CHUNK)
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

pub(crate) fn dot_c(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .map(|(p, q)| p.conj() * q)
                .sum::<Complex64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_tags_parse() {
        assert_eq!("TV".parse::<Method>().unwrap(), Method::Tv);
        assert_eq!("bp".parse::<Method>().unwrap(), Method::Bp);
        assert!(matches!("sirt".parse::<Method>(), Err(OdtError::Config(_))));
        assert_eq!(Method::Cg.to_string(), "cg");
    }

    #[test]
    fn params_validation() {
        assert!(ReconParams::tv(0.01).validate().is_ok());
        assert!(ReconParams {
            lambda: -1.0,
            ..ReconParams::tv(0.0)
        }
        .validate()
        .is_err());
        assert!(ReconParams {
            max_iterations: 0,
            ..ReconParams::cg()
        }
        .validate()
        .is_err());
        assert!(ReconParams {
            tau: Some(0.0),
            ..ReconParams::cg()
        }
        .validate()
        .is_err());
        assert_eq!(ReconParams::cg().max_iterations, 20);
        assert_eq!(ReconParams::for_method(Method::Tv).max_iterations, 200);
    }

    #[test]
    fn chunked_sums_match_plain_sums() {
        let a: Vec<f64> = (0..40_000).map(|i| (i as f64 * 0.01).sin()).collect();
        let plain: f64 = a.iter().map(|x| x * x).sum();
        assert!((dot(&a, &a) - plain).abs() < 1e-9 * plain);
        assert!((sum(&a) - a.iter().sum::<f64>()).abs() < 1e-9);
    }
}
