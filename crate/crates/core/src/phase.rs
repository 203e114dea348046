//! Phase retrieval from intensity-only detector data by hybrid input-output
//! iterations around the affine measurement operator.

use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{OdtError, Result};
use crate::forward::{
    frames_from_kspace, preprocess, ExperimentConfig, FrameData, MeasurementStack,
};
use crate::geometry::{KSpaceSamples, RotationTrajectory, SemisphereGrid};
use crate::nufft::{NufftOptions, NufftPlan};
use crate::phantom::{GridSpec, Volume};
use crate::recon::{
    cg_solve, primal_dual_solve, with_backpropagation_weights, DataOperator, DataWeighting,
    PrimalDualState, ReconParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerMethod {
    Cg,
    Tv,
}

impl FromStr for InnerMethod {
    type Err = OdtError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cg" => Ok(InnerMethod::Cg),
            "tv" => Ok(InnerMethod::Tv),
            other => Err(OdtError::Config(format!(
                "unknown inner method '{other}' (expected cg or tv)"
            ))),
        }
    }
}

impl std::fmt::Display for InnerMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InnerMethod::Cg => "cg",
            InnerMethod::Tv => "tv",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HioParams {
    /// Feedback factor β in (0, 1].
    pub beta: f64,
    /// Radius of the support ball around the origin.
    pub support_radius: f64,
    /// Outer iterations `J_HIO`.
    pub outer: usize,
    /// Iterations of the inner solver per outer step.
    pub inner: usize,
    pub inner_method: InnerMethod,
    /// TV weight of the inner primal-dual solver.
    pub lambda: f64,
    /// When set, a CG-inner run with `(outer, inner)` iterations precedes the
    /// main run and provides its starting point.
    pub cg_seed: Option<(usize, usize)>,
    pub nufft: NufftOptions,
}

impl HioParams {
    pub fn cg() -> Self {
        Self {
            beta: 0.9,
            support_radius: 40.0,
            outer: 10,
            inner: 5,
            inner_method: InnerMethod::Cg,
            lambda: 0.0,
            cg_seed: None,
            nufft: NufftOptions::default(),
        }
    }

    pub fn tv(lambda: f64) -> Self {
        Self {
            outer: 200,
            inner_method: InnerMethod::Tv,
            lambda,
            ..Self::cg()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(OdtError::Config(format!(
                "beta must lie in (0, 1], got {}",
                self.beta
            )));
        }
        if !(self.support_radius > 0.0) {
            return Err(OdtError::Config(format!(
                "support radius must be positive, got {}",
                self.support_radius
            )));
        }
        if self.outer == 0 || self.inner == 0 {
            return Err(OdtError::Config(
                "outer and inner iteration counts must be >= 1".into(),
            ));
        }
        if !(self.lambda >= 0.0) {
            return Err(OdtError::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if let Some((o, i)) = self.cg_seed {
            if o == 0 || i == 0 {
                return Err(OdtError::Config(
                    "CG seed iteration counts must be >= 1".into(),
                ));
            }
        }
        Ok(())
    }

    fn inner_params(&self, method: InnerMethod) -> ReconParams {
        match method {
            InnerMethod::Cg => ReconParams {
                max_iterations: self.inner,
                nufft: self.nufft,
                ..ReconParams::cg()
            },
            InnerMethod::Tv => ReconParams {
                max_iterations: self.inner,
                nufft: self.nufft,
                ..ReconParams::tv(self.lambda)
            },
        }
    }
}

/// `sgn(z) = z / |z|`, and `1` at zero.
pub fn sgn(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        z / r
    }
}

/// Measurement operator `D` and its regularized inverses for one experiment,
/// with the nonuniform transform planned once.
#[derive(Debug, Clone)]
pub struct MeasurementModel {
    config: ExperimentConfig,
    trajectory: RotationTrajectory,
    detector: SemisphereGrid,
    uniform: DataOperator,
    weighted: DataOperator,
}

impl MeasurementModel {
    pub fn new(
        config: ExperimentConfig,
        trajectory: RotationTrajectory,
        grid: GridSpec,
        options: NufftOptions,
    ) -> Result<Self> {
        config.validate()?;
        let detector = config.semisphere_grid();
        let mut template = KSpaceSamples::nodes_for(&detector, &trajectory);
        let cell = detector.dk * detector.dk;
        let widths = trajectory.time_cell_widths();
        template.weights = widths
            .iter()
            .flat_map(|&w| std::iter::repeat_n(cell * w, detector.len()))
            .collect();
        let template = with_backpropagation_weights(&template, &trajectory)?;
        let plan = NufftPlan::new(grid, &template.nodes, options).map_err(|e| match e {
            OdtError::Validation(m) => {
                OdtError::Config(format!("grid and detector do not match: {m}"))
            }
            other => other,
        })?;
        let voxel = grid.spacing.powi(3);
        let weights = template.weights.iter().map(|w| w / voxel).collect();
        Ok(Self {
            config,
            trajectory,
            detector,
            uniform: DataOperator::new(plan.clone(), None)?,
            weighted: DataOperator::new(plan, Some(weights))?,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        self.uniform.grid()
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    fn operator(&self, params: &ReconParams) -> &DataOperator {
        match params.weighting {
            DataWeighting::Uniform => &self.uniform,
            DataWeighting::Quadrature => &self.weighted,
        }
    }

    /// `D(f)`: total field frames produced by the volume `f`.
    pub fn measure(&self, f: &[f64]) -> Result<MeasurementStack> {
        if f.len() != self.grid().len() {
            return Err(OdtError::Dimension(format!(
                "volume has {} voxels, model grid has {}",
                f.len(),
                self.grid().len()
            )));
        }
        let values = self.uniform.plan().apply_real(f);
        let frames = frames_from_kspace(&self.config, &self.detector, &values);
        MeasurementStack::new(
            self.config,
            self.trajectory.len(),
            FrameData::Complex(frames),
        )
    }

    /// Runs the inner solver on complex frames. For the primal-dual solver the
    /// state is taken from and returned through `warm`.
    pub fn invert(
        &self,
        stack: &MeasurementStack,
        method: InnerMethod,
        params: &HioParams,
        warm: Option<PrimalDualState>,
    ) -> Result<(Volume, Option<PrimalDualState>)> {
        let samples = preprocess(stack, &self.trajectory)?;
        let inner = params.inner_params(method);
        let op = self.operator(&inner);
        match method {
            InnerMethod::Cg => Ok((
                cg_solve(op, &samples.values, inner.max_iterations, 0.0)?.volume,
                None,
            )),
            InnerMethod::Tv => {
                let out = primal_dual_solve(op, &samples.values, &inner, warm)?;
                Ok((out.volume, Some(out.state)))
            }
        }
    }

    /// Fresh primal-dual state for the inner TV solver starting at `f`.
    pub fn tv_state_at(&self, params: &HioParams, f: Vec<f64>) -> Result<PrimalDualState> {
        let inner = params.inner_params(InnerMethod::Tv);
        PrimalDualState::starting_at(self.operator(&inner), &inner, f)
    }
}

/// `D(f)` on the detector grid matching `config`.
pub fn measure_affine(
    volume: &Volume,
    trajectory: &RotationTrajectory,
    config: &ExperimentConfig,
) -> Result<MeasurementStack> {
    MeasurementModel::new(
        *config,
        trajectory.clone(),
        volume.grid,
        NufftOptions::default(),
    )?
    .measure(&volume.data)
}

/// One application of `D⁻¹`: preprocessing followed by `params.inner`
/// iterations of the inner solver on the detector-matched grid.
pub fn inverse_regularized(
    stack: &MeasurementStack,
    trajectory: &RotationTrajectory,
    params: &HioParams,
    warm: Option<PrimalDualState>,
) -> Result<(Volume, Option<PrimalDualState>)> {
    params.validate()?;
    let model = MeasurementModel::new(
        stack.config,
        trajectory.clone(),
        stack.config.matching_grid(),
        params.nufft,
    )?;
    model.invert(stack, params.inner_method, params, warm)
}

/// Support and nonnegativity projection `f̃`.
pub fn project(grid: &GridSpec, f: &[f64], support_radius: f64) -> Vec<f64> {
    let r2 = support_radius * support_radius;
    f.par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let x = grid.point(i);
            if x[0] * x[0] + x[1] * x[1] + x[2] * x[2] <= r2 {
                v.max(0.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// HIO feedback: voxels where `f` equals its projection pass through, all
/// others become `previous − β (f − f̃)`.
pub fn feedback(f: &[f64], projected: &[f64], previous: &[f64], beta: f64) -> Vec<f64> {
    f.iter()
        .zip(projected)
        .zip(previous)
        .map(|((&v, &p), &prev)| if v == p { v } else { prev - beta * (v - p) })
        .collect()
}

#[derive(Debug, Clone)]
pub struct HioOutcome {
    /// Projected final iterate.
    pub volume: Volume,
    /// `max |(|g^(j+1)| − d)| / max(d)` after every outer step, including
    /// the steps of a CG seeding run.
    pub magnitude_defect: Vec<f64>,
    pub outer_iterations: usize,
}

struct HioRun<'a> {
    model: &'a MeasurementModel,
    d: &'a [f64],
    g: Vec<Complex64>,
    previous: Vec<f64>,
    defect: Vec<f64>,
}

impl HioRun<'_> {
    fn step(
        &mut self,
        method: InnerMethod,
        params: &HioParams,
        warm: Option<PrimalDualState>,
    ) -> Result<Option<PrimalDualState>> {
        let grid = *self.model.grid();
        let stack = MeasurementStack::new(
            *self.model.config(),
            self.model.trajectory.len(),
            FrameData::Complex(self.g.clone()),
        )?;
        let (f, state) = self.model.invert(&stack, method, params, warm)?;
        let projected = project(&grid, &f.data, params.support_radius);
        let half = feedback(&f.data, &projected, &self.previous, params.beta);
        let measured = self.model.measure(&half)?;
        let field = measured.complex()?;
        self.g = field
            .iter()
            .zip(self.d)
            .map(|(&z, &d)| sgn(z) * d)
            .collect();
        let scale = self
            .d
            .iter()
            .cloned()
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let defect = self
            .g
            .iter()
            .zip(self.d)
            .map(|(z, d)| (z.norm() - d).abs())
            .fold(0.0, f64::max)
            / scale;
        self.defect.push(defect);
        self.previous = half;
        Ok(state)
    }
}

/// Hybrid input-output phase retrieval from magnitude frames `d`.
///
/// Starts from `g = d` with zero phase and `f^(-1/2) = 0`, and returns the
/// support-projected `D⁻¹ g` after `params.outer` outer steps.
pub fn hio(
    d: &MeasurementStack,
    trajectory: &RotationTrajectory,
    params: &HioParams,
) -> Result<HioOutcome> {
    let grid = d.config.matching_grid();
    let model = MeasurementModel::new(d.config, trajectory.clone(), grid, params.nufft)?;
    hio_with_model(d, &model, params)
}

/// [`hio`] on a prepared [`MeasurementModel`].
pub fn hio_with_model(
    d: &MeasurementStack,
    model: &MeasurementModel,
    params: &HioParams,
) -> Result<HioOutcome> {
    params.validate()?;
    let magnitudes = match &d.data {
        FrameData::Magnitude(m) => m.clone(),
        FrameData::Complex(_) => {
            return Err(OdtError::Contract(
                "phase retrieval expects magnitude frames; use known-phase reconstruction for complex data".into(),
            ))
        }
    };
    if let Some(i) = magnitudes.iter().position(|v| !(*v >= 0.0)) {
        return Err(OdtError::Validation(format!(
            "magnitude data must be >= 0, entry {i} is {}",
            magnitudes[i]
        )));
    }
    if d.config != *model.config() || d.frames != model.trajectory.len() {
        return Err(OdtError::Config(
            "magnitude stack does not match the measurement model".into(),
        ));
    }
    log::info!(
        "hio: beta {}, support radius {}, inner {} x {}, outer {}",
        params.beta,
        params.support_radius,
        params.inner_method,
        params.inner,
        params.outer
    );
    let grid = *model.grid();
    let mut run = HioRun {
        model,
        d: &magnitudes,
        g: magnitudes.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        previous: vec![0.0; grid.len()],
        defect: Vec::new(),
    };

    let mut warm = None;
    if let Some((outer, inner)) = params.cg_seed {
        let seed_params = HioParams { inner, ..*params };
        for j in 0..outer {
            run.step(InnerMethod::Cg, &seed_params, None)?;
            log::debug!(
                "hio cg seed step {j}: magnitude defect {:.3e}",
                run.defect[j]
            );
        }
        let stack = MeasurementStack::new(d.config, d.frames, FrameData::Complex(run.g.clone()))?;
        let (f, _) = model.invert(&stack, InnerMethod::Cg, &seed_params, None)?;
        if params.inner_method == InnerMethod::Tv {
            warm = Some(model.tv_state_at(params, f.data)?);
        }
    }

    for j in 0..params.outer {
        warm = run.step(params.inner_method, params, warm)?;
        log::debug!(
            "hio step {j}: magnitude defect {:.3e}",
            run.defect.last().unwrap()
        );
    }
    let stack = MeasurementStack::new(d.config, d.frames, FrameData::Complex(run.g.clone()))?;
    let (f, _) = model.invert(&stack, params.inner_method, params, warm)?;
    let projected = project(&grid, &f.data, params.support_radius);
    Ok(HioOutcome {
        volume: Volume::from_data(grid, projected)?,
        magnitude_defect: run.defect,
        outer_iterations: params.outer,
    })
}
