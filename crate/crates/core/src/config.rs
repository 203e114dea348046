//! Run configuration files (TOML with `[paths]`, `[experiment]`, `[recon]`
//! and `[hio]` sections). Every key is optional.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{OdtError, Result};
use crate::forward::{ExperimentConfig, DEFAULT_R_M};
use crate::geometry::RotationTrajectory;
use crate::nufft::NufftOptions;
use crate::phase::{HioParams, InnerMethod};
use crate::recon::{DataWeighting, Method, ReconParams};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub recon: ReconSection,
    #[serde(default)]
    pub hio: HioSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    /// Ball phantom file; the built-in cell phantom when absent.
    pub phantom: Option<PathBuf>,
    /// Trajectory file; generated from `[experiment]` when absent.
    pub trajectory: Option<PathBuf>,
    pub measurements: Option<PathBuf>,
    /// Reference volume directory used for the metrics.
    pub reference: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub detector_n: Option<usize>,
    pub r_m: Option<f64>,
    pub pitch: Option<f64>,
    pub k0: Option<f64>,
    pub frames: Option<usize>,
    /// `moving` (default) or `fixed`.
    pub trajectory: Option<String>,
    /// Rotation axis for `fixed` trajectories.
    pub axis: Option<[f64; 3]>,
    /// Detector refinement factor of the simulation.
    pub oversampling: Option<usize>,
    pub noise: Option<f64>,
    pub magnitude: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconSection {
    pub method: Option<String>,
    pub lambda: Option<f64>,
    pub iterations: Option<usize>,
    pub cg_tolerance: Option<f64>,
    pub tau: Option<f64>,
    pub sigma: Option<f64>,
    pub backtracking: Option<f64>,
    pub nonnegative: Option<bool>,
    pub weighting: Option<String>,
    pub nufft_width: Option<usize>,
    pub nufft_oversampling: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HioSection {
    pub beta: Option<f64>,
    pub support_radius: Option<f64>,
    pub outer: Option<usize>,
    pub inner: Option<usize>,
    pub inner_method: Option<String>,
    pub lambda: Option<f64>,
    pub cg_seed_outer: Option<usize>,
    pub cg_seed_inner: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| OdtError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| OdtError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            OdtError::Config(m) => OdtError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let e = &self.experiment;
        let n = e.detector_n.unwrap_or(64);
        let r_m = e.r_m.unwrap_or(DEFAULT_R_M);
        let pitch = e.pitch.unwrap_or(2.0 * r_m / n as f64);
        let config = ExperimentConfig {
            k0: e.k0.unwrap_or(0.6 * PI / pitch),
            r_m,
            detector_n: n,
            pitch,
        };
        config.validate()?;
        Ok(config)
    }

    /// Trajectory from `[experiment]`: the moving axis with `frames` samples
    /// over one period, or a fixed axis turning once.
    pub fn generated_trajectory(&self) -> Result<RotationTrajectory> {
        let frames = self.experiment.frames.unwrap_or(120);
        match self.experiment.trajectory.as_deref().unwrap_or("moving") {
            "moving" => RotationTrajectory::moving_axis(frames),
            "fixed" => {
                let axis = self.experiment.axis.unwrap_or([0.0, 0.0, 1.0]);
                let end = 2.0 * PI * (frames as f64 - 1.0) / frames as f64;
                RotationTrajectory::fixed_axis(axis, frames, end)
            }
            other => Err(OdtError::Config(format!(
                "unknown trajectory kind '{other}' (expected moving or fixed)"
            ))),
        }
    }

    pub fn oversampling(&self) -> Result<usize> {
        match self.experiment.oversampling.unwrap_or(2) {
            0 => Err(OdtError::Config(
                "simulation oversampling must be >= 1".into(),
            )),
            f => Ok(f),
        }
    }

    pub fn noise(&self) -> Result<f64> {
        let level = self.experiment.noise.unwrap_or(0.0);
        if !(level >= 0.0) {
            return Err(OdtError::Config(format!(
                "noise level must be >= 0, got {level}"
            )));
        }
        Ok(level)
    }

    fn nufft(&self) -> NufftOptions {
        let d = NufftOptions::default();
        NufftOptions {
            oversampling: self.recon.nufft_oversampling.unwrap_or(d.oversampling),
            width: self.recon.nufft_width.unwrap_or(d.width),
        }
    }

    pub fn recon_params(&self) -> Result<ReconParams> {
        let r = &self.recon;
        let method: Method = r.method.as_deref().unwrap_or("tv").parse()?;
        let base = ReconParams::for_method(method);
        let params = ReconParams {
            lambda: r.lambda.unwrap_or(base.lambda),
            max_iterations: r.iterations.unwrap_or(base.max_iterations),
            cg_tolerance: r.cg_tolerance.unwrap_or(base.cg_tolerance),
            tau: r.tau.or(base.tau),
            sigma: r.sigma.or(base.sigma),
            backtracking: r.backtracking.unwrap_or(base.backtracking),
            nonnegative: r.nonnegative.unwrap_or(base.nonnegative),
            weighting: match &r.weighting {
                Some(w) => w.parse::<DataWeighting>()?,
                None => base.weighting,
            },
            nufft: self.nufft(),
            ..base
        };
        params.validate()?;
        Ok(params)
    }

    pub fn hio_params(&self) -> Result<HioParams> {
        let h = &self.hio;
        let inner: InnerMethod = h.inner_method.as_deref().unwrap_or("tv").parse()?;
        let base = match inner {
            InnerMethod::Cg => HioParams::cg(),
            InnerMethod::Tv => HioParams::tv(0.01),
        };
        let cg_seed = match (h.cg_seed_outer, h.cg_seed_inner) {
            (None, None) => None,
            (o, i) => Some((o.unwrap_or(10), i.unwrap_or(5))),
        };
        let params = HioParams {
            beta: h.beta.unwrap_or(base.beta),
            support_radius: h.support_radius.unwrap_or(base.support_radius),
            outer: h.outer.unwrap_or(base.outer),
            inner: h.inner.unwrap_or(base.inner),
            lambda: h.lambda.unwrap_or(base.lambda),
            cg_seed,
            nufft: self.nufft(),
            ..base
        };
        params.validate()?;
        Ok(params)
    }
}
