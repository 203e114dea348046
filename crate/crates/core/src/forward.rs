//! Born-approximation detector fields and their conversion to k-space data.
//!
//! The scattered field at the measurement plane `x3 = r_M` relates to the
//! object's Fourier transform through
//!
//! ```text
//! F12[u_t](k1, k2, r_M) = sqrt(π/2) · i e^{iκ r_M} / κ · F[f](Φ(k1, k2, t)),
//! ```
//!
//! with `F12` the 2D transform over the detector plane normalized by `(2π)^{-1}`.
//! [`simulate`] evaluates the right-hand side and transforms it to pixels;
//! [`preprocess`] runs the same chain backwards on measured frames.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{OdtError, Result};
use crate::fft::CenteredFft2;
use crate::geometry::{KSpaceSamples, RotationTrajectory, SemisphereGrid};
use crate::phantom::{BallPhantom, GridSpec};

/// Radius of the measurement plane used by the default experiments.
pub const DEFAULT_R_M: f64 = 42.4;

/// Detector and illumination parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    /// Wave number of the incident plane wave `e^{i k0 x3}`.
    pub k0: f64,
    /// Position `r_M` of the measurement plane.
    pub r_m: f64,
    /// Detector pixels per side.
    pub detector_n: usize,
    /// Pixel pitch.
    pub pitch: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk(64)
    }
}

impl ExperimentConfig {
    /// Detector of `n` pixels spanning `[-r_M, r_M)` with `k0` at 0.6 of the
    /// detector Nyquist frequency.
    pub fn desk(n: usize) -> Self {
        let pitch = 2.0 * DEFAULT_R_M / n as f64;
        Self {
            k0: 0.6 * PI / pitch,
            r_m: DEFAULT_R_M,
            detector_n: n,
            pitch,
        }
    }

    pub fn nyquist(&self) -> f64 {
        PI / self.pitch
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k0 > 0.0 && self.k0.is_finite()) {
            return Err(OdtError::Config(format!(
                "k0 must be positive, got {}",
                self.k0
            )));
        }
        if !(self.r_m > 0.0 && self.pitch > 0.0) {
            return Err(OdtError::Config(
                "r_M and pixel pitch must be positive".into(),
            ));
        }
        if self.detector_n < 2 {
            return Err(OdtError::Config(
                "detector needs at least 2 pixels per side".into(),
            ));
        }
        if self.k0 > self.nyquist() {
            return Err(OdtError::Config(format!(
                "k0 = {} exceeds the detector Nyquist frequency {}",
                self.k0,
                self.nyquist()
            )));
        }
        Ok(())
    }

    /// Incident field `e^{i k0 r_M}` at the measurement plane.
    pub fn incident(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.k0 * self.r_m)
    }

    pub fn semisphere_grid(&self) -> SemisphereGrid {
        SemisphereGrid::new(self.k0, self.detector_n, self.pitch)
    }

    /// Voxel grid with the detector's pixel count and pitch.
    pub fn matching_grid(&self) -> GridSpec {
        GridSpec {
            n: self.detector_n,
            spacing: self.pitch,
        }
    }

    /// `sqrt(π/2) · i e^{iκ r_M} / κ`, the factor taking `F[f]` to `F12[u_t]`.
    pub fn transfer(&self, kappa: f64) -> Complex64 {
        Complex64::new(0.0, (PI / 2.0).sqrt() / kappa)
            * Complex64::from_polar(1.0, kappa * self.r_m)
    }

    fn frame_len(&self) -> usize {
        self.detector_n * self.detector_n
    }
}

/// Per-frame detector data.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameData {
    /// Total field `u_tot`.
    Complex(Vec<Complex64>),
    /// Magnitudes `|u_tot|`.
    Magnitude(Vec<f64>),
}

/// Detector images for every time sample, frame-major and row-major within a
/// frame (first detector coordinate slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementStack {
    pub config: ExperimentConfig,
    pub frames: usize,
    pub data: FrameData,
}

impl MeasurementStack {
    pub fn new(config: ExperimentConfig, frames: usize, data: FrameData) -> Result<Self> {
        let expected = frames * config.frame_len();
        let len = match &data {
            FrameData::Complex(v) => v.len(),
            FrameData::Magnitude(v) => {
                if v.iter().any(|&x| !(x >= 0.0)) {
                    return Err(OdtError::Validation(
                        "magnitude data must be nonnegative".into(),
                    ));
                }
                v.len()
            }
        };
        if len != expected {
            return Err(OdtError::Dimension(format!(
                "stack holds {len} pixels, expected {frames} frames of {}",
                config.frame_len()
            )));
        }
        Ok(Self {
            config,
            frames,
            data,
        })
    }

    pub fn is_complex(&self) -> bool {
        matches!(self.data, FrameData::Complex(_))
    }

    pub fn complex(&self) -> Result<&[Complex64]> {
        match &self.data {
            FrameData::Complex(v) => Ok(v),
            FrameData::Magnitude(_) => Err(OdtError::Contract(
                "complex field required but the stack holds magnitudes only; use phase retrieval"
                    .into(),
            )),
        }
    }

    /// `|u_tot|` of a complex stack (a magnitude stack is returned unchanged).
    pub fn magnitudes(&self) -> MeasurementStack {
        let data = match &self.data {
            FrameData::Complex(v) => FrameData::Magnitude(v.iter().map(|z| z.norm()).collect()),
            FrameData::Magnitude(v) => FrameData::Magnitude(v.clone()),
        };
        MeasurementStack {
            config: self.config,
            frames: self.frames,
            data,
        }
    }
}

/// Turns k-space values `F[f](Φ)` (frame-major over the disk nodes) into total
/// field frames. Shared by [`simulate`] and the grid-based measurement operator.
pub fn frames_from_kspace(
    config: &ExperimentConfig,
    grid: &SemisphereGrid,
    values: &[Complex64],
) -> Vec<Complex64> {
    let n = config.detector_n;
    let fft = CenteredFft2::new(n);
    let incident = config.incident();
    let transfer: Vec<Complex64> = grid
        .nodes
        .iter()
        .map(|d| config.transfer(d.kappa))
        .collect();
    // Inverse of the (2π)^{-1} p² detector quadrature.
    let scale = 2.0 * PI / (n as f64 * n as f64 * config.pitch * config.pitch);
    values
        .par_chunks(grid.len().max(1))
        .flat_map_iter(|frame_values| {
            let mut spectrum = vec![Complex64::new(0.0, 0.0); n * n];
            for ((d, &v), &tr) in grid.nodes.iter().zip(frame_values).zip(&transfer) {
                spectrum[d.pixel] = v * tr;
            }
            fft.process(&mut spectrum, true);
            spectrum.into_iter().map(move |u| u * scale + incident)
        })
        .collect()
}

/// Simulates the complex total field for every trajectory sample.
pub fn simulate(
    phantom: &BallPhantom,
    trajectory: &RotationTrajectory,
    config: &ExperimentConfig,
) -> Result<MeasurementStack> {
    config.validate()?;
    if phantom.support_radius() > config.r_m {
        return Err(OdtError::Config(format!(
            "phantom support radius {} exceeds r_M = {}",
            phantom.support_radius(),
            config.r_m
        )));
    }
    let grid = config.semisphere_grid();
    let mut samples = KSpaceSamples::nodes_for(&grid, trajectory);
    samples.values = samples
        .nodes
        .par_iter()
        .map(|k| phantom.analytic_ft(k))
        .collect();
    let frames = if grid.is_empty() {
        vec![config.incident(); trajectory.len() * config.frame_len()]
    } else {
        frames_from_kspace(config, &grid, &samples.values)
    };
    MeasurementStack::new(*config, trajectory.len(), FrameData::Complex(frames))
}

/// Simulates on a detector with `factor` times as many pixels at `1/factor`
/// the pitch, then crops every frame back to the requested detector in the
/// frequency domain.
pub fn simulate_oversampled(
    phantom: &BallPhantom,
    trajectory: &RotationTrajectory,
    config: &ExperimentConfig,
    factor: usize,
) -> Result<MeasurementStack> {
    config.validate()?;
    let fine_config = ExperimentConfig {
        detector_n: config.detector_n * factor,
        pitch: config.pitch / factor as f64,
        ..*config
    };
    let fine = simulate(phantom, trajectory, &fine_config)?;
    let (nf, n) = (fine_config.detector_n, config.detector_n);
    let fine_fft = CenteredFft2::new(nf);
    let coarse_fft = CenteredFft2::new(n);
    let incident = config.incident();
    // Both detectors span the same extent, so frequency nodes coincide.
    let to_spectrum = fine_config.pitch * fine_config.pitch / (2.0 * PI);
    let from_spectrum = 2.0 * PI / (n as f64 * n as f64 * config.pitch * config.pitch);
    let offset = nf / 2 - n / 2;
    let frames: Vec<Complex64> = fine
        .complex()?
        .par_chunks(nf * nf)
        .flat_map_iter(|frame| {
            let mut spectrum: Vec<Complex64> = frame.iter().map(|u| u - incident).collect();
            fine_fft.process(&mut spectrum, false);
            let mut cropped = vec![Complex64::new(0.0, 0.0); n * n];
            for i1 in 0..n {
                for i2 in 0..n {
                    cropped[i1 * n + i2] = spectrum[(i1 + offset) * nf + i2 + offset] * to_spectrum;
                }
            }
            coarse_fft.process(&mut cropped, true);
            cropped
                .into_iter()
                .map(move |u| u * from_spectrum + incident)
        })
        .collect();
    MeasurementStack::new(*config, trajectory.len(), FrameData::Complex(frames))
}

/// Adds i.i.d. circular complex Gaussian noise whose expected norm is
/// `level · ‖u_tot‖₂` over the whole stack. Each frame draws from its own
/// stream of a ChaCha generator seeded with `seed`.
pub fn add_noise(stack: &MeasurementStack, level: f64, seed: u64) -> Result<MeasurementStack> {
    let field = stack.complex()?;
    if !(level >= 0.0) {
        return Err(OdtError::Validation(format!(
            "noise level must be >= 0, got {level}"
        )));
    }
    if level == 0.0 {
        return Ok(stack.clone());
    }
    let energy: f64 = field.iter().map(|z| z.norm_sqr()).sum();
    let sigma = level * (energy / field.len() as f64).sqrt() / 2f64.sqrt();
    let frame_len = stack.config.frame_len();
    let noisy: Vec<Complex64> = field
        .par_chunks(frame_len)
        .enumerate()
        .flat_map_iter(|(j, frame)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            frame
                .iter()
                .map(|u| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    u + Complex64::new(re, im) * sigma
                })
                .collect::<Vec<_>>()
        })
        .collect();
    MeasurementStack::new(stack.config, stack.frames, FrameData::Complex(noisy))
}

/// Converts complex frames into k-space samples of `F[f]` on the accessible set.
///
/// Weights are the `(k1, k2, t)` cell volume `dk² · dt`.
pub fn preprocess(
    stack: &MeasurementStack,
    trajectory: &RotationTrajectory,
) -> Result<KSpaceSamples> {
    let field = stack.complex()?;
    let config = &stack.config;
    config.validate()?;
    if stack.frames != trajectory.len() {
        return Err(OdtError::Dimension(format!(
            "{} frames but {} trajectory samples",
            stack.frames,
            trajectory.len()
        )));
    }
    let grid = config.semisphere_grid();
    let mut samples = KSpaceSamples::nodes_for(&grid, trajectory);
    let n = config.detector_n;
    let fft = CenteredFft2::new(n);
    let incident = config.incident();
    let scale = config.pitch * config.pitch / (2.0 * PI);
    let inv_transfer: Vec<Complex64> = grid
        .nodes
        .iter()
        .map(|d| config.transfer(d.kappa).inv())
        .collect();
    samples.values = field
        .par_chunks(n * n)
        .flat_map_iter(|frame| {
            let mut spectrum: Vec<Complex64> = frame.iter().map(|u| u - incident).collect();
            fft.process(&mut spectrum, false);
            grid.nodes
                .iter()
                .zip(&inv_transfer)
                .map(|(d, &inv)| spectrum[d.pixel] * scale * inv)
                .collect::<Vec<_>>()
        })
        .collect();
    let cell = grid.dk * grid.dk;
    let widths = trajectory.time_cell_widths();
    samples.weights = widths
        .iter()
        .flat_map(|&w| std::iter::repeat_n(cell * w, grid.len()))
        .collect();
    Ok(samples)
}
