//! Ball phantoms on a uniform voxel grid.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{OdtError, Result};
use crate::geometry::{dot, norm};
use crate::Vec3;

/// `(2π)^{-3/2}`, the normalization of the 3D Fourier transform.
pub const FT3_NORM: f64 = 0.063_493_635_934_240_97;

/// Cubic voxel grid with `n` points per axis and points `x_ℓ = spacing · ℓ`,
/// `ℓ ∈ {-n/2, …, n - 1 - n/2}³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n: usize,
    pub spacing: f64,
}

impl GridSpec {
    pub fn new(n: usize, spacing: f64) -> Result<Self> {
        if n < 2 {
            return Err(OdtError::Validation(format!("grid needs n >= 2, got {n}")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(OdtError::Validation(format!(
                "grid spacing must be positive, got {spacing}"
            )));
        }
        Ok(Self { n, spacing })
    }

    /// Grid of `n` points spanning `[-half_width, half_width)` on each axis.
    pub fn covering(n: usize, half_width: f64) -> Result<Self> {
        Self::new(n, 2.0 * half_width / n as f64)
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Centered integer index along one axis.
    pub fn index(&self, i: usize) -> i64 {
        i as i64 - (self.n / 2) as i64
    }

    /// Flat x-fastest offset of `(ix, iy, iz)`.
    pub fn offset(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.n * (iy + self.n * iz)
    }

    pub fn point(&self, flat: usize) -> Vec3 {
        let n = self.n;
        let (ix, iy, iz) = (flat % n, (flat / n) % n, flat / (n * n));
        [
            self.spacing * self.index(ix) as f64,
            self.spacing * self.index(iy) as f64,
            self.spacing * self.index(iz) as f64,
        ]
    }
}

/// Real scalar field sampled on a [`GridSpec`], x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub grid: GridSpec,
    pub data: Vec<f64>,
}

impl Volume {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            data: vec![0.0; grid.len()],
        }
    }

    pub fn from_data(grid: GridSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(OdtError::Dimension(format!(
                "volume holds {} values but the grid has {}",
                data.len(),
                grid.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(OdtError::Validation(
                "volume contains non-finite values".into(),
            ));
        }
        Ok(Self { grid, data })
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// The `z = 0` slice, row-major with `x` fastest.
    pub fn central_slice(&self) -> Vec<f64> {
        let n = self.grid.n;
        let iz = n / 2;
        self.data[n * n * iz..n * n * (iz + 1)].to_vec()
    }
}

/// One homogeneous ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ball {
    pub center: Vec3,
    pub radius: f64,
    pub amplitude: f64,
}

/// Superposition of balls. Amplitudes may be negative (to carve holes) as long
/// as the summed field stays nonnegative.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BallPhantom {
    pub balls: Vec<Ball>,
}

impl BallPhantom {
    pub fn new(balls: Vec<Ball>) -> Result<Self> {
        if let Some(i) = balls.iter().position(|b| !(b.radius > 0.0)) {
            return Err(OdtError::Validation(format!(
                "ball {i} has non-positive radius"
            )));
        }
        if balls
            .iter()
            .any(|b| !(b.amplitude.is_finite() && b.center.iter().all(|c| c.is_finite())))
        {
            return Err(OdtError::Validation(
                "ball parameters must be finite".into(),
            ));
        }
        Ok(Self { balls })
    }

    /// A cartoon "cell": an outer ball of radius 30 with three organelles.
    /// Values lie in `[0, 1]` and the support in `‖x‖ ≤ 30`.
    pub fn default_cell() -> Self {
        let ball = |center: Vec3, radius: f64, amplitude: f64| Ball {
            center,
            radius,
            amplitude,
        };
        Self {
            balls: vec![
                ball([0.0, 0.0, 0.0], 30.0, 0.6),
                ball([10.0, 5.0, -4.0], 8.0, 0.4),
                ball([-9.0, -8.0, 6.0], 6.0, 0.3),
                ball([2.0, -12.0, -10.0], 5.0, 0.4),
            ],
        }
    }

    /// Scales every amplitude by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            balls: self
                .balls
                .iter()
                .map(|b| Ball {
                    amplitude: b.amplitude * factor,
                    ..*b
                })
                .collect(),
        }
    }

    /// Radius of the smallest origin-centered ball containing the support.
    pub fn support_radius(&self) -> f64 {
        self.balls
            .iter()
            .map(|b| norm(&b.center) + b.radius)
            .fold(0.0, f64::max)
    }

    pub fn value_at(&self, x: &Vec3) -> f64 {
        self.balls
            .iter()
            .filter(|b| {
                let d = [x[0] - b.center[0], x[1] - b.center[1], x[2] - b.center[2]];
                dot(&d, &d) <= b.radius * b.radius
            })
            .map(|b| b.amplitude)
            .sum()
    }

    /// Samples the phantom at the grid points. Fails if the summed field is
    /// negative anywhere on the grid.
    pub fn eval_grid(&self, grid: &GridSpec) -> Result<Volume> {
        let data: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|i| self.value_at(&grid.point(i)))
            .collect();
        if let Some(i) = data.iter().position(|&v| v < 0.0) {
            let n = grid.n;
            return Err(OdtError::Validation(format!(
                "phantom is negative ({}) at voxel ({}, {}, {})",
                data[i],
                i % n,
                (i / n) % n,
                i / (n * n)
            )));
        }
        Ok(Volume { grid: *grid, data })
    }

    /// Closed-form `F[f](k) = (2π)^{-3/2} ∫ f(x) e^{-i x·k} dx`.
    pub fn analytic_ft(&self, k: &Vec3) -> Complex64 {
        let rho = norm(k);
        self.balls
            .iter()
            .map(|b| {
                let shift = Complex64::from_polar(1.0, -dot(k, &b.center));
                shift * (b.amplitude * FT3_NORM * ball_transform(b.radius, rho))
            })
            .sum()
    }

    /// Sum of amplitude-weighted ball volumes, `∫ f`.
    pub fn integral(&self) -> f64 {
        self.balls
            .iter()
            .map(|b| b.amplitude * 4.0 / 3.0 * PI * b.radius.powi(3))
            .sum()
    }
}

/// Below this value of `Rρ` the ball transform switches to its Taylor series.
pub const SERIES_SWITCH: f64 = 0.05;

/// `∫_{‖x‖≤R} e^{-i k·x} dx = 4π (sin(Rρ) - Rρ cos(Rρ)) / ρ³` with `ρ = ‖k‖`.
pub fn ball_transform(radius: f64, rho: f64) -> f64 {
    let u = radius * rho;
    let shape = if u < SERIES_SWITCH {
        // (sin u - u cos u) / u³ = Σ (-1)^n (2n + 2) u^{2n} / (2n + 3)!
        let u2 = u * u;
        1.0 / 3.0 - u2 / 30.0 + u2 * u2 / 840.0 - u2 * u2 * u2 / 45_360.0
            + u2 * u2 * u2 * u2 / 3_991_680.0
    } else {
        (u.sin() - u * u.cos()) / (u * u * u)
    };
    4.0 * PI * radius.powi(3) * shape
}
