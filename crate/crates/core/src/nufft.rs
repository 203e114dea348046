//! Nonuniform discrete Fourier transform from the voxel grid to k-space.
//!
//! The operator is the Riemann-sum discretization of the 3D Fourier transform,
//!
//! ```text
//! (F f)_m = (2π)^{-3/2} h³ Σ_ℓ f_ℓ exp(-i x_ℓ · k_m),    x_ℓ = h ℓ,
//! ```
//!
//! evaluated either by direct summation ([`ndft_direct`]) or by gridding on a
//! twice-oversampled FFT grid with an exponential-of-semicircle window
//! ([`NufftPlan`]).

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{OdtError, Result};
use crate::fft::Fft3;
use crate::phantom::{GridSpec, FT3_NORM};
use crate::Vec3;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Quadrature constant `(2π)^{-3/2} h³` of the discretized transform.
pub fn quadrature_scale(grid: &GridSpec) -> f64 {
    FT3_NORM * grid.spacing.powi(3)
}

/// Literal triple-sum evaluation, `O(N³ M)`. Intended for small problems and
/// as the reference for [`NufftPlan`].
pub fn ndft_direct(grid: &GridSpec, volume: &[Complex64], nodes: &[Vec3]) -> Vec<Complex64> {
    assert_eq!(volume.len(), grid.len());
    let scale = quadrature_scale(grid);
    nodes
        .par_iter()
        .map(|k| {
            let mut acc = ZERO;
            for (i, &f) in volume.iter().enumerate() {
                let x = grid.point(i);
                let phase = -(x[0] * k[0] + x[1] * k[1] + x[2] * k[2]);
                acc += f * Complex64::from_polar(1.0, phase);
            }
            acc * scale
        })
        .collect()
}

/// Adjoint of [`ndft_direct`]: `f_ℓ = (2π)^{-3/2} h³ Σ_m v_m exp(i x_ℓ · k_m)`.
pub fn ndft_direct_adjoint(
    grid: &GridSpec,
    values: &[Complex64],
    nodes: &[Vec3],
) -> Vec<Complex64> {
    assert_eq!(values.len(), nodes.len());
    let scale = quadrature_scale(grid);
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.point(i);
            let mut acc = ZERO;
            for (k, &v) in nodes.iter().zip(values) {
                let phase = x[0] * k[0] + x[1] * k[1] + x[2] * k[2];
                acc += v * Complex64::from_polar(1.0, phase);
            }
            acc * scale
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NufftOptions {
    /// Ratio of the FFT grid size to the voxel grid size.
    pub oversampling: f64,
    /// Window support in oversampled grid points per axis.
    pub width: usize,
}

impl Default for NufftOptions {
    fn default() -> Self {
        Self {
            oversampling: 2.0,
            width: 8,
        }
    }
}

/// Exponential-of-semicircle window `exp(β (sqrt(1 - z²) - 1))` on `|z| ≤ 1`.
#[derive(Debug, Clone, Copy)]
struct EsKernel {
    beta: f64,
    half_width: f64,
}

impl EsKernel {
    fn new(width: usize, oversampling: f64) -> Self {
        // Shape parameter tuned for the given oversampling.
        let beta = PI * width as f64 * (1.0 - 0.5 / oversampling) * 0.98;
        Self {
            beta,
            half_width: width as f64 / 2.0,
        }
    }

    /// Window at offset `t`, in oversampled grid units.
    fn eval(&self, t: f64) -> f64 {
        let z = t / self.half_width;
        if z.abs() >= 1.0 {
            0.0
        } else {
            (self.beta * ((1.0 - z * z).sqrt() - 1.0)).exp()
        }
    }

    /// Continuous Fourier transform `∫ φ(t) cos(ξ t) dt`.
    fn transform(&self, xi: f64, rule: &[(f64, f64)]) -> f64 {
        // Even integrand: integrate over [0, half_width] and double.
        let a = self.half_width;
        2.0 * rule
            .iter()
            .map(|&(x, w)| {
                let t = 0.5 * a * (x + 1.0);
                0.5 * a * w * self.eval(t) * (xi * t).cos()
            })
            .sum::<f64>()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule
}

/// Gridding plan for a fixed voxel grid and node set.
///
/// The plan is immutable after construction and can be shared across threads.
#[derive(Debug, Clone)]
pub struct NufftPlan {
    grid: GridSpec,
    options: NufftOptions,
    fine: usize,
    scale: f64,
    starts: Vec<[usize; 3]>,
    // Node-major, then axis, then window tap.
    taps: Vec<f64>,
    // Reciprocal window transform per centered voxel index.
    deconv: Vec<f64>,
    // Node indices grouped by the first z plane of their footprint.
    by_plane: Vec<Vec<u32>>,
    fft: Fft3,
}

impl NufftPlan {
    pub fn new(grid: GridSpec, nodes: &[Vec3], options: NufftOptions) -> Result<Self> {
        if !(options.oversampling >= 1.25) {
            return Err(OdtError::Config(format!(
                "oversampling must be at least 1.25, got {}",
                options.oversampling
            )));
        }
        if options.width < 4 {
            return Err(OdtError::Config(format!(
                "kernel width must be at least 4, got {}",
                options.width
            )));
        }
        let mut fine = (options.oversampling * grid.n as f64).ceil() as usize;
        fine += fine % 2;
        if fine < 2 * options.width {
            fine = 2 * options.width;
        }
        let h = grid.spacing;
        let limit = PI / h * (1.0 + 1e-9);
        if let Some(i) = nodes
            .iter()
            .position(|k| k.iter().any(|c| !(c.abs() <= limit)))
        {
            return Err(OdtError::Validation(format!(
                "node {i} = {:?} is outside the representable band |k_j| <= π/h = {}",
                nodes[i],
                PI / h
            )));
        }

        let kernel = EsKernel::new(options.width, options.oversampling);
        let w = options.width;
        let mut starts = Vec::with_capacity(nodes.len());
        let mut taps = Vec::with_capacity(nodes.len() * 3 * w);
        for k in nodes {
            let mut start = [0usize; 3];
            for axis in 0..3 {
                let s = fine as f64 * k[axis] * h / (2.0 * PI);
                let first = (s - kernel.half_width).ceil();
                start[axis] = (first as i64).rem_euclid(fine as i64) as usize;
                taps.extend((0..w).map(|a| kernel.eval(s - (first + a as f64))));
            }
            starts.push(start);
        }

        let rule = gauss_legendre(4 * w + 40);
        let deconv = (0..grid.n)
            .map(|i| {
                let l = grid.index(i) as f64;
                1.0 / kernel.transform(2.0 * PI * l / fine as f64, &rule)
            })
            .collect();

        let mut by_plane = vec![Vec::new(); fine];
        for (m, s) in starts.iter().enumerate() {
            by_plane[s[2]].push(m as u32);
        }

        Ok(Self {
            grid,
            options,
            fine,
            scale: quadrature_scale(&grid),
            starts,
            taps,
            deconv,
            by_plane,
            fft: Fft3::new(fine),
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn options(&self) -> NufftOptions {
        self.options
    }

    pub fn num_nodes(&self) -> usize {
        self.starts.len()
    }

    fn node_taps(&self, m: usize) -> &[f64] {
        let w = self.options.width;
        &self.taps[m * 3 * w..(m + 1) * 3 * w]
    }

    /// Approximates [`ndft_direct`] for a complex volume.
    pub fn apply(&self, volume: &[Complex64]) -> Vec<Complex64> {
        let (n, fine, w) = (self.grid.n, self.fine, self.options.width);
        assert_eq!(
            volume.len(),
            self.grid.len(),
            "volume does not match plan grid"
        );
        let mut buf = vec![ZERO; fine * fine * fine];
        let wrap = |i: usize| (self.grid.index(i)).rem_euclid(fine as i64) as usize;
        for iz in 0..n {
            for iy in 0..n {
                let dyz = self.deconv[iy] * self.deconv[iz];
                let row = fine * (wrap(iy) + fine * wrap(iz));
                for ix in 0..n {
                    buf[row + wrap(ix)] =
                        volume[self.grid.offset(ix, iy, iz)] * (dyz * self.deconv[ix]);
                }
            }
        }
        let mut scratch = Vec::new();
        self.fft.process(&mut buf, &mut scratch, false);

        (0..self.num_nodes())
            .into_par_iter()
            .map(|m| {
                let taps = self.node_taps(m);
                let [sx, sy, sz] = self.starts[m];
                let mut acc = ZERO;
                for c in 0..w {
                    let z = (sz + c) % fine;
                    let mut acc_y = ZERO;
                    for b in 0..w {
                        let y = (sy + b) % fine;
                        let row = fine * (y + fine * z);
                        let mut acc_x = ZERO;
                        for a in 0..w {
                            acc_x += buf[row + (sx + a) % fine] * taps[a];
                        }
                        acc_y += acc_x * taps[w + b];
                    }
                    acc += acc_y * taps[2 * w + c];
                }
                acc * self.scale
            })
            .collect()
    }

    /// Real-volume convenience wrapper around [`NufftPlan::apply`].
    pub fn apply_real(&self, volume: &[f64]) -> Vec<Complex64> {
        let complex: Vec<Complex64> = volume.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.apply(&complex)
    }

    /// Exact adjoint of [`NufftPlan::apply`].
    pub fn adjoint(&self, values: &[Complex64]) -> Result<Vec<Complex64>> {
        if values.len() != self.num_nodes() {
            return Err(OdtError::Dimension(format!(
                "{} values for a plan with {} nodes",
                values.len(),
                self.num_nodes()
            )));
        }
        let (n, fine, w) = (self.grid.n, self.fine, self.options.width);
        let mut buf = vec![ZERO; fine * fine * fine];
        // Each z plane is owned by one task and accumulates in node order.
        buf.par_chunks_mut(fine * fine)
            .enumerate()
            .for_each(|(z, plane)| {
                for c in 0..w {
                    let start = (z + fine - c) % fine;
                    for &m in &self.by_plane[start] {
                        let m = m as usize;
                        let taps = self.node_taps(m);
                        let [sx, sy, _] = self.starts[m];
                        let vz = values[m] * (taps[2 * w + c] * self.scale);
                        for b in 0..w {
                            let row = fine * ((sy + b) % fine);
                            let vy = vz * taps[w + b];
                            for a in 0..w {
                                plane[row + (sx + a) % fine] += vy * taps[a];
                            }
                        }
                    }
                }
            });
        let mut scratch = Vec::new();
        self.fft.process(&mut buf, &mut scratch, true);

        let wrap = |i: usize| (self.grid.index(i)).rem_euclid(fine as i64) as usize;
        let mut out = vec![ZERO; self.grid.len()];
        for iz in 0..n {
            for iy in 0..n {
                let dyz = self.deconv[iy] * self.deconv[iz];
                let row = fine * (wrap(iy) + fine * wrap(iz));
                for ix in 0..n {
                    out[self.grid.offset(ix, iy, iz)] =
                        buf[row + wrap(ix)] * (dyz * self.deconv[ix]);
                }
            }
        }
        Ok(out)
    }
}

/// `Re ⟨a, b⟩` with the conjugate on the first argument.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm2(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}
