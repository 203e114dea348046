//! Rotation trajectories and k-space geometry.
//!
//! A measurement at time `t` with detector frequency `(k1, k2)` samples the
//! Fourier transform of the object at
//!
//! ```text
//! Φ(k1, k2, t) = R(t) (k1, k2, κ - k0),    κ = sqrt(k0² - k1² - k2²)
//! ```
//!
//! where `R(t)` is the rotation built by [`rodrigues`] from the trajectory's
//! axis and angle. The image of `Φ` is a union of rotated semispheres through
//! the origin.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{OdtError, Result};
use crate::Vec3;

pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Proper rotation of R³, stored row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(pub [[f64; 3]; 3]);

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix =
        RotationMatrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        let m = &self.0;
        [dot(&m[0], v), dot(&m[1], v), dot(&m[2], v)]
    }

    pub fn transpose(&self) -> RotationMatrix {
        let m = &self.0;
        let mut t = [[0.0; 3]; 3];
        for (i, row) in t.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = m[j][i];
            }
        }
        RotationMatrix(t)
    }

    pub fn compose(&self, other: &RotationMatrix) -> RotationMatrix {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|l| self.0[i][l] * other.0[l][j]).sum();
            }
        }
        RotationMatrix(out)
    }

    pub fn determinant(&self) -> f64 {
        det3(&self.0[0], &self.0[1], &self.0[2])
    }

    /// Frobenius norm of `RᵀR - I`.
    pub fn orthogonality_defect(&self) -> f64 {
        let p = self.transpose().compose(self);
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let e = p.0[i][j] - if i == j { 1.0 } else { 0.0 };
                acc += e * e;
            }
        }
        acc.sqrt()
    }

    /// Inverse of [`rodrigues`]: a unit axis and an angle in `[0, π]`.
    pub fn axis_angle(&self) -> (Vec3, f64) {
        // rodrigues returns the transpose of the standard counterclockwise
        // rotation, so read the axis off Rᵀ.
        let m = self.transpose().0;
        let cos = ((m[0][0] + m[1][1] + m[2][2] - 1.0) / 2.0).clamp(-1.0, 1.0);
        let angle = cos.acos();
        let skew = [m[2][1] - m[1][2], m[0][2] - m[2][0], m[1][0] - m[0][1]];
        let skew_norm = norm(&skew);
        if angle < 1e-12 {
            return ([0.0, 0.0, 1.0], 0.0);
        }
        if skew_norm > 1e-6 {
            return (
                [
                    skew[0] / skew_norm,
                    skew[1] / skew_norm,
                    skew[2] / skew_norm,
                ],
                angle,
            );
        }
        // Near a half turn: n nᵀ = (M + I) / 2.
        let sym = |i: usize, j: usize| (m[i][j] + if i == j { 1.0 } else { 0.0 }) / 2.0;
        let pivot = (0..3)
            .max_by(|&a, &b| sym(a, a).total_cmp(&sym(b, b)))
            .unwrap_or(0);
        let mut axis = [sym(0, pivot), sym(1, pivot), sym(2, pivot)];
        let len = norm(&axis);
        axis.iter_mut().for_each(|v| *v /= len);
        (axis, angle)
    }
}

fn det3(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    dot(a, &cross(b, c))
}

/// Rotation `R_{n,α}` whose transpose is the counterclockwise rotation by `α`
/// about the unit axis `n`.
pub fn rodrigues(axis: &Vec3, angle: f64) -> Result<RotationMatrix> {
    let len = norm(axis);
    if !len.is_finite() || (len - 1.0).abs() > 1e-9 {
        return Err(OdtError::Validation(format!(
            "rotation axis must be a unit vector, got norm {len}"
        )));
    }
    let [n1, n2, n3] = *axis;
    let (s, c) = angle.sin_cos();
    let d = 1.0 - c;
    let counterclockwise = [
        [n1 * n1 * d + c, n1 * n2 * d - n3 * s, n1 * n3 * d + n2 * s],
        [n1 * n2 * d + n3 * s, n2 * n2 * d + c, n2 * n3 * d - n1 * s],
        [n1 * n3 * d - n2 * s, n2 * n3 * d + n1 * s, n3 * n3 * d + c],
    ];
    Ok(RotationMatrix(counterclockwise).transpose())
}

/// Sampled rotation history: unit axes `n(t_j)` and angles `α(t_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationTrajectory {
    times: Vec<f64>,
    axes: Vec<Vec3>,
    angles: Vec<f64>,
}

impl RotationTrajectory {
    pub fn new(times: Vec<f64>, axes: Vec<Vec3>, angles: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(OdtError::Validation(
                "trajectory needs at least one sample".into(),
            ));
        }
        if times.len() != axes.len() || times.len() != angles.len() {
            return Err(OdtError::Dimension(format!(
                "trajectory arrays differ in length: {} times, {} axes, {} angles",
                times.len(),
                axes.len(),
                angles.len()
            )));
        }
        for (j, axis) in axes.iter().enumerate() {
            let len = norm(axis);
            if !len.is_finite() || (len - 1.0).abs() > 1e-12 {
                return Err(OdtError::Validation(format!(
                    "axis {j} has norm {len}, expected 1"
                )));
            }
        }
        if times.iter().chain(&angles).any(|v| !v.is_finite()) {
            return Err(OdtError::Validation("non-finite trajectory entry".into()));
        }
        if let Some(j) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(OdtError::Validation(format!(
                "times must be strictly increasing (sample {})",
                j + 1
            )));
        }
        Ok(Self {
            times,
            axes,
            angles,
        })
    }

    /// Constant axis with `α(t) = t` on `samples` equispaced times in `[0, end)`.
    pub fn fixed_axis(axis: Vec3, samples: usize, end: f64) -> Result<Self> {
        let len = norm(&axis);
        let axis = [axis[0] / len, axis[1] / len, axis[2] / len];
        let times: Vec<f64> = (0..samples)
            .map(|j| end * j as f64 / samples as f64)
            .collect();
        let angles = times.clone();
        Self::new(times, vec![axis; samples], angles)
    }

    /// The moving axis `n(t) = (sin(π/2 sin t), cos(π/2 sin t), 0)` with
    /// `α(t) = t`, sampled at `samples` equispaced times in `[0, 2π)`.
    pub fn moving_axis(samples: usize) -> Result<Self> {
        let times: Vec<f64> = (0..samples)
            .map(|j| 2.0 * PI * j as f64 / samples as f64)
            .collect();
        let axes = times
            .iter()
            .map(|&t| {
                let (s, c) = (FRAC_PI_2 * t.sin()).sin_cos();
                [s, c, 0.0]
            })
            .collect();
        let angles = times.clone();
        Self::new(times, axes, angles)
    }

    /// Builds a trajectory from rotation matrices in the [`rodrigues`] convention.
    pub fn from_rotations(times: Vec<f64>, rotations: &[RotationMatrix]) -> Result<Self> {
        let (axes, angles) = rotations.iter().map(RotationMatrix::axis_angle).unzip();
        Self::new(times, axes, angles)
    }

    /// The first `len` samples.
    pub fn prefix(&self, len: usize) -> Result<Self> {
        let len = len.min(self.len());
        Self::new(
            self.times[..len].to_vec(),
            self.axes[..len].to_vec(),
            self.angles[..len].to_vec(),
        )
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn axes(&self) -> &[Vec3] {
        &self.axes
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn time_range(&self) -> (f64, f64) {
        (self.times[0], self.times[self.len() - 1])
    }

    /// Median spacing between consecutive samples; `1` for a single sample.
    pub fn time_step(&self) -> f64 {
        median_step(&self.times)
    }

    /// Quadrature width of each time sample (midpoint cells).
    pub fn time_cell_widths(&self) -> Vec<f64> {
        let t = &self.times;
        let n = t.len();
        if n == 1 {
            return vec![1.0];
        }
        (0..n)
            .map(|j| {
                if j == 0 {
                    t[1] - t[0]
                } else if j == n - 1 {
                    t[n - 1] - t[n - 2]
                } else {
                    (t[j + 1] - t[j - 1]) / 2.0
                }
            })
            .collect()
    }

    pub fn rotation(&self, sample: usize) -> RotationMatrix {
        rodrigues(&self.axes[sample], self.angles[sample]).expect("axes validated on construction")
    }

    /// Axis and angle at time `t`: linear interpolation of the angle and
    /// spherical-linear interpolation of the axis. Times outside the sampled
    /// range are clamped to the nearest end.
    pub fn axis_angle_at(&self, t: f64) -> (Vec3, f64) {
        let n = self.len();
        if t <= self.times[0] || n == 1 {
            return (self.axes[0], self.angles[0]);
        }
        if t >= self.times[n - 1] {
            return (self.axes[n - 1], self.angles[n - 1]);
        }
        let j = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[j]) / (self.times[j + 1] - self.times[j]);
        let angle = self.angles[j] + w * (self.angles[j + 1] - self.angles[j]);
        (slerp(&self.axes[j], &self.axes[j + 1], w), angle)
    }

    pub fn rotation_at(&self, t: f64) -> RotationMatrix {
        let (axis, angle) = self.axis_angle_at(t);
        rodrigues(&axis, angle).expect("interpolated axis has unit norm")
    }
}

fn median_step(times: &[f64]) -> f64 {
    if times.len() < 2 {
        return 1.0;
    }
    let mut steps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    steps.sort_by(f64::total_cmp);
    steps[steps.len() / 2]
}

fn slerp(a: &Vec3, b: &Vec3, w: f64) -> Vec3 {
    let cos = dot(a, b).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let mut out = if theta < 1e-9 {
        [
            a[0] + w * (b[0] - a[0]),
            a[1] + w * (b[1] - a[1]),
            a[2] + w * (b[2] - a[2]),
        ]
    } else {
        let sa = ((1.0 - w) * theta).sin() / theta.sin();
        let sb = (w * theta).sin() / theta.sin();
        [
            sa * a[0] + sb * b[0],
            sa * a[1] + sb * b[1],
            sa * a[2] + sb * b[2],
        ]
    };
    let len = norm(&out);
    out.iter_mut().for_each(|v| *v /= len);
    out
}

/// Axial wavenumber `κ = sqrt(k0² - k1² - k2²)` on the open disk.
pub fn kappa(k1: f64, k2: f64, k0: f64) -> Result<f64> {
    let r2 = k1 * k1 + k2 * k2;
    if !(r2 < k0 * k0) {
        return Err(OdtError::Domain(format!(
            "(k1, k2) = ({k1}, {k2}) is not inside the open disk of radius k0 = {k0}"
        )));
    }
    Ok((k0 * k0 - r2).sqrt())
}

/// Unrotated semisphere point `(k1, k2, κ - k0)`.
pub fn semisphere_point(k1: f64, k2: f64, k0: f64) -> Result<Vec3> {
    Ok([k1, k2, kappa(k1, k2, k0)? - k0])
}

/// `Φ(k1, k2, t) = R(t) (k1, k2, κ - k0)`.
pub fn phi_map(k1: f64, k2: f64, t: f64, trajectory: &RotationTrajectory, k0: f64) -> Result<Vec3> {
    let s = semisphere_point(k1, k2, k0)?;
    Ok(trajectory.rotation_at(t).apply(&s))
}

/// `|det ∇Φ|` at `(k1, k2, t)`.
///
/// The `k1` and `k2` derivatives are analytic; the time derivative is a
/// central difference with the trajectory's sample spacing, one-sided at the
/// ends of the sampled range.
pub fn jacobian_weight(
    k1: f64,
    k2: f64,
    t: f64,
    trajectory: &RotationTrajectory,
    k0: f64,
) -> Result<f64> {
    let kap = kappa(k1, k2, k0)?;
    let s = [k1, k2, kap - k0];
    if trajectory.len() < 2 {
        return Ok(0.0);
    }
    let (t_min, t_max) = trajectory.time_range();
    let h = trajectory.time_step();
    let (lo, hi) = ((t - h).max(t_min), (t + h).min(t_max));
    let r_lo = trajectory.rotation_at(lo).apply(&s);
    let r_hi = trajectory.rotation_at(hi).apply(&s);
    let dt = [
        (r_hi[0] - r_lo[0]) / (hi - lo),
        (r_hi[1] - r_lo[1]) / (hi - lo),
        (r_hi[2] - r_lo[2]) / (hi - lo),
    ];
    let r = trajectory.rotation_at(t);
    let d1 = r.apply(&[1.0, 0.0, -k1 / kap]);
    let d2 = r.apply(&[0.0, 1.0, -k2 / kap]);
    Ok(det3(&d1, &d2, &dt).abs())
}

/// One detector frequency inside the open disk `k1² + k2² < k0²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskNode {
    /// Flat row-major index in a centered `n x n` frame.
    pub pixel: usize,
    pub k: [f64; 2],
    pub kappa: f64,
}

/// Detector frequency grid restricted to the open disk of radius `k0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemisphereGrid {
    pub k0: f64,
    pub detector_n: usize,
    /// Frequency spacing `2π / (n · pitch)`.
    pub dk: f64,
    pub nodes: Vec<DiskNode>,
}

impl SemisphereGrid {
    pub fn new(k0: f64, detector_n: usize, pitch: f64) -> Self {
        let dk = 2.0 * PI / (detector_n as f64 * pitch);
        let half = (detector_n / 2) as isize;
        let mut nodes = Vec::new();
        for i1 in 0..detector_n {
            for i2 in 0..detector_n {
                let k1 = (i1 as isize - half) as f64 * dk;
                let k2 = (i2 as isize - half) as f64 * dk;
                if let Ok(kappa) = kappa(k1, k2, k0) {
                    nodes.push(DiskNode {
                        pixel: i1 * detector_n + i2,
                        k: [k1, k2],
                        kappa,
                    });
                }
            }
        }
        Self {
            k0,
            detector_n,
            dk,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Nonuniform k-space data: nodes `Φ(k1, k2, t)`, values and quadrature weights.
///
/// Samples are stored frame-major; `planar` and `times` keep the `(k1, k2, t)`
/// preimage of every node.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpaceSamples {
    pub k0: f64,
    pub nodes: Vec<Vec3>,
    pub values: Vec<Complex64>,
    pub weights: Vec<f64>,
    pub planar: Vec<[f64; 2]>,
    pub times: Vec<f64>,
}

impl KSpaceSamples {
    /// Nodes of every disk frequency for every trajectory sample, with zero
    /// values and unit weights.
    pub fn nodes_for(grid: &SemisphereGrid, trajectory: &RotationTrajectory) -> Self {
        let per_frame: Vec<(Vec<Vec3>, Vec<[f64; 2]>, Vec<f64>)> = (0..trajectory.len())
            .into_par_iter()
            .map(|j| {
                let r = trajectory.rotation(j);
                let t = trajectory.times()[j];
                let nodes = grid
                    .nodes
                    .iter()
                    .map(|d| r.apply(&[d.k[0], d.k[1], d.kappa - grid.k0]))
                    .collect();
                let planar = grid.nodes.iter().map(|d| d.k).collect();
                (nodes, planar, vec![t; grid.len()])
            })
            .collect();
        let mut out = Self {
            k0: grid.k0,
            nodes: Vec::with_capacity(grid.len() * trajectory.len()),
            values: Vec::new(),
            weights: Vec::new(),
            planar: Vec::new(),
            times: Vec::new(),
        };
        for (nodes, planar, times) in per_frame {
            out.nodes.extend(nodes);
            out.planar.extend(planar);
            out.times.extend(times);
        }
        out.values = vec![Complex64::new(0.0, 0.0); out.nodes.len()];
        out.weights = vec![1.0; out.nodes.len()];
        out
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.nodes.len();
        if self.values.len() != m
            || self.weights.len() != m
            || self.planar.len() != m
            || self.times.len() != m
        {
            return Err(OdtError::Dimension(
                "k-space sample arrays differ in length".into(),
            ));
        }
        let bound = 2f64.sqrt() * self.k0 + 1e-9;
        if let Some(i) = self.nodes.iter().position(|n| norm(n) > bound) {
            return Err(OdtError::Validation(format!(
                "node {i} lies outside the ball of radius sqrt(2) k0"
            )));
        }
        if let Some(i) = self
            .weights
            .iter()
            .position(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(OdtError::Validation(format!(
                "weight {i} is negative or not finite"
            )));
        }
        Ok(())
    }
}

/// Default bin width of the multiplicity estimate, `2 k0 / 64`.
pub fn default_crofton_bin_width(k0: f64) -> f64 {
    2.0 * k0 / 64.0
}

/// Estimates the number of preimages `Card Φ⁻¹(Φ(k1, k2, t))` at every node.
///
/// Nodes are binned on a Cartesian grid of width `bin_width`. Within a bin
/// the sample times are clustered with a gap threshold of four trajectory
/// time steps; each cluster counts as one sheet of the trajectory passing
/// through the bin.
pub fn crofton_weights(samples: &KSpaceSamples, bin_width: f64) -> Vec<f64> {
    if samples.is_empty() || !(bin_width > 0.0) {
        return vec![1.0; samples.len()];
    }
    let mut distinct = samples.times.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return vec![1.0; samples.len()];
    }
    let gap = 4.0 * median_step(&distinct);

    let bin_of = |p: &Vec3| -> [i64; 3] {
        [
            (p[0] / bin_width).floor() as i64,
            (p[1] / bin_width).floor() as i64,
            (p[2] / bin_width).floor() as i64,
        ]
    };
    let mut bins: HashMap<[i64; 3], Vec<f64>> = HashMap::new();
    for (node, &t) in samples.nodes.iter().zip(&samples.times) {
        bins.entry(bin_of(node)).or_default().push(t);
    }
    let counts: HashMap<[i64; 3], f64> = bins
        .into_iter()
        .map(|(key, mut times)| {
            times.sort_by(f64::total_cmp);
            let clusters = 1 + times.windows(2).filter(|w| w[1] - w[0] > gap).count();
            (key, clusters as f64)
        })
        .collect();
    samples.nodes.iter().map(|n| counts[&bin_of(n)]).collect()
}

/// Fraction of the voxels of `[-√2 k0, √2 k0]³` at the given resolution that
/// the accessible set `Φ(U)` intersects.
///
/// `Φ` is rasterized on a `(k1, k2, t)` sampling fine enough that consecutive
/// points are less than half a voxel apart.
pub fn coverage_fraction(trajectory: &RotationTrajectory, k0: f64, resolution: usize) -> f64 {
    let res = resolution.max(16);
    let half = 2f64.sqrt() * k0;
    let voxel = 2.0 * half / res as f64;

    let step = voxel / 3.0;
    let m = (k0 / step).ceil() as i64;
    let mut planar = Vec::new();
    for i in -m..=m {
        for j in -m..=m {
            let (k1, k2) = (i as f64 * step, j as f64 * step);
            if let Ok(s) = semisphere_point(k1, k2, k0) {
                planar.push(s);
            }
        }
    }

    // Dense time sampling: every interval is subdivided according to how far
    // the semisphere moves across it.
    let times = trajectory.times();
    let mut dense_times = Vec::new();
    for w in times.windows(2) {
        let r0 = trajectory.rotation_at(w[0]);
        let r1 = trajectory.rotation_at(w[1]);
        let mut diff = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                diff += (r1.0[i][j] - r0.0[i][j]).powi(2);
            }
        }
        let travel = diff.sqrt() * half;
        let sub = ((travel / (0.5 * voxel)).ceil() as usize).max(1);
        dense_times.extend((0..sub).map(|s| w[0] + (w[1] - w[0]) * s as f64 / sub as f64));
    }
    dense_times.push(times[times.len() - 1]);

    let index = |v: f64| (((v + half) / voxel).floor() as i64).clamp(0, res as i64 - 1) as usize;
    let hit = dense_times
        .par_iter()
        .fold(
            || vec![false; res * res * res],
            |mut acc, &t| {
                let r = trajectory.rotation_at(t);
                for s in &planar {
                    let p = r.apply(s);
                    acc[index(p[0]) + res * (index(p[1]) + res * index(p[2]))] = true;
                }
                acc
            },
        )
        .reduce(
            || vec![false; res * res * res],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x |= y);
                a
            },
        );
    hit.iter().filter(|&&h| h).count() as f64 / (res * res * res) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Vec3, b: &Vec3, tol: f64) -> bool {
        (0..3).all(|i| (a[i] - b[i]).abs() <= tol)
    }

    #[test]
    fn rodrigues_zero_angle_is_identity() {
        assert_eq!(
            rodrigues(&[0.0, 0.0, 1.0], 0.0).unwrap(),
            RotationMatrix::IDENTITY
        );
    }

    #[test]
    fn rodrigues_quarter_turn_about_e3() {
        let r = rodrigues(&[0.0, 0.0, 1.0], FRAC_PI_2).unwrap().transpose();
        let expected = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        for i in 0..3 {
            assert!(close(&r.0[i], &expected[i], 1e-15));
        }
    }

    #[test]
    fn negated_axis_gives_inverse_rotation() {
        let a = rodrigues(&[1.0, 0.0, 0.0], 0.7).unwrap();
        let b = rodrigues(&[-1.0, 0.0, 0.0], 0.7).unwrap();
        let bt = b.transpose();
        for i in 0..3 {
            assert!(close(&a.0[i], &bt.0[i], 1e-15));
        }
    }

    #[test]
    fn rodrigues_rejects_non_unit_axis() {
        assert!(matches!(
            rodrigues(&[1.0, 1.0, 0.0], 0.3),
            Err(OdtError::Validation(_))
        ));
    }

    #[test]
    fn axis_angle_round_trip() {
        for (axis, angle) in [
            ([0.0, 0.6, 0.8], 1.1),
            ([1.0, 0.0, 0.0], 3.0),
            ([0.0, 0.0, 1.0], PI - 1e-9),
        ] {
            let r = rodrigues(&axis, angle).unwrap();
            let (a, t) = r.axis_angle();
            let back = rodrigues(&a, t).unwrap();
            for i in 0..3 {
                assert!(close(&r.0[i], &back.0[i], 1e-7), "{axis:?} {angle}");
            }
        }
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa(0.0, 0.0, 3.0).unwrap(), 3.0);
        let k0 = 2.0;
        let edge = k0 / 2f64.sqrt();
        // Rounding may put (k0/√2)² + (k0/√2)² a hair below k0²; step onto the circle.
        assert!(kappa(edge, edge + 1e-15, k0).is_err());
        assert!(kappa(k0, 0.0, k0).is_err());
        assert!((kappa(1.0, 1.0, 2.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn trajectory_validation() {
        assert!(RotationTrajectory::new(vec![], vec![], vec![]).is_err());
        assert!(
            RotationTrajectory::new(vec![0.0, 0.0], vec![[0.0, 0.0, 1.0]; 2], vec![0.0; 2])
                .is_err()
        );
        assert!(RotationTrajectory::new(vec![0.0], vec![[0.0, 0.0, 1.1]], vec![0.0]).is_err());
        assert!(RotationTrajectory::new(vec![0.0], vec![[0.0, 0.0, 1.0]], vec![0.0]).is_ok());
    }

    #[test]
    fn interpolation_hits_samples_and_keeps_unit_axes() {
        let tr = RotationTrajectory::moving_axis(12).unwrap();
        for j in 0..tr.len() {
            let (axis, angle) = tr.axis_angle_at(tr.times()[j]);
            assert!(close(&axis, &tr.axes()[j], 1e-12));
            assert!((angle - tr.angles()[j]).abs() < 1e-12);
        }
        let (axis, _) = tr.axis_angle_at(0.37);
        assert!((norm(&axis) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn phi_map_examples() {
        let k0 = 2.0;
        let tr = RotationTrajectory::moving_axis(16).unwrap();
        for &t in &[0.0, 1.0, 4.5] {
            assert_eq!(phi_map(0.0, 0.0, t, &tr, k0).unwrap(), [0.0, 0.0, 0.0]);
        }
        let (k1, k2) = (0.3, -0.7);
        let kap = kappa(k1, k2, k0).unwrap();
        let still = RotationTrajectory::new(vec![0.0], vec![[0.0, 1.0, 0.0]], vec![0.0]).unwrap();
        assert!(close(
            &phi_map(k1, k2, 0.0, &still, k0).unwrap(),
            &[k1, k2, kap - k0],
            1e-15
        ));
        // R = transpose of the counterclockwise quarter turn about e3.
        let quarter =
            RotationTrajectory::new(vec![0.0], vec![[0.0, 0.0, 1.0]], vec![FRAC_PI_2]).unwrap();
        assert!(close(
            &phi_map(k1, k2, 0.0, &quarter, k0).unwrap(),
            &[k2, -k1, kap - k0],
            1e-15
        ));
        assert!(phi_map(2.0, 0.0, 0.0, &still, k0).is_err());
    }

    #[test]
    fn jacobian_vanishes_for_constant_rotation() {
        let tr = RotationTrajectory::new(
            vec![0.0, 0.1, 0.2, 0.3],
            vec![[0.0, 1.0, 0.0]; 4],
            vec![0.4; 4],
        )
        .unwrap();
        assert_eq!(jacobian_weight(0.2, 0.1, 0.1, &tr, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn jacobian_matches_symbolic_fixed_axis() {
        let k0 = 1.5;
        // Rotation about the beam axis does not move the semisphere.
        let e3 = RotationTrajectory::fixed_axis([0.0, 0.0, 1.0], 720, 2.0 * PI).unwrap();
        assert!(jacobian_weight(0.4, -0.3, 1.0, &e3, k0).unwrap() < 1e-12);
        // Rotation about e1: |det ∇Φ| = |k2| k0 / κ (symbolic differentiation).
        let e1 = RotationTrajectory::fixed_axis([1.0, 0.0, 0.0], 720, 2.0 * PI).unwrap();
        for &(k1, k2, t) in &[(0.4f64, -0.3f64, 1.0), (-0.9, 0.7, 2.5), (0.1, 1.2, 5.0)] {
            let exact = k2.abs() * k0 / kappa(k1, k2, k0).unwrap();
            let got = jacobian_weight(k1, k2, t, &e1, k0).unwrap();
            assert!(((got - exact) / exact).abs() < 1e-4, "{got} vs {exact}");
        }
    }

    #[test]
    fn jacobian_scales_with_angular_speed() {
        let k0 = 1.0;
        let n = 400;
        let times: Vec<f64> = (0..n).map(|j| j as f64 * 0.01).collect();
        let axes = vec![[0.0, 1.0, 0.0]; n];
        let slow = RotationTrajectory::new(times.clone(), axes.clone(), times.clone()).unwrap();
        // Same rotations reached three times as fast: α(s) = 3s.
        let fast =
            RotationTrajectory::new(times.iter().map(|s| s / 3.0).collect(), axes, times.clone())
                .unwrap();
        let t = times[150];
        let a = jacobian_weight(0.3, 0.4, t, &slow, k0).unwrap();
        let b = jacobian_weight(0.3, 0.4, t / 3.0, &fast, k0).unwrap();
        assert!(a > 0.0);
        assert!(((b - 3.0 * a) / (3.0 * a)).abs() < 1e-9);
    }

    #[test]
    fn jacobian_rejects_boundary() {
        let tr = RotationTrajectory::moving_axis(8).unwrap();
        assert!(jacobian_weight(1.0, 0.0, 0.0, &tr, 1.0).is_err());
    }

    #[test]
    fn semisphere_grid_mask_is_strict() {
        let grid = SemisphereGrid::new(1.0, 16, PI / 4.0);
        // dk = 0.5: the nodes (±1, 0), (0, ±1) lie on the circle and are excluded.
        assert!(grid.nodes.iter().all(|n| n.kappa > 0.0 && n.kappa <= 1.0));
        assert!(!grid
            .nodes
            .iter()
            .any(|n| (n.k[0].abs() - 1.0).abs() < 1e-12 && n.k[1] == 0.0));
        assert_eq!(grid.len(), 9);
    }

    #[test]
    fn crofton_single_frame_is_one() {
        let grid = SemisphereGrid::new(1.0, 16, 0.4);
        let tr = RotationTrajectory::new(vec![0.0], vec![[1.0, 0.0, 0.0]], vec![0.3]).unwrap();
        let samples = KSpaceSamples::nodes_for(&grid, &tr);
        assert!(crofton_weights(&samples, 0.05).iter().all(|&w| w == 1.0));
    }

    #[test]
    fn coverage_single_frame_is_a_surface() {
        let tr = RotationTrajectory::new(vec![0.0], vec![[1.0, 0.0, 0.0]], vec![0.0]).unwrap();
        let res = 32;
        assert!(coverage_fraction(&tr, 1.0, res) <= 3.0 / res as f64);
    }
}
