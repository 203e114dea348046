//! Forward-difference gradient, its negative adjoint and isotropic total variation.

use rayon::prelude::*;

use crate::error::{OdtError, Result};
use crate::phantom::{GridSpec, Volume};

/// Per-axis forward differences of a volume. The difference across the last
/// face of each axis is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub grid: GridSpec,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl GradientField {
    pub fn zeros(grid: GridSpec) -> Self {
        let len = grid.len();
        Self {
            grid,
            x: vec![0.0; len],
            y: vec![0.0; len],
            z: vec![0.0; len],
        }
    }

    pub fn components(&self) -> [&[f64]; 3] {
        [&self.x, &self.y, &self.z]
    }

    /// Pointwise Euclidean norm of the three components.
    pub fn magnitude(&self) -> Vec<f64> {
        (0..self.x.len())
            .into_par_iter()
            .map(|i| (self.x[i] * self.x[i] + self.y[i] * self.y[i] + self.z[i] * self.z[i]).sqrt())
            .collect()
    }

    pub fn dot(&self, other: &GradientField) -> f64 {
        super::dot(&self.x, &other.x)
            + super::dot(&self.y, &other.y)
            + super::dot(&self.z, &other.z)
    }
}

pub(crate) fn grad_into(grid: &GridSpec, f: &[f64], out: &mut GradientField) {
    let n = grid.n;
    let plane = n * n;
    out.x
        .par_chunks_mut(plane)
        .zip(out.y.par_chunks_mut(plane))
        .zip(out.z.par_chunks_mut(plane))
        .enumerate()
        .for_each(|(iz, ((gx, gy), gz))| {
            let base = iz * plane;
            for iy in 0..n {
                for ix in 0..n {
                    let l = ix + n * iy;
                    let v = f[base + l];
                    gx[l] = if ix + 1 < n { f[base + l + 1] - v } else { 0.0 };
                    gy[l] = if iy + 1 < n { f[base + l + n] - v } else { 0.0 };
                    gz[l] = if iz + 1 < n {
                        f[base + l + plane] - v
                    } else {
                        0.0
                    };
                }
            }
        });
}

pub(crate) fn div_into(field: &GradientField, out: &mut [f64]) {
    let n = field.grid.n;
    let plane = n * n;
    let backward = |p: &[f64], flat: usize, i: usize, stride: usize| -> f64 {
        let here = if i + 1 < n { p[flat] } else { 0.0 };
        let before = if i > 0 { p[flat - stride] } else { 0.0 };
        here - before
    };
    out.par_chunks_mut(plane)
        .enumerate()
        .for_each(|(iz, chunk)| {
            for iy in 0..n {
                for ix in 0..n {
                    let l = ix + n * iy;
                    let flat = iz * plane + l;
                    chunk[l] = backward(&field.x, flat, ix, 1)
                        + backward(&field.y, flat, iy, n)
                        + backward(&field.z, flat, iz, plane);
                }
            }
        });
}

pub fn grad(volume: &Volume) -> GradientField {
    let mut out = GradientField::zeros(volume.grid);
    grad_into(&volume.grid, &volume.data, &mut out);
    out
}

/// Negative adjoint of [`grad`].
pub fn div(field: &GradientField) -> Result<Volume> {
    let len = field.grid.len();
    if field.x.len() != len || field.y.len() != len || field.z.len() != len {
        return Err(OdtError::Dimension(
            "gradient components do not match the grid".into(),
        ));
    }
    let mut out = vec![0.0; len];
    div_into(field, &mut out);
    Volume::from_data(field.grid, out)
}

pub(crate) fn tv_of(grid: &GridSpec, f: &[f64]) -> f64 {
    let mut g = GradientField::zeros(*grid);
    grad_into(grid, f, &mut g);
    super::sum(&g.magnitude())
}

/// `Σ_ℓ ‖(∇f)_ℓ‖₂`.
pub fn tv(volume: &Volume) -> f64 {
    tv_of(&volume.grid, &volume.data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n, 1.0).unwrap()
    }

    fn random_volume(grid: GridSpec, rng: &mut ChaCha8Rng) -> Volume {
        let data = (0..grid.len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Volume::from_data(grid, data).unwrap()
    }

    #[test]
    fn constant_volume_has_zero_tv() {
        let v = Volume::from_data(grid(8), vec![2.5; 512]).unwrap();
        assert_eq!(tv(&v), 0.0);
    }

    #[test]
    fn single_voxel_tv() {
        let g = grid(8);
        let mut v = Volume::zeros(g);
        v.data[g.offset(3, 4, 5)] = 1.0;
        assert!((tv(&v) - (3f64.sqrt() + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn tv_is_positively_homogeneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_volume(grid(6), &mut rng);
        let scaled = Volume::from_data(v.grid, v.data.iter().map(|x| -2.5 * x).collect()).unwrap();
        assert!((tv(&scaled) - 2.5 * tv(&v)).abs() < 1e-10 * tv(&v));
    }

    #[test]
    fn div_is_negative_adjoint_of_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [5usize, 8] {
            let g = grid(n);
            let f = random_volume(g, &mut rng);
            let p = GradientField {
                grid: g,
                x: random_volume(g, &mut rng).data,
                y: random_volume(g, &mut rng).data,
                z: random_volume(g, &mut rng).data,
            };
            let lhs = grad(&f).dot(&p);
            let rhs = -super::super::dot(&f.data, &div(&p).unwrap().data);
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn last_face_differences_vanish() {
        let g = grid(4);
        let v = Volume::from_data(g, (0..64).map(|i| i as f64).collect()).unwrap();
        let d = grad(&v);
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(d.x[g.offset(3, a, b)], 0.0);
                assert_eq!(d.y[g.offset(a, 3, b)], 0.0);
                assert_eq!(d.z[g.offset(a, b, 3)], 0.0);
            }
        }
        assert_eq!(d.x[0], 1.0);
        assert_eq!(d.y[0], 4.0);
        assert_eq!(d.z[0], 16.0);
    }
}
