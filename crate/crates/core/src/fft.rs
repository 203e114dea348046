//! Centered multi-dimensional FFT helpers on top of `rustfft`.
//!
//! Arrays handed to these routines store the centered index `j = i - n/2` at
//! position `i`, so the zero frequency (or the origin) sits at `n/2`. Both
//! directions are unnormalized; callers apply the physical quadrature factors.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

/// Moves the centered layout into FFT order (index 0 first) along one axis of
/// length `n`, or back when `inverse` is set.
fn roll_line(line: &mut [Complex64], inverse: bool) {
    let half = line.len() / 2;
    if inverse {
        line.rotate_right(half);
    } else {
        line.rotate_left(half);
    }
}

/// Square 2D transform on `n x n` row-major frames in centered layout.
#[derive(Clone)]
pub struct CenteredFft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CenteredFft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CenteredFft2").field("n", &self.n).finish()
    }
}

impl CenteredFft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// `out[m] = sum_j in[j] exp(-+ 2 pi i j.m / n)` with centered `j`, `m`.
    /// The sign is negative for the forward direction.
    pub fn process(&self, frame: &mut [Complex64], inverse: bool) {
        let n = self.n;
        assert_eq!(frame.len(), n * n, "frame size does not match plan");
        let plan = if inverse {
            &self.inverse
        } else {
            &self.forward
        };
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        let mut pass = |data: &mut [Complex64]| {
            for row in data.chunks_exact_mut(n) {
                roll_line(row, false);
                plan.process_with_scratch(row, &mut scratch);
                roll_line(row, true);
            }
        };
        pass(frame);
        transpose_square(frame, n);
        pass(frame);
        transpose_square(frame, n);
    }
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Cubic 3D transform in plain FFT order (no centering), x-fastest layout.
#[derive(Clone)]
pub struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("n", &self.n).finish()
    }
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// In-place unnormalized transform; `scratch` must hold `n^3` values.
    pub fn process(&self, data: &mut [Complex64], scratch: &mut Vec<Complex64>, inverse: bool) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n, "volume size does not match plan");
        scratch.resize(data.len(), Complex64::new(0.0, 0.0));
        let plan = if inverse {
            &self.inverse
        } else {
            &self.forward
        };
        // Transform along the fastest axis, then rotate the axes so the next
        // one becomes fastest. Three rounds restore the original layout.
        for _ in 0..3 {
            data.par_chunks_mut(n * n).for_each(|plane| {
                let mut line_scratch =
                    vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
                for row in plane.chunks_exact_mut(n) {
                    plan.process_with_scratch(row, &mut line_scratch);
                }
            });
            rotate_axes(data, scratch, n);
            data.copy_from_slice(scratch);
        }
    }
}

/// `out[(y, z, x)] = in[(x, y, z)]` with the first index fastest.
fn rotate_axes(input: &[Complex64], out: &mut [Complex64], n: usize) {
    out.par_chunks_mut(n * n)
        .enumerate()
        .for_each(|(x, plane)| {
            for z in 0..n {
                for y in 0..n {
                    plane[y + n * z] = input[x + n * (y + n * z)];
                }
            }
        });
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn naive_centered_dft2(frame: &[Complex64], n: usize, sign: f64) -> Vec<Complex64> {
        let c = (n / 2) as isize;
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for m1 in 0..n {
            for m2 in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for j1 in 0..n {
                    for j2 in 0..n {
                        let phase = 2.0
                            * PI
                            * ((j1 as isize - c) * (m1 as isize - c)
                                + (j2 as isize - c) * (m2 as isize - c))
                                as f64
                            / n as f64;
                        acc += frame[j1 * n + j2] * Complex64::from_polar(1.0, sign * phase);
                    }
                }
                out[m1 * n + m2] = acc;
            }
        }
        out
    }

    #[test]
    fn centered_fft2_matches_naive_sum() {
        for n in [6usize, 7] {
            let frame: Vec<Complex64> = (0..n * n)
                .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
                .collect();
            for (inverse, sign) in [(false, -1.0), (true, 1.0)] {
                let mut fast = frame.clone();
                CenteredFft2::new(n).process(&mut fast, inverse);
                let slow = naive_centered_dft2(&frame, n, sign);
                for (a, b) in fast.iter().zip(&slow) {
                    assert!((a - b).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn fft3_matches_separable_definition() {
        let n = 4;
        let data: Vec<Complex64> = (0..n * n * n)
            .map(|i| Complex64::new((i as f64).sqrt(), (i % 5) as f64))
            .collect();
        let mut fast = data.clone();
        let mut scratch = Vec::new();
        Fft3::new(n).process(&mut fast, &mut scratch, false);
        for k in 0..n * n * n {
            let (kx, ky, kz) = (k % n, (k / n) % n, k / (n * n));
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n * n * n {
                let (x, y, z) = (j % n, (j / n) % n, j / (n * n));
                let phase = -2.0 * PI * ((x * kx + y * ky + z * kz) as f64) / n as f64;
                acc += data[j] * Complex64::from_polar(1.0, phase);
            }
            assert!((acc - fast[k]).norm() < 1e-9);
        }
    }
}
