//! Reconstruction quality measures: PSNR, volumetric SSIM and relative error.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{OdtError, Result};
use crate::phantom::Volume;

/// Standard deviation of the SSIM window, in voxels.
pub const SSIM_SIGMA: f64 = 1.5;
/// Half-width of the SSIM window, in voxels.
pub const SSIM_RADIUS: usize = 5;

pub const CSV_HEADER: &str = "method,psnr_db,ssim,rel_l2,wall_seconds";

fn check_pair(reference: &Volume, test: &Volume) -> Result<()> {
    if reference.grid.n != test.grid.n || reference.data.len() != test.data.len() {
        return Err(OdtError::Dimension(format!(
            "volumes have {}^3 and {}^3 voxels",
            reference.grid.n, test.grid.n
        )));
    }
    Ok(())
}

fn check_peak(peak: f64) -> Result<()> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(OdtError::Validation(format!(
            "peak must be positive, got {peak}"
        )));
    }
    Ok(())
}

/// `10 log₁₀(peak² / MSE)`; `+∞` for identical volumes.
pub fn psnr(reference: &Volume, test: &Volume, peak: f64) -> Result<f64> {
    check_pair(reference, test)?;
    check_peak(peak)?;
    let sq: f64 = reference
        .data
        .iter()
        .zip(&test.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let mse = sq / reference.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// `‖test − reference‖₂ / ‖reference‖₂`.
pub fn rel_l2(reference: &Volume, test: &Volume) -> Result<f64> {
    check_pair(reference, test)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in reference.data.iter().zip(&test.data) {
        num += (a - b) * (a - b);
        den += a * a;
    }
    Ok(match (num, den) {
        (n, _) if n == 0.0 => 0.0,
        (_, d) if d == 0.0 => f64::INFINITY,
        (n, d) => (n / d).sqrt(),
    })
}

/// Smooths along one axis with the truncated Gaussian, renormalizing the
/// weights that fall inside the volume.
fn smooth_axis(data: &[f64], n: usize, stride: usize, kernel: &[f64]) -> Vec<f64> {
    let r = SSIM_RADIUS as isize;
    let mut out = vec![0.0; data.len()];
    out.par_iter_mut().enumerate().for_each(|(flat, o)| {
        let i = ((flat / stride) % n) as isize;
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for d in -r..=r {
            let j = i + d;
            if j < 0 || j >= n as isize {
                continue;
            }
            let w = kernel[(d + r) as usize];
            acc += w * data[(flat as isize + d * stride as isize) as usize];
            wsum += w;
        }
        *o = acc / wsum;
    });
    out
}

fn smooth(data: &[f64], n: usize, kernel: &[f64]) -> Vec<f64> {
    let a = smooth_axis(data, n, 1, kernel);
    let b = smooth_axis(&a, n, n, kernel);
    smooth_axis(&b, n, n * n, kernel)
}

/// Local SSIM at every voxel.
pub fn ssim_map(reference: &Volume, test: &Volume, peak: f64) -> Result<Vec<f64>> {
    check_pair(reference, test)?;
    check_peak(peak)?;
    let n = reference.grid.n;
    if n < 8 {
        return Err(OdtError::Validation(format!(
            "SSIM needs at least 8 voxels per axis, got {n}"
        )));
    }
    let kernel: Vec<f64> = (-(SSIM_RADIUS as isize)..=SSIM_RADIUS as isize)
        .map(|d| (-(d * d) as f64 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let (x, y) = (&reference.data, &test.data);
    let mu_x = smooth(x, n, &kernel);
    let mu_y = smooth(y, n, &kernel);
    let xx = smooth(&x.iter().map(|v| v * v).collect::<Vec<_>>(), n, &kernel);
    let yy = smooth(&y.iter().map(|v| v * v).collect::<Vec<_>>(), n, &kernel);
    let xy = smooth(
        &x.iter().zip(y).map(|(a, b)| a * b).collect::<Vec<_>>(),
        n,
        &kernel,
    );
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    Ok((0..x.len())
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = xx[i] - mx * mx;
            let vy = yy[i] - my * my;
            let cov = xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .collect())
}

/// Mean local SSIM over the volume, with a Gaussian window of standard
/// deviation [`SSIM_SIGMA`] truncated at [`SSIM_RADIUS`].
pub fn ssim(reference: &Volume, test: &Volume, peak: f64) -> Result<f64> {
    let map = ssim_map(reference, test, peak)?;
    Ok(map.iter().sum::<f64>() / map.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub psnr: f64,
    pub ssim: f64,
    pub rel_l2: f64,
    /// Mean local SSIM of every z slice.
    pub slice_ssim: Vec<f64>,
}

impl QualityReport {
    /// Compares `test` against `reference` with `peak = max(reference)` unless given.
    pub fn compare(reference: &Volume, test: &Volume, peak: Option<f64>) -> Result<Self> {
        let peak = peak.unwrap_or_else(|| reference.max());
        let map = ssim_map(reference, test, peak)?;
        let plane = reference.grid.n * reference.grid.n;
        let slice_ssim = map
            .chunks(plane)
            .map(|s| s.iter().sum::<f64>() / plane as f64)
            .collect();
        Ok(Self {
            psnr: psnr(reference, test, peak)?,
            ssim: map.iter().sum::<f64>() / map.len() as f64,
            rel_l2: rel_l2(reference, test)?,
            slice_ssim,
        })
    }
}

/// One line of the metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    pub report: QualityReport,
    pub wall_seconds: f64,
}

pub fn write_csv<W: Write>(mut out: W, rows: &[MetricsRow]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.3}",
            r.method, r.report.psnr, r.report.ssim, r.report.rel_l2, r.wall_seconds
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{BallPhantom, GridSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn filled(n: usize, v: f64) -> Volume {
        Volume::from_data(GridSpec::new(n, 1.0).unwrap(), vec![v; n * n * n]).unwrap()
    }

    fn random(n: usize, seed: u64) -> Volume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GridSpec::new(n, 1.0).unwrap();
        Volume::from_data(
            g,
            (0..g.len()).map(|_| rng.random_range(0.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn psnr_cases() {
        let a = random(8, 1);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let got = psnr(&filled(8, 1.0), &filled(8, 0.9), 1.0).unwrap();
        assert!((got - 20.0).abs() < 1e-9);
        assert!(psnr(&filled(8, 1.0), &filled(9, 1.0), 1.0).is_err());
        assert!(psnr(&a, &a, 0.0).is_err());
    }

    #[test]
    fn psnr_matches_two_pass_oracle() {
        let (a, b) = (random(9, 2), random(9, 3));
        let n = a.data.len() as f64;
        let mean_diff = a.data.iter().zip(&b.data).map(|(x, y)| x - y).sum::<f64>() / n;
        let var = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| (x - y - mean_diff).powi(2))
            .sum::<f64>()
            / n;
        let mse = var + mean_diff * mean_diff;
        let oracle = 10.0 * (0.7f64 * 0.7 / mse).log10();
        assert!((psnr(&a, &b, 0.7).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn psnr_decreases_with_error() {
        let a = filled(8, 0.5);
        let mut last = f64::INFINITY;
        for k in 1..6 {
            let p = psnr(&a, &filled(8, 0.5 + 0.05 * k as f64), 1.0).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn psnr_is_permutation_invariant() {
        let (a, b) = (random(8, 4), random(8, 5));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut perm: Vec<usize> = (0..a.data.len()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let pa = Volume::from_data(a.grid, perm.iter().map(|&i| a.data[i]).collect()).unwrap();
        let pb = Volume::from_data(b.grid, perm.iter().map(|&i| b.data[i]).collect()).unwrap();
        assert!((psnr(&a, &b, 1.0).unwrap() - psnr(&pa, &pb, 1.0).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let (a, b) = (random(10, 7), random(10, 8));
        assert_eq!(ssim(&a, &a, 1.0).unwrap(), 1.0);
        let d = ssim(&a, &b, 1.0).unwrap() - ssim(&b, &a, 1.0).unwrap();
        assert!(d.abs() < 1e-12);
        assert!(ssim(&a, &b, 1.0).unwrap() <= 1.0);
    }

    #[test]
    fn ssim_of_constants_is_luminance_term() {
        let (a, b, peak) = (0.8, 0.3, 1.0);
        let c1 = (0.01f64 * peak).powi(2);
        let expected = (2.0 * a * b + c1) / (a * a + b * b + c1);
        let got = ssim(&filled(8, a), &filled(8, b), peak).unwrap();
        assert!((got - expected).abs() < 1e-9);
    }

    #[test]
    fn inverted_phantom_is_anticorrelated() {
        let grid = GridSpec::covering(32, 42.4).unwrap();
        let truth = BallPhantom::default_cell().eval_grid(&grid).unwrap();
        let binary = Volume::from_data(
            grid,
            truth
                .data
                .iter()
                .map(|&v| if v > 0.0 { 1.0 } else { 0.0 })
                .collect(),
        )
        .unwrap();
        let inverted =
            Volume::from_data(grid, binary.data.iter().map(|v| 1.0 - v).collect()).unwrap();
        let map = ssim_map(&binary, &inverted, 1.0).unwrap();
        // Voxels near edges carry structure; their mean SSIM is negative.
        let structured: Vec<f64> = map.iter().copied().filter(|s| s.abs() > 1e-3).collect();
        assert!(!structured.is_empty());
        assert!(structured.iter().sum::<f64>() / (structured.len() as f64) < 0.0);
        assert!(ssim(&binary, &inverted, 1.0).unwrap() < 0.0);
    }

    #[test]
    fn ssim_rejects_tiny_volumes() {
        assert!(ssim(&filled(6, 1.0), &filled(6, 1.0), 1.0).is_err());
    }

    #[test]
    fn report_and_csv() {
        let a = random(8, 9);
        let r = QualityReport::compare(&a, &a, None).unwrap();
        assert_eq!(r.ssim, 1.0);
        assert_eq!(r.rel_l2, 0.0);
        assert_eq!(r.slice_ssim.len(), 8);
        let mut buf = Vec::new();
        write_csv(
            &mut buf,
            &[MetricsRow {
                method: "cg".into(),
                report: r,
                wall_seconds: 1.5,
            }],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "method,psnr_db,ssim,rel_l2,wall_seconds\ncg,inf,1.000000,0.000000,1.500"
        ));
    }
}
