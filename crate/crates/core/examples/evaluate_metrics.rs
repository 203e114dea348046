//! PSNR, SSIM and relative error of perturbed copies of the cell phantom,
//! written as CSV.

use born_odt::metrics::{write_csv, MetricsRow, QualityReport};
use born_odt::phantom::{BallPhantom, GridSpec, Volume};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = GridSpec::covering(48, 42.4)?;
    let truth = BallPhantom::default_cell().eval_grid(&grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut rows = Vec::new();
    for sigma in [0.0f64, 0.01, 0.05, 0.1, 0.2] {
        let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE))?;
        let noisy = Volume::from_data(
            grid,
            truth
                .data
                .iter()
                .map(|v| v + normal.sample(&mut rng))
                .collect(),
        )?;
        rows.push(MetricsRow {
            method: format!("gaussian_{sigma}"),
            report: QualityReport::compare(&truth, &noisy, None)?,
            wall_seconds: 0.0,
        });
    }
    let dimmed = Volume::from_data(grid, truth.data.iter().map(|v| 0.8 * v).collect())?;
    rows.push(MetricsRow {
        method: "scaled_0.8".into(),
        report: QualityReport::compare(&truth, &dimmed, None)?,
        wall_seconds: 0.0,
    });
    write_csv(std::io::stdout().lock(), &rows)?;
    Ok(())
}
