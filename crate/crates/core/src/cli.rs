//! Batch command-line front end.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{OdtError, Result};
use crate::forward::{add_noise, preprocess, simulate, simulate_oversampled, MeasurementStack};
use crate::geometry::RotationTrajectory;
use crate::io;
use crate::metrics::{write_csv, MetricsRow, QualityReport};
use crate::phantom::{BallPhantom, Volume};
use crate::phase::hio;
use crate::recon::{
    backpropagate, reconstruct_cg, reconstruct_tv, with_backpropagation_weights, Method,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "born-odt",
    version,
    about = "Diffraction tomography with a moving rotation axis"
)]
pub struct Cli {
    /// Seed for the noise generator (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Detector pixels per side (also the reconstruction grid size).
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of trajectory samples.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Ball phantom file.
    #[arg(long)]
    pub phantom: Option<PathBuf>,
    /// Trajectory file.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the phantom and its gridded ground truth.
    Phantom(Common),
    /// Simulate detector data.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Relative noise level.
        #[arg(long)]
        noise: Option<f64>,
        /// Store magnitudes only.
        #[arg(long)]
        magnitude: bool,
    },
    /// Known-phase reconstruction.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Measurement container directory.
        #[arg(long)]
        measurements: Option<PathBuf>,
        /// bp, cg or tv.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Phase retrieval from magnitude data.
    Phase {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        measurements: Option<PathBuf>,
        /// Inner solver, cg or tv.
        #[arg(long)]
        inner_method: Option<String>,
        #[arg(long)]
        outer: Option<usize>,
        #[arg(long)]
        inner: Option<usize>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        support_radius: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Compare two volumes.
    Evaluate {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Label written in the method column.
        #[arg(long, default_value = "test")]
        label: String,
        /// CSV file (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit code for an error.
pub fn exit_code(err: &OdtError) -> i32 {
    match err {
        OdtError::Numerical { .. } => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

fn load_config(common: &Common, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if seed.is_some() {
        cfg.seed = seed;
    }
    if common.n.is_some() {
        cfg.experiment.detector_n = common.n;
    }
    if common.frames.is_some() {
        cfg.experiment.frames = common.frames;
    }
    if common.phantom.is_some() {
        cfg.paths.phantom = common.phantom.clone();
    }
    if common.trajectory.is_some() {
        cfg.paths.trajectory = common.trajectory.clone();
    }
    if common.out.is_some() {
        cfg.paths.output = common.out.clone();
    }
    Ok(cfg)
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg
        .paths
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|e| OdtError::io(&dir, e))?;
    Ok(dir)
}

fn phantom_of(cfg: &RunConfig) -> Result<BallPhantom> {
    match &cfg.paths.phantom {
        Some(p) => io::read_phantom(p),
        None => Ok(BallPhantom::default_cell()),
    }
}

fn trajectory_of(cfg: &RunConfig) -> Result<RotationTrajectory> {
    match &cfg.paths.trajectory {
        Some(p) => io::read_trajectory(p),
        None => cfg.generated_trajectory(),
    }
}

fn measurements_dir(cfg: &RunConfig, out: &Path) -> PathBuf {
    cfg.paths
        .measurements
        .clone()
        .unwrap_or_else(|| out.join("measurements"))
}

fn reference_volume(cfg: &RunConfig, test: &Volume) -> Result<Volume> {
    match &cfg.paths.reference {
        Some(dir) => io::read_volume(dir),
        None => phantom_of(cfg)?.eval_grid(&test.grid),
    }
}

fn write_result(
    cfg: &RunConfig,
    out: &Path,
    label: &str,
    volume: &Volume,
    seconds: f64,
) -> Result<QualityReport> {
    io::write_volume(&out.join(label), volume)?;
    let reference = reference_volume(cfg, volume)?;
    let peak = reference.max();
    io::write_slice_pgm(&out.join(format!("{label}_slice.pgm")), volume, peak)?;
    let report = QualityReport::compare(&reference, volume, None)?;
    let csv = out.join(format!("{label}_metrics.csv"));
    let file = std::fs::File::create(&csv).map_err(|e| OdtError::io(&csv, e))?;
    write_csv(
        file,
        &[MetricsRow {
            method: label.to_string(),
            report: report.clone(),
            wall_seconds: seconds,
        }],
    )
    .map_err(|e| OdtError::io(&csv, e))?;
    log::info!(
        "{label}: PSNR {:.2} dB, SSIM {:.4}, relative error {:.4} ({seconds:.1} s)",
        report.psnr,
        report.ssim,
        report.rel_l2
    );
    Ok(report)
}

pub fn cmd_phantom(cfg: &RunConfig) -> Result<Volume> {
    let out = output_dir(cfg)?;
    let phantom = phantom_of(cfg)?;
    let grid = cfg.experiment()?.matching_grid();
    let volume = phantom.eval_grid(&grid)?;
    io::write_phantom(&out.join("phantom.txt"), &phantom)?;
    io::write_volume(&out.join("truth"), &volume)?;
    io::write_slice_pgm(&out.join("truth_slice.pgm"), &volume, volume.max())?;
    Ok(volume)
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<MeasurementStack> {
    let out = output_dir(cfg)?;
    let config = cfg.experiment()?;
    let phantom = phantom_of(cfg)?;
    let trajectory = trajectory_of(cfg)?;
    let factor = cfg.oversampling()?;
    let mut stack = if factor == 1 {
        simulate(&phantom, &trajectory, &config)?
    } else {
        simulate_oversampled(&phantom, &trajectory, &config, factor)?
    };
    let noise = cfg.noise()?;
    if noise > 0.0 {
        stack = add_noise(&stack, noise, cfg.seed())?;
    }
    if cfg.experiment.magnitude.unwrap_or(false) {
        stack = stack.magnitudes();
    }
    io::write_trajectory(&out.join("trajectory.txt"), &trajectory)?;
    io::write_measurements(&measurements_dir(cfg, &out), &stack)?;
    Ok(stack)
}

fn saved_trajectory(cfg: &RunConfig, out: &Path) -> Result<RotationTrajectory> {
    let saved = out.join("trajectory.txt");
    if cfg.paths.trajectory.is_none() && saved.exists() {
        io::read_trajectory(&saved)
    } else {
        trajectory_of(cfg)
    }
}

pub fn cmd_reconstruct(cfg: &RunConfig) -> Result<(Volume, QualityReport)> {
    let out = output_dir(cfg)?;
    let params = cfg.recon_params()?;
    let stack = io::read_measurements(&measurements_dir(cfg, &out))?;
    if !stack.is_complex() {
        return Err(OdtError::Contract(
            "measurements hold magnitudes only; use the phase command for phase retrieval".into(),
        ));
    }
    let trajectory = saved_trajectory(cfg, &out)?;
    let grid = stack.config.matching_grid();
    let start = Instant::now();
    let samples = with_backpropagation_weights(&preprocess(&stack, &trajectory)?, &trajectory)?;
    let volume = match params.method {
        Method::Bp => backpropagate(&samples, grid, params.nufft)?,
        Method::Cg => reconstruct_cg(&samples, grid, &params)?.volume,
        Method::Tv => reconstruct_tv(&samples, grid, &params, None)?.volume,
    };
    let seconds = start.elapsed().as_secs_f64();
    let report = write_result(cfg, &out, &params.method.to_string(), &volume, seconds)?;
    Ok((volume, report))
}

pub fn cmd_phase(cfg: &RunConfig) -> Result<(Volume, QualityReport)> {
    let out = output_dir(cfg)?;
    let params = cfg.hio_params()?;
    let stack = io::read_measurements(&measurements_dir(cfg, &out))?;
    if stack.is_complex() {
        return Err(OdtError::Contract(
            "measurements carry phase; use the reconstruct command for known-phase data".into(),
        ));
    }
    let trajectory = saved_trajectory(cfg, &out)?;
    let start = Instant::now();
    let result = hio(&stack, &trajectory, &params)?;
    let seconds = start.elapsed().as_secs_f64();
    let label = format!("hio_{}", params.inner_method);
    let report = write_result(cfg, &out, &label, &result.volume, seconds)?;
    Ok((result.volume, report))
}

pub fn cmd_evaluate(
    reference: &Path,
    test: &Path,
    label: &str,
    out: Option<&Path>,
) -> Result<QualityReport> {
    let reference = io::read_volume(reference)?;
    let test = io::read_volume(test)?;
    let report = QualityReport::compare(&reference, &test, None)?;
    let rows = [MetricsRow {
        method: label.to_string(),
        report: report.clone(),
        wall_seconds: 0.0,
    }];
    match out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| OdtError::io(path, e))?;
            write_csv(file, &rows).map_err(|e| OdtError::io(path, e))?;
        }
        None => {
            write_csv(std::io::stdout().lock(), &rows).map_err(|e| OdtError::io("<stdout>", e))?
        }
    }
    Ok(report)
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| OdtError::Config(format!("cannot configure {threads} threads: {e}")))?;
    }
    match cli.command {
        Command::Phantom(common) => cmd_phantom(&load_config(&common, cli.seed)?).map(|_| ()),
        Command::Simulate {
            common,
            noise,
            magnitude,
        } => {
            let mut cfg = load_config(&common, cli.seed)?;
            if noise.is_some() {
                cfg.experiment.noise = noise;
            }
            if magnitude {
                cfg.experiment.magnitude = Some(true);
            }
            cmd_simulate(&cfg).map(|_| ())
        }
        Command::Reconstruct {
            common,
            measurements,
            method,
            lambda,
            iterations,
        } => {
            let mut cfg = load_config(&common, cli.seed)?;
            if measurements.is_some() {
                cfg.paths.measurements = measurements;
            }
            if method.is_some() {
                cfg.recon.method = method;
            }
            if lambda.is_some() {
                cfg.recon.lambda = lambda;
            }
            if iterations.is_some() {
                cfg.recon.iterations = iterations;
            }
            cmd_reconstruct(&cfg).map(|_| ())
        }
        Command::Phase {
            common,
            measurements,
            inner_method,
            outer,
            inner,
            beta,
            support_radius,
            lambda,
        } => {
            let mut cfg = load_config(&common, cli.seed)?;
            if measurements.is_some() {
                cfg.paths.measurements = measurements;
            }
            let h = &mut cfg.hio;
            h.inner_method = inner_method.or(h.inner_method.take());
            h.outer = outer.or(h.outer);
            h.inner = inner.or(h.inner);
            h.beta = beta.or(h.beta);
            h.support_radius = support_radius.or(h.support_radius);
            h.lambda = lambda.or(h.lambda);
            cmd_phase(&cfg).map(|_| ())
        }
        Command::Evaluate {
            reference,
            test,
            label,
            out,
        } => cmd_evaluate(&reference, &test, &label, out.as_deref()).map(|_| ()),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if let OdtError::Numerical { trace, .. } = &e {
                eprintln!("objective trace: {trace:?}");
            }
            exit_code(&e)
        }
    }
}
