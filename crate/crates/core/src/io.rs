//! Plain-text and raw binary file formats.
//!
//! * trajectory files: one `t n1 n2 n3 alpha` record per line
//! * phantom files: one `cx cy cz radius amplitude` ball per line
//! * measurement containers: a directory with `meta.txt` and `frames.raw`
//! * volumes: a directory with `meta.txt` and `volume.raw`
//! * central slices as 16-bit binary PGM images
//!
//! Text formats accept `#` comments and blank lines. Raw data is stored as
//! little-endian 32-bit floats.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{OdtError, Result};
use crate::forward::{ExperimentConfig, FrameData, MeasurementStack};
use crate::geometry::RotationTrajectory;
use crate::phantom::{Ball, BallPhantom, GridSpec, Volume};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| OdtError::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| OdtError::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| OdtError::io(path, e))
}

/// Parses whitespace-separated records of exactly `width` floats.
fn parse_records(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != width {
            return Err(OdtError::Parse {
                path: path.into(),
                line: i + 1,
                message: format!("expected {width} numbers, found {}", fields.len()),
            });
        }
        let values = fields
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|e| OdtError::Parse {
                    path: path.into(),
                    line: i + 1,
                    message: format!("'{f}': {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(values);
    }
    Ok(out)
}

pub fn read_trajectory(path: &Path) -> Result<RotationTrajectory> {
    let records = parse_records(path, 5)?;
    let times = records.iter().map(|r| r[0]).collect();
    let axes = records.iter().map(|r| [r[1], r[2], r[3]]).collect();
    let angles = records.iter().map(|r| r[4]).collect();
    RotationTrajectory::new(times, axes, angles)
}

pub fn write_trajectory(path: &Path, trajectory: &RotationTrajectory) -> Result<()> {
    let mut text = String::from("# t n1 n2 n3 alpha\n");
    for ((t, n), a) in trajectory
        .times()
        .iter()
        .zip(trajectory.axes())
        .zip(trajectory.angles())
    {
        text.push_str(&format!("{t:e} {:e} {:e} {:e} {a:e}\n", n[0], n[1], n[2]));
    }
    write_bytes(path, text.as_bytes())
}

pub fn read_phantom(path: &Path) -> Result<BallPhantom> {
    let balls = parse_records(path, 5)?
        .into_iter()
        .map(|r| Ball {
            center: [r[0], r[1], r[2]],
            radius: r[3],
            amplitude: r[4],
        })
        .collect();
    BallPhantom::new(balls)
}

pub fn write_phantom(path: &Path, phantom: &BallPhantom) -> Result<()> {
    let mut text = String::from("# cx cy cz radius amplitude\n");
    for b in &phantom.balls {
        text.push_str(&format!(
            "{:e} {:e} {:e} {:e} {:e}\n",
            b.center[0], b.center[1], b.center[2], b.radius, b.amplitude
        ));
    }
    write_bytes(path, text.as_bytes())
}

/// `key = value` lines.
fn read_meta(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = read_text(path)?;
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| OdtError::Parse {
            path: path.into(),
            line: i + 1,
            message: "expected 'key = value'".into(),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn meta_value<T: std::str::FromStr>(
    meta: &BTreeMap<String, String>,
    path: &Path,
    key: &str,
) -> Result<T> {
    let raw = meta.get(key).ok_or_else(|| OdtError::Parse {
        path: path.into(),
        line: 0,
        message: format!("missing key '{key}'"),
    })?;
    raw.parse().map_err(|_| OdtError::Parse {
        path: path.into(),
        line: 0,
        message: format!("bad value '{raw}' for '{key}'"),
    })
}

fn encode_f32(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(|v| (v as f32).to_le_bytes()).collect()
}

fn decode_f32(path: &Path, bytes: &[u8], expected: usize) -> Result<Vec<f64>> {
    if bytes.len() != 4 * expected {
        return Err(OdtError::Parse {
            path: path.into(),
            line: 0,
            message: format!("expected {} bytes, found {}", 4 * expected, bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Writes `meta.txt` and `frames.raw` into `dir`, creating it if needed.
pub fn write_measurements(dir: &Path, stack: &MeasurementStack) -> Result<()> {
    create_dir(dir)?;
    let c = &stack.config;
    let kind = if stack.is_complex() {
        "complex"
    } else {
        "magnitude"
    };
    let meta = format!(
        "N_d = {}\npitch = {:e}\nk0 = {:e}\nrM = {:e}\nT_n = {}\nkind = {kind}\ndtype = f32le\n",
        c.detector_n, c.pitch, c.k0, c.r_m, stack.frames
    );
    write_bytes(&dir.join("meta.txt"), meta.as_bytes())?;
    let bytes = match &stack.data {
        FrameData::Complex(z) => encode_f32(z.iter().flat_map(|z| [z.re, z.im])),
        FrameData::Magnitude(m) => encode_f32(m.iter().copied()),
    };
    write_bytes(&dir.join("frames.raw"), &bytes)
}

pub fn read_measurements(dir: &Path) -> Result<MeasurementStack> {
    let meta_path = dir.join("meta.txt");
    let meta = read_meta(&meta_path)?;
    let config = ExperimentConfig {
        detector_n: meta_value(&meta, &meta_path, "N_d")?,
        pitch: meta_value(&meta, &meta_path, "pitch")?,
        k0: meta_value(&meta, &meta_path, "k0")?,
        r_m: meta_value(&meta, &meta_path, "rM")?,
    };
    let frames: usize = meta_value(&meta, &meta_path, "T_n")?;
    let kind: String = meta_value(&meta, &meta_path, "kind")?;
    let raw_path = dir.join("frames.raw");
    let bytes = fs::read(&raw_path).map_err(|e| OdtError::io(&raw_path, e))?;
    let count = frames * config.detector_n * config.detector_n;
    let data = match kind.as_str() {
        "complex" => {
            let v = decode_f32(&raw_path, &bytes, 2 * count)?;
            FrameData::Complex(
                v.chunks_exact(2)
                    .map(|c| Complex64::new(c[0], c[1]))
                    .collect(),
            )
        }
        "magnitude" => FrameData::Magnitude(decode_f32(&raw_path, &bytes, count)?),
        other => {
            return Err(OdtError::Parse {
                path: meta_path,
                line: 0,
                message: format!("kind must be complex or magnitude, got '{other}'"),
            })
        }
    };
    MeasurementStack::new(config, frames, data)
}

/// Writes `meta.txt` and `volume.raw` (x fastest) into `dir`.
pub fn write_volume(dir: &Path, volume: &Volume) -> Result<()> {
    create_dir(dir)?;
    let meta = format!(
        "N = {}\nspacing = {:e}\ndtype = f32le\n",
        volume.grid.n, volume.grid.spacing
    );
    write_bytes(&dir.join("meta.txt"), meta.as_bytes())?;
    write_bytes(
        &dir.join("volume.raw"),
        &encode_f32(volume.data.iter().copied()),
    )
}

pub fn read_volume(dir: &Path) -> Result<Volume> {
    let meta_path = dir.join("meta.txt");
    let meta = read_meta(&meta_path)?;
    let grid = GridSpec::new(
        meta_value(&meta, &meta_path, "N")?,
        meta_value(&meta, &meta_path, "spacing")?,
    )?;
    let raw_path = dir.join("volume.raw");
    let bytes = fs::read(&raw_path).map_err(|e| OdtError::io(&raw_path, e))?;
    Volume::from_data(grid, decode_f32(&raw_path, &bytes, grid.len())?)
}

/// Central z slice as a 16-bit binary PGM with values clamped to `[0, peak]`.
pub fn write_slice_pgm(path: &Path, volume: &Volume, peak: f64) -> Result<()> {
    let n = volume.grid.n;
    let slice = volume.central_slice();
    let mut bytes = Vec::with_capacity(20 + 2 * n * n);
    write!(bytes, "P5\n{n} {n}\n65535\n").map_err(|e| OdtError::io(path, e))?;
    let peak = if peak > 0.0 { peak } else { 1.0 };
    // Rows top to bottom: y decreasing, x increasing.
    for iy in (0..n).rev() {
        for ix in 0..n {
            let v = (slice[ix + n * iy] / peak).clamp(0.0, 1.0);
            bytes.extend_from_slice(&((v * 65535.0).round() as u16).to_be_bytes());
        }
    }
    write_bytes(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::simulate;

    #[test]
    fn trajectory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.txt");
        let traj = RotationTrajectory::moving_axis(7).unwrap();
        write_trajectory(&path, &traj).unwrap();
        let back = read_trajectory(&path).unwrap();
        assert_eq!(back.times(), traj.times());
        assert_eq!(back.angles(), traj.angles());
        for (a, b) in back.axes().iter().zip(traj.axes()) {
            for i in 0..3 {
                assert!((a[i] - b[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn trajectory_parse_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.txt");
        fs::write(&path, "# header\n0 0 0 1 0\n1 0 0 1\n").unwrap();
        match read_trajectory(&path) {
            Err(OdtError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn phantom_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phantom.txt");
        let p = BallPhantom::default_cell();
        write_phantom(&path, &p).unwrap();
        assert_eq!(read_phantom(&path).unwrap(), p);
    }

    #[test]
    fn measurement_round_trip_at_single_precision() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig::desk(16);
        let traj = RotationTrajectory::moving_axis(3).unwrap();
        let stack = simulate(&BallPhantom::default_cell(), &traj, &config).unwrap();
        write_measurements(dir.path(), &stack).unwrap();
        let back = read_measurements(dir.path()).unwrap();
        assert_eq!(back.frames, 3);
        assert!((back.config.k0 - config.k0).abs() < 1e-12 * config.k0);
        for (a, b) in back.complex().unwrap().iter().zip(stack.complex().unwrap()) {
            assert!((a - b).norm() <= 1e-6 * b.norm().max(1.0));
        }
        let mags = stack.magnitudes();
        write_measurements(&dir.path().join("mag"), &mags).unwrap();
        let back = read_measurements(&dir.path().join("mag")).unwrap();
        assert!(!back.is_complex());
    }

    #[test]
    fn truncated_raw_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridSpec::new(4, 1.0).unwrap();
        write_volume(dir.path(), &Volume::zeros(grid)).unwrap();
        fs::write(dir.path().join("volume.raw"), [0u8; 10]).unwrap();
        assert!(matches!(
            read_volume(dir.path()),
            Err(OdtError::Parse { .. })
        ));
    }

    #[test]
    fn volume_round_trip_is_bit_identical_for_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridSpec::new(5, 0.5).unwrap();
        let data: Vec<f64> = (0..125).map(|i| (i as f32 * 0.1f32) as f64).collect();
        let v = Volume::from_data(grid, data).unwrap();
        write_volume(dir.path(), &v).unwrap();
        assert_eq!(read_volume(dir.path()).unwrap(), v);
    }

    #[test]
    fn pgm_header_and_clamping() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridSpec::new(4, 1.0).unwrap();
        let mut v = Volume::zeros(grid);
        v.data[grid.offset(0, 3, 2)] = 5.0;
        v.data[grid.offset(1, 3, 2)] = -1.0;
        v.data[grid.offset(2, 3, 2)] = 0.5;
        let path = dir.path().join("s.pgm");
        write_slice_pgm(&path, &v, 1.0).unwrap();
        let bytes = fs::read(&path).unwrap();
        let header = b"P5\n4 4\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        let px = &bytes[header.len()..];
        assert_eq!(px.len(), 32);
        assert_eq!(u16::from_be_bytes([px[0], px[1]]), 65535);
        assert_eq!(u16::from_be_bytes([px[2], px[3]]), 0);
        assert_eq!(u16::from_be_bytes([px[4], px[5]]), 32768);
    }
}
