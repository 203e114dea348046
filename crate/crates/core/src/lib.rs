//! Optical diffraction tomography under the Born approximation for objects
//! that rotate about a time-varying axis.
//!
//! The crate covers the whole pipeline:
//!
//! * [`geometry`]: rotation trajectories, the semisphere map `Φ(k1, k2, t)`,
//!   Jacobian and multiplicity weights, k-space coverage diagnostics.
//! * [`phantom`]: ball phantoms with closed-form Fourier transforms.
//! * [`forward`]: detector-plane field simulation, noise, and the
//!   preprocessing that maps measured fields to k-space samples.
//! * [`nufft`]: the nonuniform DFT from the voxel grid to k-space nodes, in a
//!   direct and a gridding-based fast form.
//! * [`recon`]: filtered backpropagation, CG on the normal equations, and a
//!   nonnegative TV primal-dual solver.
//! * [`phase`]: hybrid input-output phase retrieval from intensity data.
//! * [`metrics`]: PSNR, SSIM and relative error.
//! * [`io`] and [`cli`]: file formats and the batch front-end.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod cli;
pub mod config;
pub mod error;
pub mod fft;
pub mod forward;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod nufft;
pub mod phantom;
pub mod phase;
pub mod recon;

pub use error::{OdtError, Result};
pub use num_complex::Complex64;

/// A point or direction in three dimensions.
pub type Vec3 = [f64; 3];
