//! smforge: forward simulation and inverse analysis for single-molecule
//! fluorescence excitation spectroscopy of dye-doped organic nanocrystals.
//!
//! The library synthesizes virtual printed samples, renders measurement
//! records (wide-field frame stacks, confocal scan traces, saturation and
//! polarization series), and recovers the physical parameters back out with
//! the standard analysis chain: Lorentzian line fits, saturation-law fits,
//! super-resolution localization, pair statistics, spectral-diffusion
//! statistics, and axial Gaussian-mixture fits of dipole orientations.
//!
//! See the guide in `book/` for worked examples of every stage.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod fit;
pub mod formats;
pub mod guide;
pub mod instrument;
pub mod io;
pub mod manifest;
pub mod photophysics;
pub mod rng;
pub mod synthesis;
pub mod units;

pub use error::{Error, Result};
