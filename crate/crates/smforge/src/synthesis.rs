//! Virtual printed-sample generation: a grid of nanocrystals, each with a
//! crystal-axis angle, populated with emitters whose resonance frequencies,
//! insertion sites, dipole angles, and positions follow the statistical
//! models of the sample.
//!
//! Dipole orientations relative to the crystal axis follow the axial
//! three-lobe mixture
//!
//! ```text
//! P(phi) = a N(phi; 0, sigma0) + (1-a)/2 [N(phi; +phi', sigma1) + N(phi; -phi', sigma1)]
//! ```
//!
//! with every Gaussian wrapped onto (-90, +90].

use crate::error::{Error, Result};
use crate::photophysics::{EmitterParams, Site};
use crate::rng::{StreamKind, StreamRng};
use crate::units::{Angle, CountRate, Frequency, Position2D, Power};
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Axial three-lobe Gaussian mixture for dipole orientations, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    /// Weight of the primary lobe at 0 degrees.
    pub a: f64,
    pub sigma0_deg: f64,
    /// Sideband offset, degrees.
    pub phi_prime_deg: f64,
    pub sigma1_deg: f64,
}

impl MixtureParams {
    /// The fitted values reported for the printed nanocrystals.
    pub fn paper() -> Self {
        MixtureParams { a: 0.63, sigma0_deg: 6.0, phi_prime_deg: 29.0, sigma1_deg: 12.5 }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(0.0..=1.0).contains(&self.a) {
            errs.push(format!("mixture.a must be in [0,1], got {}", self.a));
        }
        if !(self.sigma0_deg > 0.0) {
            errs.push("mixture.sigma0 must be positive".into());
        }
        if !(self.sigma1_deg > 0.0) {
            errs.push("mixture.sigma1 must be positive".into());
        }
        if !(0.0..=90.0).contains(&self.phi_prime_deg) {
            errs.push(format!("mixture.phi_prime must be in [0,90], got {}", self.phi_prime_deg));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Gaussian density wrapped onto the 180-degree axial domain.
fn wrapped_normal(phi_deg: f64, mu_deg: f64, sigma_deg: f64) -> f64 {
    let mut p = 0.0;
    for k in -3i32..=3 {
        let d = phi_deg - mu_deg - 180.0 * k as f64;
        p += (-0.5 * (d / sigma_deg).powi(2)).exp();
    }
    p / (sigma_deg * SQRT_2PI)
}

/// Mixture density per degree on (-90, +90]; integrates to 1.
pub fn mixture_pdf(phi: Angle, m: &MixtureParams) -> f64 {
    let x = phi.degrees();
    m.a * wrapped_normal(x, 0.0, m.sigma0_deg)
        + (1.0 - m.a) / 2.0
            * (wrapped_normal(x, m.phi_prime_deg, m.sigma1_deg)
                + wrapped_normal(x, -m.phi_prime_deg, m.sigma1_deg))
}

/// Draw a dipole angle: lobe choice by weights {a, (1-a)/2, (1-a)/2},
/// then a Gaussian, then axial wrap.
pub fn sample_dipole(m: &MixtureParams, rng: &mut StreamRng) -> Angle {
    let (mu, sigma, _) = pick_lobe(m, rng.uniform());
    let x = Normal::new(mu, sigma).unwrap().sample(rng);
    Angle::wrap(x)
}

/// Map a uniform variate to (center, sigma, lobe index 0/1/2).
fn pick_lobe(m: &MixtureParams, u: f64) -> (f64, f64, usize) {
    if u < m.a {
        (0.0, m.sigma0_deg, 0)
    } else if u < m.a + (1.0 - m.a) / 2.0 {
        (m.phi_prime_deg, m.sigma1_deg, 1)
    } else {
        (-m.phi_prime_deg, m.sigma1_deg, 2)
    }
}

/// Two-site inhomogeneous frequency model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteModel {
    pub center_red: Frequency,
    pub center_blue: Frequency,
    pub ib_width_red_ghz: f64,
    pub ib_width_blue_ghz: f64,
    /// Probability an emitter resides in the blue site.
    pub blue_fraction: f64,
}

impl SiteModel {
    /// Site centers and occupation reported for DBT in anthracene.
    pub fn paper() -> Self {
        SiteModel {
            center_red: Frequency::from_thz(377.4),
            center_blue: Frequency::from_thz(381.9),
            ib_width_red_ghz: 150.0,
            ib_width_blue_ghz: 300.0,
            blue_fraction: 0.95,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.ib_width_red_ghz > 0.0) {
            errs.push("site_model.ib_width_red must be positive".into());
        }
        if !(self.ib_width_blue_ghz > 0.0) {
            errs.push("site_model.ib_width_blue must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.blue_fraction) {
            errs.push(format!("site_model.blue_fraction must be in [0,1], got {}", self.blue_fraction));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Bernoulli site choice, then a Gaussian draw around the site center.
pub fn sample_frequency(model: &SiteModel, rng: &mut StreamRng) -> (Site, Frequency) {
    let blue = rng.uniform() < model.blue_fraction;
    let (center, width_ghz) = if blue {
        (model.center_blue, model.ib_width_blue_ghz)
    } else {
        (model.center_red, model.ib_width_red_ghz)
    };
    let f = Normal::new(center.mhz(), width_ghz * 1e3).unwrap().sample(rng);
    (if blue { Site::Blue } else { Site::Red }, Frequency::from_mhz(f))
}

/// Specification of a per-emitter scalar drawn at synthesis time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValueSpec {
    Fixed { value: f64 },
    /// Log-normal by median and the sigma of the underlying normal.
    LogNormal { median: f64, sigma_log: f64 },
    /// Log-normal shifted so the minimum is `min`; `median` is of the total.
    ShiftedLogNormal { min: f64, median: f64, sigma_log: f64 },
}

impl ValueSpec {
    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        match *self {
            ValueSpec::Fixed { value } => value,
            ValueSpec::LogNormal { median, sigma_log } => {
                let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(rng);
                median * (sigma_log * z).exp()
            }
            ValueSpec::ShiftedLogNormal { min, median, sigma_log } => {
                let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(rng);
                min + (median - min).max(0.0) * (sigma_log * z).exp()
            }
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            ValueSpec::Fixed { value } => value.is_finite() && value >= 0.0,
            ValueSpec::LogNormal { median, sigma_log } => median > 0.0 && sigma_log >= 0.0,
            ValueSpec::ShiftedLogNormal { min, median, sigma_log } => {
                min >= 0.0 && median >= min && sigma_log >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(vec![format!("{name}: invalid value spec {self:?}")]))
        }
    }
}

/// Geometry and doping of the synthesized sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub grid_nx: u32,
    pub grid_ny: u32,
    pub pitch_nm: f64,
    /// Positional jitter of each nanocrystal center, nm rms per axis.
    #[serde(default)]
    pub position_jitter_nm: f64,
    /// Lateral half-extent of a nanocrystal (disc radius), nm.
    pub nc_radius_nm: f64,
    /// Mean of the per-NC Poisson emitter count.
    pub doping_mean: f64,
    /// Truncate the Poisson draw from below.
    #[serde(default)]
    pub min_per_nc: u32,
    /// Force an exact emitter count per NC, overriding the Poisson draw.
    #[serde(default)]
    pub doping_fixed: Option<u32>,
    pub site_model: SiteModel,
    pub mixture: MixtureParams,
    pub gamma0_mhz: ValueSpec,
    pub p_sat_nw: f64,
    pub f_inf_kcps: f64,
    pub sigma_f_mhz: ValueSpec,
    #[serde(default)]
    pub jump_rate: f64,
    #[serde(default = "default_jump_scale")]
    pub jump_scale_mhz: f64,
}

fn default_jump_scale() -> f64 {
    150.0
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.grid_nx < 1 || self.grid_ny < 1 {
            errs.push(format!("grid dims must be >= 1, got {}x{}", self.grid_nx, self.grid_ny));
        }
        if !(self.pitch_nm > 0.0) {
            errs.push(format!("pitch must be positive, got {}", self.pitch_nm));
        }
        if !(self.nc_radius_nm > 0.0) {
            errs.push(format!("nc_radius must be positive, got {}", self.nc_radius_nm));
        }
        if !(self.doping_mean > 0.0) && self.doping_fixed.is_none() {
            errs.push(format!("doping_mean must be positive, got {}", self.doping_mean));
        }
        if !(self.p_sat_nw > 0.0) {
            errs.push("p_sat must be positive".into());
        }
        if !(self.f_inf_kcps >= 0.0) {
            errs.push("f_inf must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.jump_rate) {
            errs.push(format!("jump_rate must be in [0,1], got {}", self.jump_rate));
        }
        if let Err(Error::Config(mut e)) = self.site_model.validate() {
            errs.append(&mut e);
        }
        if let Err(Error::Config(mut e)) = self.mixture.validate() {
            errs.append(&mut e);
        }
        for (spec, name) in [(&self.gamma0_mhz, "gamma0"), (&self.sigma_f_mhz, "sigma_f")] {
            if let Err(Error::Config(mut e)) = spec.validate(name) {
                errs.append(&mut e);
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emitter {
    pub id: u64,
    pub nc_id: u32,
    pub pos: Position2D,
    pub params: EmitterParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nanocrystal {
    pub id: u32,
    pub center: Position2D,
    /// Crystal b-axis proxy.
    pub axis_angle: Angle,
    pub radius_nm: f64,
    pub emitters: Vec<Emitter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub nanocrystals: Vec<Nanocrystal>,
    /// (x_min, y_min, x_max, y_max) in nm.
    pub bounding_box_nm: (f64, f64, f64, f64),
    pub seed: u64,
}

impl Sample {
    pub fn emitters(&self) -> impl Iterator<Item = &Emitter> {
        self.nanocrystals.iter().flat_map(|nc| nc.emitters.iter())
    }

    pub fn emitter(&self, id: u64) -> Option<&Emitter> {
        self.emitters().find(|e| e.id == id)
    }

    pub fn emitter_count(&self) -> usize {
        self.nanocrystals.iter().map(|nc| nc.emitters.len()).sum()
    }
}

/// Generate a sample from the config, deterministically for a fixed seed.
///
/// Per-entity streams are keyed by (seed, kind, entity id), so the result is
/// identical whether NCs are generated serially or in parallel.
pub fn synthesize(config: &SampleConfig, seed: u64) -> Result<Sample> {
    config.validate()?;
    let n_ncs = (config.grid_nx as u64) * (config.grid_ny as u64);
    let nanocrystals: Vec<Nanocrystal> = (0..n_ncs)
        .into_par_iter()
        .map(|idx| synthesize_nc(config, seed, idx))
        .collect();

    let pad = config.nc_radius_nm + config.position_jitter_nm * 4.0;
    let bbox = (
        -pad,
        -pad,
        (config.grid_nx.max(1) - 1) as f64 * config.pitch_nm + pad,
        (config.grid_ny.max(1) - 1) as f64 * config.pitch_nm + pad,
    );
    Ok(Sample { nanocrystals, bounding_box_nm: bbox, seed })
}

fn synthesize_nc(config: &SampleConfig, seed: u64, idx: u64) -> Nanocrystal {
    let nc_id = idx as u32;
    let gx = (idx % config.grid_nx as u64) as f64;
    let gy = (idx / config.grid_nx as u64) as f64;
    let mut geo = StreamRng::new(seed, StreamKind::NcGeometry, idx);
    let jitter = config.position_jitter_nm;
    let center = Position2D::new(
        gx * config.pitch_nm + jitter * gauss(&mut geo),
        gy * config.pitch_nm + jitter * gauss(&mut geo),
    );
    // uniform axial orientation of the crystal axis
    let axis_angle = Angle::wrap(geo.uniform() * 180.0 - 90.0);
    let count = match config.doping_fixed {
        Some(n) => n,
        None => {
            let draw = Poisson::new(config.doping_mean).unwrap().sample(&mut geo) as u32;
            draw.max(config.min_per_nc)
        }
    };

    let emitters = (0..count)
        .map(|k| {
            let id = (idx << 24) | k as u64;
            let mut rng = StreamRng::new(seed, StreamKind::EmitterParams, id);
            // uniform position in the disc
            let r = config.nc_radius_nm * rng.uniform().sqrt();
            let th = rng.uniform() * std::f64::consts::TAU;
            let pos = Position2D::new(center.x_nm + r * th.cos(), center.y_nm + r * th.sin());
            let (site, f0) = sample_frequency(&config.site_model, &mut rng);
            let dipole_rel = sample_dipole(&config.mixture, &mut rng);
            let phi = Angle::wrap(axis_angle.degrees() + dipole_rel.degrees());
            let gamma0 = config.gamma0_mhz.sample(&mut rng).max(1e-3);
            let sigma_f = config.sigma_f_mhz.sample(&mut rng).max(0.0);
            Emitter {
                id,
                nc_id,
                pos,
                params: EmitterParams {
                    f0,
                    gamma0_mhz: gamma0,
                    p_sat: Power::from_nw(config.p_sat_nw),
                    f_inf: CountRate::from_kcps(config.f_inf_kcps),
                    phi,
                    sigma_f_mhz: sigma_f,
                    jump_rate: config.jump_rate,
                    jump_scale_mhz: config.jump_scale_mhz,
                    site,
                },
            }
        })
        .collect();

    Nanocrystal { id: nc_id, center, axis_angle, radius_nm: config.nc_radius_nm, emitters }
}

fn gauss(rng: &mut StreamRng) -> f64 {
    Normal::new(0.0, 1.0).unwrap().sample(rng)
}
