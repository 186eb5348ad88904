//! Scenario configuration: one strict JSON document describing the sample,
//! the instrument, and the analysis thresholds of a run.

use crate::analysis::CatalogOptions;
use crate::error::{Error, Result};
use crate::instrument::{CameraConfig, ScanConfig};
use crate::synthesis::SampleConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub sample: SampleConfig,
    pub instrument: InstrumentConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentConfig {
    pub scan: ScanConfig,
    #[serde(default)]
    pub camera: CameraConfig,
    /// Saturation-series powers, nW.
    #[serde(default)]
    pub powers_nw: Vec<f64>,
    /// Polarization-series angles, degrees.
    #[serde(default)]
    pub polarization_angles_deg: Vec<f64>,
    /// Emitter addressed by confocal commands; defaults to the first.
    #[serde(default)]
    pub target_emitter: Option<u64>,
    /// Emitters measured by the diffusion command; 0 means all.
    #[serde(default)]
    pub diffusion_cohort: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub catalog: CatalogOptions,
    pub pair_max_sep_nm: f64,
    pub pair_r_bin_nm: f64,
    pub pair_df_bin_ghz: f64,
    pub pair_df_max_ghz: f64,
    pub close_pair_r_nm: f64,
    pub close_pair_df_ghz: f64,
    pub min_per_nc: usize,
    pub superres_pixel_nm: f64,
    /// Localization PDF width assumed for ground-truth-derived catalogs, nm.
    pub assumed_sigma_nm: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            catalog: CatalogOptions::default(),
            pair_max_sep_nm: 150.0,
            pair_r_bin_nm: 5.0,
            pair_df_bin_ghz: 1.0,
            pair_df_max_ghz: 50.0,
            close_pair_r_nm: 10.0,
            close_pair_df_ghz: 10.0,
            min_per_nc: 3,
            superres_pixel_nm: 5.0,
            assumed_sigma_nm: 20.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        for r in [
            self.sample.validate(),
            self.instrument.scan.validate(),
            self.instrument.camera.validate(),
        ] {
            if let Err(Error::Config(mut e)) = r {
                errs.append(&mut e);
            }
        }
        if self.instrument.powers_nw.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            errs.push("instrument.powers_nw entries must be finite and non-negative".into());
        }
        let a = &self.analysis;
        for (v, name) in [
            (a.pair_max_sep_nm, "analysis.pair_max_sep_nm"),
            (a.pair_r_bin_nm, "analysis.pair_r_bin_nm"),
            (a.pair_df_bin_ghz, "analysis.pair_df_bin_ghz"),
            (a.pair_df_max_ghz, "analysis.pair_df_max_ghz"),
            (a.close_pair_r_nm, "analysis.close_pair_r_nm"),
            (a.close_pair_df_ghz, "analysis.close_pair_df_ghz"),
            (a.superres_pixel_nm, "analysis.superres_pixel_nm"),
            (a.assumed_sigma_nm, "analysis.assumed_sigma_nm"),
        ] {
            if !(v > 0.0) {
                errs.push(format!("{name} must be positive, got {v}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Parse and validate a scenario file; schema violations (including
    /// unknown keys) come back as config errors.
    pub fn load(path: &Path) -> Result<ScenarioConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        let cfg: ScenarioConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::{MixtureParams, SiteModel, ValueSpec};
    use crate::units::{Angle, Frequency, Power};
    use crate::instrument::ScanMode;

    pub(crate) fn minimal() -> ScenarioConfig {
        let f = Frequency::from_thz(381.9);
        ScenarioConfig {
            seed: 7,
            sample: SampleConfig {
                grid_nx: 1,
                grid_ny: 1,
                pitch_nm: 2000.0,
                position_jitter_nm: 0.0,
                nc_radius_nm: 425.0,
                doping_mean: 3.0,
                min_per_nc: 0,
                doping_fixed: None,
                site_model: SiteModel::paper(),
                mixture: MixtureParams::paper(),
                gamma0_mhz: ValueSpec::Fixed { value: 41.0 },
                p_sat_nw: 3.6,
                f_inf_kcps: 257.0,
                sigma_f_mhz: ValueSpec::Fixed { value: 0.0 },
                jump_rate: 0.0,
                jump_scale_mhz: 150.0,
            },
            instrument: InstrumentConfig {
                scan: ScanConfig {
                    f_start: Frequency::from_mhz(f.mhz() - 1000.0),
                    f_stop: Frequency::from_mhz(f.mhz() + 1000.0),
                    scan_rate_mhz_per_s: 1000.0,
                    exposure_s: 0.01,
                    repetitions: 2,
                    power: Power::from_nw(1.6),
                    theta_exc: Angle::wrap(0.0),
                    mode: ScanMode::WideField,
                    shot_noise: true,
                },
                camera: CameraConfig::default(),
                powers_nw: vec![],
                polarization_angles_deg: vec![],
                target_emitter: None,
                diffusion_cohort: 0,
            },
            analysis: AnalysisConfig::default(),
        }
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = minimal();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v: serde_json::Value = serde_json::to_value(minimal()).unwrap();
        v.as_object_mut().unwrap().insert("surprise".into(), 1.into());
        let r: std::result::Result<ScenarioConfig, _> = serde_json::from_value(v);
        assert!(r.is_err());
    }

    #[test]
    fn validation_lists_every_offender() {
        let mut cfg = minimal();
        cfg.sample.pitch_nm = -1.0;
        cfg.analysis.pair_r_bin_nm = 0.0;
        match cfg.validate() {
            Err(Error::Config(errs)) => {
                assert!(errs.iter().any(|e| e.contains("pitch")));
                assert!(errs.iter().any(|e| e.contains("pair_r_bin_nm")));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
