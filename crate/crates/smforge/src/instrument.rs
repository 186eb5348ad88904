//! Measurement rendering: wide-field frame stacks versus laser frequency and
//! polarization, confocal scan traces, and saturation series.
//!
//! Frames are built from the expected photon image — background plus each
//! emitter's rate times exposure, spread over pixels by error-function
//! integration of a Gaussian PSF — and then Poisson-sampled per pixel.
//! Mechanical drift is linear-in-time plus a per-frame random walk. All noise
//! draws come from counter-based streams keyed by (seed, kind, index), so
//! stacks are bit-identical regardless of how frames are scheduled.

use crate::error::{Error, Result};
use crate::fit::models::pixel_mass;
use crate::photophysics::{diffuse_center, expected_rate};
use crate::rng::{StreamKind, StreamRng};
use crate::synthesis::{Emitter, Sample};
use crate::units::{Angle, CountRate, Frequency, Power};
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    WideField,
    Confocal,
}

/// One frequency scan: laser sweep parameters plus drive power and
/// polarization. The frame/step duration is `exposure_s`; the frequency step
/// is `scan_rate * exposure`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub f_start: Frequency,
    pub f_stop: Frequency,
    pub scan_rate_mhz_per_s: f64,
    pub exposure_s: f64,
    pub repetitions: u32,
    pub power: Power,
    pub theta_exc: Angle,
    pub mode: ScanMode,
    /// Poisson shot noise; disable for analytic expected-value outputs.
    #[serde(default = "default_true")]
    pub shot_noise: bool,
}

fn default_true() -> bool {
    true
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.f_stop <= self.f_start {
            errs.push("scan.f_stop must exceed f_start".to_string());
        }
        if !(self.scan_rate_mhz_per_s > 0.0) {
            errs.push(format!("scan.scan_rate must be positive, got {}", self.scan_rate_mhz_per_s));
        }
        if !(self.exposure_s > 0.0) {
            errs.push(format!("scan.exposure must be positive, got {}", self.exposure_s));
        }
        if self.repetitions < 1 {
            errs.push("scan.repetitions must be >= 1".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Frequency advance per step/frame, MHz.
    pub fn step_mhz(&self) -> f64 {
        self.scan_rate_mhz_per_s * self.exposure_s
    }

    /// Laser frequencies of one repetition, f_start inclusive.
    pub fn freq_axis(&self) -> Vec<Frequency> {
        let span = (self.f_stop - self.f_start).mhz();
        let step = self.step_mhz();
        let n = (span / step).floor() as usize + 1;
        (0..n).map(|i| Frequency::from_mhz(self.f_start.mhz() + i as f64 * step)).collect()
    }
}

/// Wide-field detection geometry and noise floor. The field of view is
/// centered on the sample origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub pixel_size_nm: f64,
    pub width: u32,
    pub height: u32,
    pub psf_sigma_nm: f64,
    /// Mean background, counts per pixel per frame.
    pub background: f64,
    /// Linear drift (x, y), nm per hour.
    pub drift_velocity_nm_per_hour: (f64, f64),
    /// Random-walk step, nm per sqrt(frame).
    pub drift_rw_sigma_nm: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            pixel_size_nm: 100.0,
            width: 128,
            height: 128,
            psf_sigma_nm: 130.0,
            background: 2.0,
            drift_velocity_nm_per_hour: (20.0, 0.0),
            drift_rw_sigma_nm: 0.5,
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.pixel_size_nm > 0.0) {
            errs.push("camera.pixel_size must be positive".to_string());
        }
        if !(self.psf_sigma_nm > 0.0) {
            errs.push("camera.psf_sigma must be positive".to_string());
        }
        if !(self.background >= 0.0) {
            errs.push("camera.background must be non-negative".to_string());
        }
        if self.width < 1 || self.height < 1 {
            errs.push("camera dimensions must be >= 1".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// nm coordinate of the low edge of pixel column 0 (x) / row 0 (y).
    pub fn origin_nm(&self) -> (f64, f64) {
        (
            -(self.width as f64) * self.pixel_size_nm / 2.0,
            -(self.height as f64) * self.pixel_size_nm / 2.0,
        )
    }
}

/// Stack of camera frames with per-frame laser frequency and polarization.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    pub width: u32,
    pub height: u32,
    pub freq_axis: Vec<Frequency>,
    pub theta_axis: Vec<Angle>,
    /// Row-major counts, one vector per frame.
    pub frames: Vec<Vec<u32>>,
    pub camera: CameraConfig,
}

impl FrameStack {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }
}

/// One confocal frequency sweep: detected rate per laser step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTrace {
    pub freq: Vec<Frequency>,
    pub rate: Vec<CountRate>,
    pub rep_index: u32,
}

// ---------------------------------------------------------------------------
// frame rendering
// ---------------------------------------------------------------------------

// emitters with expected counts below this never touch the image; keeps the
// per-frame cost proportional to the number of active lines
const MIN_EXPECTED_COUNTS: f64 = 1e-9;

/// Expected (noise-free) photon image for one frame.
///
/// `centers` carries each emitter's current (possibly diffused) resonance;
/// entries must align with `emitters`. Flux is conserved: the image integral
/// over an unbounded detector equals exposure times the summed rates plus
/// background.
pub fn expected_image(
    emitters: &[&Emitter],
    centers: &[Frequency],
    f_laser: Frequency,
    theta_exc: Angle,
    power: Power,
    camera: &CameraConfig,
    drift_nm: (f64, f64),
    exposure_s: f64,
) -> Vec<f64> {
    assert_eq!(emitters.len(), centers.len());
    let w = camera.width as usize;
    let h = camera.height as usize;
    let p = camera.pixel_size_nm;
    let s = camera.psf_sigma_nm;
    let (x0, y0) = camera.origin_nm();
    let mut img = vec![camera.background; w * h];

    for (e, &center) in emitters.iter().zip(centers) {
        let n_photons =
            expected_rate(f_laser, power, theta_exc, center, &e.params).kcps() * 1e3 * exposure_s;
        if n_photons < MIN_EXPECTED_COUNTS {
            continue;
        }
        let mx = e.pos.x_nm + drift_nm.0;
        let my = e.pos.y_nm + drift_nm.1;
        // cull emitters whose PSF mass inside the field of view is negligible
        if mx < x0 - 8.0 * s
            || mx > x0 + w as f64 * p + 8.0 * s
            || my < y0 - 8.0 * s
            || my > y0 + h as f64 * p + 8.0 * s
        {
            continue;
        }
        // separable erf masses per column and row
        let col_mass: Vec<f64> =
            (0..w).map(|j| pixel_mass(x0 + j as f64 * p, x0 + (j + 1) as f64 * p, mx, s)).collect();
        let row_mass: Vec<f64> =
            (0..h).map(|i| pixel_mass(y0 + i as f64 * p, y0 + (i + 1) as f64 * p, my, s)).collect();
        for (i, rm) in row_mass.iter().enumerate() {
            if *rm == 0.0 {
                continue;
            }
            let row = &mut img[i * w..(i + 1) * w];
            for (px, cm) in row.iter_mut().zip(&col_mass) {
                *px += n_photons * rm * cm;
            }
        }
    }
    img
}

/// Poisson-sample an expected image into integer counts; with `shot_noise`
/// off the expectation is rounded instead.
pub fn sample_image(expected: &[f64], shot_noise: bool, rng: &mut StreamRng) -> Vec<u32> {
    expected
        .iter()
        .map(|&mu| {
            if !shot_noise {
                mu.round() as u32
            } else if mu > 0.0 {
                Poisson::new(mu).unwrap().sample(rng) as u32
            } else {
                0
            }
        })
        .collect()
}

/// Render one observed frame with emitters at their nominal centers.
pub fn render_frame(
    sample: &Sample,
    f_laser: Frequency,
    theta_exc: Angle,
    power: Power,
    camera: &CameraConfig,
    drift_nm: (f64, f64),
    exposure_s: f64,
    shot_noise: bool,
    rng: &mut StreamRng,
) -> Vec<u32> {
    let emitters: Vec<&Emitter> = sample.emitters().collect();
    let centers: Vec<Frequency> = emitters.iter().map(|e| e.params.f0).collect();
    let exp = expected_image(
        &emitters, &centers, f_laser, theta_exc, power, camera, drift_nm, exposure_s,
    );
    sample_image(&exp, shot_noise, rng)
}

// ---------------------------------------------------------------------------
// scans
// ---------------------------------------------------------------------------

// the drift random walk draws from the frame-noise namespace at an id no
// frame index can reach
const DRIFT_STREAM_ID: u64 = u64::MAX;

/// Per-frame drift offsets for `n_frames` frames: linear velocity sampled at
/// the frame midpoint plus a cumulative Gaussian random walk.
fn drift_track(camera: &CameraConfig, exposure_s: f64, n_frames: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = StreamRng::new(seed, StreamKind::FrameNoise, DRIFT_STREAM_ID);
    let step = Normal::new(0.0, camera.drift_rw_sigma_nm).unwrap();
    let (vx, vy) = camera.drift_velocity_nm_per_hour;
    let mut rw = (0.0, 0.0);
    (0..n_frames)
        .map(|t| {
            if camera.drift_rw_sigma_nm > 0.0 {
                rw.0 += step.sample(&mut rng);
                rw.1 += step.sample(&mut rng);
            }
            let hours = (t as f64 + 0.5) * exposure_s / 3600.0;
            (vx * hours + rw.0, vy * hours + rw.1)
        })
        .collect()
}

fn undersampling_warnings(sample: &Sample, scan: &ScanConfig) -> Vec<String> {
    let min_gamma =
        sample.emitters().map(|e| e.params.gamma0_mhz).fold(f64::INFINITY, f64::min);
    if scan.step_mhz() > min_gamma / 4.0 {
        vec![format!(
            "frequency step {:.1} MHz exceeds a quarter of the narrowest linewidth {:.1} MHz; lines are undersampled",
            scan.step_mhz(),
            min_gamma
        )]
    } else {
        Vec::new()
    }
}

/// Wide-field frequency scan: one frame per step, `repetitions` sweeps
/// concatenated. Emitter centers re-diffuse once per repetition; drift
/// advances every frame. Returns the stack and any undersampling warnings.
pub fn simulate_widefield_scan(
    sample: &Sample,
    scan: &ScanConfig,
    camera: &CameraConfig,
    seed: u64,
) -> Result<(FrameStack, Vec<String>)> {
    if scan.mode != ScanMode::WideField {
        return Err(Error::domain("simulate_widefield_scan requires mode = wide_field"));
    }
    Ok(widefield_core(sample, scan, camera, seed, scan.theta_exc, 0))
}

/// Shared wide-field renderer; `frame_id_offset` separates the noise streams
/// of stacks that belong to one run (e.g. one per polarization angle).
fn widefield_core(
    sample: &Sample,
    scan: &ScanConfig,
    camera: &CameraConfig,
    seed: u64,
    theta_exc: Angle,
    frame_id_offset: u64,
) -> (FrameStack, Vec<String>) {
    let axis = scan.freq_axis();
    let reps = scan.repetitions as usize;
    let n_frames = axis.len() * reps;
    let emitters: Vec<&Emitter> = sample.emitters().collect();

    // per-repetition diffused centers, each from the emitter's own stream
    let centers_per_rep: Vec<Vec<Frequency>> = (0..reps)
        .map(|r| {
            emitters
                .iter()
                .map(|e| {
                    diffuse_center(&e.params, r, StreamRng::new(seed, StreamKind::Diffusion, e.id))
                })
                .collect()
        })
        .collect();
    let drift = drift_track(camera, scan.exposure_s, n_frames, seed);

    let frames: Vec<Vec<u32>> = (0..n_frames)
        .into_par_iter()
        .map(|t| {
            let rep = t / axis.len();
            let f_laser = axis[t % axis.len()];
            let exp = expected_image(
                &emitters,
                &centers_per_rep[rep],
                f_laser,
                theta_exc,
                scan.power,
                camera,
                drift[t],
                scan.exposure_s,
            );
            let mut rng =
                StreamRng::new(seed, StreamKind::FrameNoise, frame_id_offset + t as u64);
            sample_image(&exp, scan.shot_noise, &mut rng)
        })
        .collect();

    let freq_axis: Vec<Frequency> =
        (0..n_frames).map(|t| axis[t % axis.len()]).collect();
    let stack = FrameStack {
        width: camera.width,
        height: camera.height,
        freq_axis,
        theta_axis: vec![theta_exc; n_frames],
        frames,
        camera: camera.clone(),
    };
    (stack, undersampling_warnings(sample, scan))
}

/// Confocal frequency sweeps of one addressed emitter, one trace per
/// repetition. The emitter's center re-diffuses per repetition; detected
/// counts per step are Poisson unless shot noise is disabled.
pub fn simulate_confocal_trace(
    sample: &Sample,
    emitter_id: u64,
    scan: &ScanConfig,
    seed: u64,
) -> Result<Vec<ScanTrace>> {
    let e = sample.emitter(emitter_id).ok_or(Error::UnknownEmitter(emitter_id))?;
    let axis = scan.freq_axis();
    let reps = scan.repetitions as usize;
    let traces: Vec<ScanTrace> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            trace_once(e, &axis, scan, seed, rep, 0)
        })
        .collect();
    Ok(traces)
}

/// One sweep of one emitter. `scan_index` addresses the diffusion sequence;
/// `trace_id_offset` separates noise streams between powers in a series.
fn trace_once(
    e: &Emitter,
    axis: &[Frequency],
    scan: &ScanConfig,
    seed: u64,
    scan_index: usize,
    trace_id_offset: u64,
) -> ScanTrace {
    let center =
        diffuse_center(&e.params, scan_index, StreamRng::new(seed, StreamKind::Diffusion, e.id));
    // emitter ids occupy the low 40 bits, leaving room for the sweep index
    let mut rng = StreamRng::new(
        seed,
        StreamKind::TraceNoise,
        ((trace_id_offset + scan_index as u64) << 40) | e.id,
    );
    let rate: Vec<CountRate> = axis
        .iter()
        .map(|&f| {
            let r = expected_rate(f, scan.power, scan.theta_exc, center, &e.params);
            if !scan.shot_noise {
                return r;
            }
            let mu = r.kcps() * 1e3 * scan.exposure_s;
            let counts = if mu > 0.0 { Poisson::new(mu).unwrap().sample(&mut rng) } else { 0.0 };
            CountRate::from_kcps(counts / (1e3 * scan.exposure_s))
        })
        .collect();
    ScanTrace { freq: axis.to_vec(), rate, rep_index: scan_index as u32 }
}

/// Saturation series: for each power, `scan.repetitions` sweeps averaged
/// into one trace. Diffusion and noise streams advance across powers so no
/// sweep repeats.
pub fn simulate_saturation_series(
    sample: &Sample,
    emitter_id: u64,
    powers: &[Power],
    scan: &ScanConfig,
    seed: u64,
) -> Result<Vec<(Power, ScanTrace)>> {
    if powers.is_empty() {
        return Err(Error::Config(vec!["saturation series needs at least one power".into()]));
    }
    let e = sample.emitter(emitter_id).ok_or(Error::UnknownEmitter(emitter_id))?;
    let axis = scan.freq_axis();
    let reps = scan.repetitions as usize;
    let out = powers
        .iter()
        .enumerate()
        .map(|(q, &p)| {
            let sweep = ScanConfig { power: p, ..scan.clone() };
            let mut avg = vec![0.0f64; axis.len()];
            for rep in 0..reps {
                let t = trace_once(e, &axis, &sweep, seed, q * reps + rep, (q * reps) as u64);
                for (a, r) in avg.iter_mut().zip(&t.rate) {
                    *a += r.kcps();
                }
            }
            let rate = avg.into_iter().map(|s| CountRate::from_kcps(s / reps as f64)).collect();
            (p, ScanTrace { freq: axis.clone(), rate, rep_index: 0 })
        })
        .collect();
    Ok(out)
}

/// Wide-field scans at several polarization angles, one stack per angle.
pub fn simulate_polarization_series(
    sample: &Sample,
    angles: &[Angle],
    scan: &ScanConfig,
    camera: &CameraConfig,
    seed: u64,
) -> Result<Vec<FrameStack>> {
    let distinct = {
        let mut a: Vec<f64> = angles.iter().map(|t| t.degrees()).collect();
        a.sort_by(|x, y| x.total_cmp(y));
        a.dedup_by(|x, y| (*x - *y).abs() < 1e-9);
        a.len()
    };
    if distinct < 2 {
        return Err(Error::Config(vec![format!(
            "polarization series needs >= 2 distinct angles, got {distinct}"
        )]));
    }
    let frames_per_stack = scan.freq_axis().len() as u64 * scan.repetitions as u64;
    Ok(angles
        .iter()
        .enumerate()
        .map(|(a, &theta)| {
            widefield_core(sample, scan, camera, seed, theta, a as u64 * frames_per_stack).0
        })
        .collect())
}
