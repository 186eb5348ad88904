//! Closed-form emitter response: Lorentzian lineshape, saturation of count
//! rate and power broadening, polarization projection, and the spectral
//! diffusion process acting on the resonance center.
//!
//! The saturation law is
//!
//! ```text
//! F_det(P) = F_det(inf) * P / (P + P_sat)
//! gamma(P) = gamma0 * sqrt((P + P_sat) / P_sat)
//! ```
//!
//! and the detected rate of a driven emitter is the Lorentzian built from
//! the power-broadened width, with the drive projected onto the transition
//! dipole as `P_eff = P * cos^2(phi - theta_exc)`.

use crate::rng::StreamRng;
use crate::units::{Angle, CountRate, Frequency, Power};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Crystallographic insertion site of an emitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Site {
    Red,
    Blue,
}

/// Full physical description of one emitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterParams {
    /// 00ZPL center.
    pub f0: Frequency,
    /// Intrinsic FWHM in MHz.
    pub gamma0_mhz: f64,
    /// Saturation power.
    pub p_sat: Power,
    /// Detected rate at full saturation.
    pub f_inf: CountRate,
    /// In-plane transition dipole angle.
    pub phi: Angle,
    /// Spectral-diffusion standard deviation of the center, MHz.
    pub sigma_f_mhz: f64,
    /// Per-scan probability of a discrete persistent spectral jump.
    pub jump_rate: f64,
    /// Laplace scale of jump magnitudes, MHz.
    pub jump_scale_mhz: f64,
    pub site: Site,
}

impl EmitterParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma0_mhz > 0.0) {
            return Err(format!("gamma0 must be positive, got {}", self.gamma0_mhz));
        }
        if !(self.p_sat.nw() > 0.0) {
            return Err("p_sat must be positive".into());
        }
        if !(self.sigma_f_mhz >= 0.0) {
            return Err("sigma_f must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.jump_rate) {
            return Err(format!("jump_rate must be in [0,1], got {}", self.jump_rate));
        }
        Ok(())
    }
}

/// Parameters of a single Lorentzian line above a flat baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianParams {
    pub center: Frequency,
    pub fwhm_mhz: f64,
    pub amplitude: CountRate,
    pub baseline: CountRate,
}

/// Lorentzian line evaluated at an absolute frequency.
pub fn lorentzian(f: Frequency, p: &LorentzianParams) -> CountRate {
    let d = (f - p.center).mhz();
    let hw = p.fwhm_mhz / 2.0;
    CountRate::from_kcps(p.baseline.kcps() + p.amplitude.kcps() * hw * hw / (d * d + hw * hw))
}

/// Saturated on-resonance count rate, F_det(inf) * P / (P + P_sat).
pub fn saturated_rate(power: Power, e: &EmitterParams) -> CountRate {
    let p = power.nw();
    CountRate::from_kcps(e.f_inf.kcps() * p / (p + e.p_sat.nw()))
}

/// Power-broadened FWHM in MHz, gamma0 * sqrt((P + P_sat) / P_sat).
pub fn broadened_linewidth(power: Power, e: &EmitterParams) -> f64 {
    e.gamma0_mhz * ((power.nw() + e.p_sat.nw()) / e.p_sat.nw()).sqrt()
}

/// cos^2 projection of the drive onto the transition dipole.
pub fn polarization_factor(phi: Angle, theta_exc: Angle) -> f64 {
    let d = (phi.degrees() - theta_exc.degrees()).to_radians();
    d.cos().powi(2)
}

/// Detected rate for a laser at `f_laser` driving an emitter whose current
/// (possibly diffused) center is `f_center_now`.
///
/// Both the saturated peak rate and the broadened width are evaluated at the
/// polarization-projected power, since the drive strength along the dipole
/// sets the excitation level.
pub fn expected_rate(
    f_laser: Frequency,
    power: Power,
    theta_exc: Angle,
    f_center_now: Frequency,
    e: &EmitterParams,
) -> CountRate {
    let p_eff = Power::from_nw(power.nw() * polarization_factor(e.phi, theta_exc));
    if p_eff.nw() == 0.0 {
        return CountRate::from_kcps(0.0);
    }
    let peak = saturated_rate(p_eff, e);
    let hw = broadened_linewidth(p_eff, e) / 2.0;
    let d = (f_laser - f_center_now).mhz();
    CountRate::from_kcps(peak.kcps() * hw * hw / (d * d + hw * hw))
}

/// Spectral-diffusion process on the resonance center.
///
/// Per scan the center is `f0 + jump_offset + Gaussian(0, sigma_f)`; with
/// probability `jump_rate` a new persistent offset is drawn from
/// Laplace(0, jump_scale) and replaces the previous one.
#[derive(Debug, Clone)]
pub struct DiffusionProcess {
    params: EmitterParams,
    rng: StreamRng,
    jump_offset_mhz: f64,
}

impl DiffusionProcess {
    pub fn new(params: &EmitterParams, rng: StreamRng) -> Self {
        DiffusionProcess { params: params.clone(), rng, jump_offset_mhz: 0.0 }
    }

    /// Center for the next scan in the sequence.
    pub fn next_center(&mut self) -> Frequency {
        let e = &self.params;
        if e.jump_rate > 0.0 && self.rng.uniform() < e.jump_rate {
            self.jump_offset_mhz = self.rng.laplace(e.jump_scale_mhz);
        } else if e.jump_rate > 0.0 {
            // keep the draw count per scan fixed so sequences stay aligned
            let _ = self.rng.next();
        }
        let jitter = if e.sigma_f_mhz > 0.0 {
            Normal::new(0.0, e.sigma_f_mhz).unwrap().sample(&mut self.rng)
        } else {
            0.0
        };
        Frequency::from_mhz(e.f0.mhz() + self.jump_offset_mhz + jitter)
    }

    /// Centers for `n_scans` consecutive scans.
    pub fn series(&mut self, n_scans: usize) -> Vec<Frequency> {
        (0..n_scans).map(|_| self.next_center()).collect()
    }
}

/// Center sequence of length `scan_index + 1`, last element returned.
/// Convenience for callers that address scans by index.
pub fn diffuse_center(e: &EmitterParams, scan_index: usize, rng: StreamRng) -> Frequency {
    let mut proc = DiffusionProcess::new(e, rng);
    let mut f = proc.next_center();
    for _ in 0..scan_index {
        f = proc.next_center();
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{StreamKind, StreamRng};
    use approx::assert_relative_eq;

    fn paper_emitter() -> EmitterParams {
        EmitterParams {
            f0: Frequency::from_thz(383.0),
            gamma0_mhz: 41.0,
            p_sat: Power::from_nw(3.6),
            f_inf: CountRate::from_kcps(257.0),
            phi: Angle::wrap(0.0),
            sigma_f_mhz: 0.0,
            jump_rate: 0.0,
            jump_scale_mhz: 150.0,
            site: Site::Blue,
        }
    }

    #[test]
    fn lorentzian_peak_and_fwhm() {
        let p = LorentzianParams {
            center: Frequency::from_thz(383.0),
            fwhm_mhz: 28.0,
            amplitude: CountRate::from_kcps(100.0),
            baseline: CountRate::from_kcps(5.0),
        };
        assert_relative_eq!(lorentzian(p.center, &p).kcps(), 105.0, max_relative = 1e-12);
        let half = p.center + crate::units::Detuning::from_mhz(14.0);
        assert_relative_eq!(lorentzian(half, &p).kcps(), 55.0, max_relative = 1e-12);
        let far = p.center + crate::units::Detuning::from_mhz(5.0 * 28.0);
        assert_relative_eq!(lorentzian(far, &p).kcps(), 5.0 + 100.0 / 101.0, max_relative = 1e-12);
    }

    #[test]
    fn saturation_law_values() {
        let e = paper_emitter();
        assert_eq!(saturated_rate(Power::from_nw(0.0), &e).kcps(), 0.0);
        assert_relative_eq!(saturated_rate(e.p_sat, &e).kcps(), 128.5, max_relative = 1e-12);
        assert_relative_eq!(
            saturated_rate(Power::from_nw(95.0), &e).kcps(),
            257.0 * 95.0 / 98.6,
            max_relative = 1e-12
        );
        assert!((saturated_rate(Power::from_nw(95.0), &e).kcps() - 247.6).abs() < 0.1);
    }

    #[test]
    fn power_broadening_values() {
        let e = paper_emitter();
        assert_relative_eq!(broadened_linewidth(Power::from_nw(0.0), &e), 41.0, max_relative = 1e-12);
        assert_relative_eq!(broadened_linewidth(e.p_sat, &e), 41.0 * 2f64.sqrt(), max_relative = 1e-12);
        let g95 = broadened_linewidth(Power::from_nw(95.0), &e);
        assert!((g95 - 214.6).abs() < 0.1, "gamma(95nW) = {g95}");
    }

    #[test]
    fn broadening_squared_minus_gamma0_squared_linear_in_power() {
        let e = paper_emitter();
        let slope = |p: f64| (broadened_linewidth(Power::from_nw(p), &e).powi(2) - 41f64.powi(2)) / p;
        let s1 = slope(1.0);
        for p in [0.1, 2.7, 10.0, 500.0] {
            assert_relative_eq!(slope(p), s1, max_relative = 1e-9);
        }
    }

    #[test]
    fn polarization_identities() {
        let phi = Angle::wrap(37.0);
        assert_relative_eq!(polarization_factor(phi, phi), 1.0, max_relative = 1e-12);
        assert!(polarization_factor(phi, Angle::wrap(37.0 + 90.0)) < 1e-30);
        assert_relative_eq!(polarization_factor(phi, Angle::wrap(37.0 + 45.0)), 0.5, max_relative = 1e-9);
        for t in [-81.0, 0.0, 12.5, 60.0] {
            let s = polarization_factor(phi, Angle::wrap(t)) + polarization_factor(phi, Angle::wrap(t + 90.0));
            assert_relative_eq!(s, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn expected_rate_composition() {
        let e = paper_emitter();
        let on_res = expected_rate(e.f0, e.p_sat, e.phi, e.f0, &e);
        assert_relative_eq!(on_res.kcps(), 257.0 / 2.0, max_relative = 1e-12);
        let orth = expected_rate(e.f0, Power::from_nw(50.0), Angle::wrap(90.0), e.f0, &e);
        assert!(orth.kcps() < 1e-20, "orthogonal drive leaks: {}", orth.kcps());
        // half height at the power-broadened half width
        let hw = broadened_linewidth(e.p_sat, &e) / 2.0;
        let half = expected_rate(
            Frequency::from_mhz(e.f0.mhz() + hw),
            e.p_sat,
            e.phi,
            e.f0,
            &e,
        );
        // the carrier eats ~2e-9 of relative precision in the detuning
        assert_relative_eq!(half.kcps(), on_res.kcps() / 2.0, max_relative = 1e-8);
    }

    #[test]
    fn lorentzian_area_identity_by_quadrature() {
        // integral over detuning equals (pi/2) * gamma(P_eff) * peak,
        // checked with the tan substitution x = (gamma/2) tan(u)
        let e = paper_emitter();
        let p = Power::from_nw(6.6);
        let peak = expected_rate(e.f0, p, e.phi, e.f0, &e).kcps();
        let gamma = broadened_linewidth(p, &e);
        let hw = gamma / 2.0;
        let n = 20_001usize;
        let h = std::f64::consts::PI / (n - 1) as f64;
        let mut integral = 0.0;
        for i in 0..n {
            let u = -std::f64::consts::FRAC_PI_2 + i as f64 * h;
            let x = hw * u.tan();
            let jac = hw / u.cos().powi(2);
            let y = if x.is_finite() && jac.is_finite() && e.f0.mhz() + x > 1.0 {
                expected_rate(Frequency::from_mhz(e.f0.mhz() + x), p, e.phi, e.f0, &e).kcps() * jac
            } else {
                // endpoints: integrand tends to peak * hw (finite limit)
                peak * hw
            };
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            integral += w * y * h;
        }
        let expected = std::f64::consts::FRAC_PI_2 * gamma * peak;
        assert_relative_eq!(integral, expected, max_relative = 1e-6);
    }

    #[test]
    fn diffusion_zero_sigma_is_exact() {
        let e = paper_emitter();
        let mut proc = DiffusionProcess::new(&e, StreamRng::new(1, StreamKind::Diffusion, 0));
        for f in proc.series(100) {
            assert_eq!(f.mhz(), e.f0.mhz());
        }
    }

    #[test]
    fn diffusion_std_matches_sigma_f() {
        let mut e = paper_emitter();
        e.sigma_f_mhz = 26.0;
        let mut proc = DiffusionProcess::new(&e, StreamRng::new(42, StreamKind::Diffusion, 7));
        let centers = proc.series(1600);
        let mean = centers.iter().map(|f| f.mhz()).sum::<f64>() / 1600.0;
        let var = centers.iter().map(|f| (f.mhz() - mean).powi(2)).sum::<f64>() / 1599.0;
        let sd = var.sqrt();
        assert!((sd - 26.0).abs() < 2.6, "sd = {sd}");
        // Gaussian CDF oracle: ~68.27% within one sigma
        let within = centers
            .iter()
            .filter(|f| (f.mhz() - e.f0.mhz()).abs() <= 26.0)
            .count() as f64
            / 1600.0;
        assert!((within - 0.6827).abs() < 0.03, "within = {within}");
    }

    #[test]
    fn diffusion_is_reproducible() {
        let mut e = paper_emitter();
        e.sigma_f_mhz = 26.0;
        e.jump_rate = 0.01;
        let a: Vec<f64> = DiffusionProcess::new(&e, StreamRng::new(3, StreamKind::Diffusion, 1))
            .series(200)
            .iter()
            .map(|f| f.mhz())
            .collect();
        let b: Vec<f64> = DiffusionProcess::new(&e, StreamRng::new(3, StreamKind::Diffusion, 1))
            .series(200)
            .iter()
            .map(|f| f.mhz())
            .collect();
        assert_eq!(a, b);
        assert_eq!(
            diffuse_center(&e, 150, StreamRng::new(3, StreamKind::Diffusion, 1)).mhz(),
            a[150]
        );
    }

    #[test]
    fn saturated_rate_monotone_concave_bounded() {
        let e = paper_emitter();
        let mut prev = -1.0;
        let mut prev_slope = f64::INFINITY;
        for i in 0..200 {
            let p = i as f64 * 1.0;
            let r = saturated_rate(Power::from_nw(p), &e).kcps();
            assert!(r < e.f_inf.kcps());
            assert!(r > prev);
            if i > 0 {
                let slope = r - prev;
                assert!(slope <= prev_slope + 1e-12);
                prev_slope = slope;
            }
            prev = r;
        }
    }
}
