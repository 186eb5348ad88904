//! Specific model fits: Lorentzian line, 2D Gaussian PSF, cos^2 response,
//! and the joint saturation-law fit.
//!
//! All fits use weighted least squares with Poisson-motivated weights
//! 1/sqrt(max(y, 1)) on count data by default, analytic Jacobians, and
//! deterministic derivative-free initialization.

use super::lm::{levenberg_marquardt, Bound, FitOptions, FitResult, Weighting};
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};
use statrs::function::erf::erf;

const SQRT2: f64 = std::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

fn digest_series(series: &[&[f64]]) -> String {
    let mut h = Sha256::new();
    for s in series {
        for v in *s {
            h.update(v.to_le_bytes());
        }
    }
    hex_string(&h.finalize())
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// Lorentzian
// ---------------------------------------------------------------------------

/// Fit `B + A (g/2)^2 / ((x - c)^2 + (g/2)^2)` to a trace.
///
/// `freq_mhz` may be absolute; fitting happens in coordinates shifted to the
/// first sample so the carrier does not eat precision. Result params are
/// `[center_mhz (absolute), fwhm_mhz, amplitude, baseline]`.
pub fn fit_lorentzian(
    freq_mhz: &[f64],
    rate: &[f64],
    weighting: Weighting,
    init_hint: Option<[f64; 4]>,
) -> FitResult {
    assert_eq!(freq_mhz.len(), rate.len());
    let model = "lorentzian";
    if freq_mhz.len() < 8 {
        return FitResult::flagged(vec![f64::NAN; 4], model, "fewer than 8 points");
    }
    let f_ref = freq_mhz[0];
    let xs: Vec<f64> = freq_mhz.iter().map(|f| f - f_ref).collect();
    let span = xs.last().unwrap() - xs[0];
    let w: Vec<f64> = rate.iter().map(|&y| weighting.weight(y)).collect();

    let init = match init_hint {
        Some([c, g, a, b]) => [c - f_ref, g, a, b],
        None => lorentzian_init(&xs, rate),
    };

    let resid = {
        let xs = xs.clone();
        let ys = rate.to_vec();
        let w = w.clone();
        move |p: &[f64]| -> Vec<f64> {
            let (c, g, a, b) = (p[0], p[1], p[2], p[3]);
            let hw2 = (g / 2.0) * (g / 2.0);
            xs.iter()
                .zip(&ys)
                .zip(&w)
                .map(|((&x, &y), &wi)| {
                    let d = x - c;
                    wi * (b + a * hw2 / (d * d + hw2) - y)
                })
                .collect()
        }
    };
    let jac = {
        let xs = xs.clone();
        let w = w.clone();
        move |p: &[f64]| -> DMatrix<f64> {
            let (c, g, a) = (p[0], p[1], p[2]);
            let h = g / 2.0;
            let hw2 = h * h;
            let mut out = DMatrix::zeros(xs.len(), 4);
            for (i, (&x, &wi)) in xs.iter().zip(&w).enumerate() {
                let d = x - c;
                let den = d * d + hw2;
                out[(i, 0)] = wi * a * hw2 * 2.0 * d / (den * den);
                out[(i, 1)] = wi * a * h * d * d / (den * den); // d/dg = (1/2) d/dh
                out[(i, 2)] = wi * hw2 / den;
                out[(i, 3)] = wi;
            }
            out
        }
    };

    let span_pad = span.max(1.0);
    // a line narrower than the sampling step is unresolvable and lets the
    // fit collapse onto a single noisy sample
    let mut steps: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    steps.sort_by(f64::total_cmp);
    let min_gamma = steps[steps.len() / 2].abs();
    let opts = FitOptions {
        bounds: Some(vec![
            Bound::Box(xs[0] - 0.1 * span_pad, xs[xs.len() - 1] + 0.1 * span_pad),
            Bound::Lower(min_gamma),
            Bound::Free,
            Bound::Free,
        ]),
        ..Default::default()
    };
    let mut res = levenberg_marquardt(resid, Some(&jac), &init, &opts);
    res.params[0] += f_ref;
    res.model = model.to_string();
    res.data_digest = digest_series(&[freq_mhz, rate]);
    res
}

fn lorentzian_init(xs: &[f64], ys: &[f64]) -> [f64; 4] {
    let n = xs.len();
    let (mut imax, mut ymax, mut ymin) = (0usize, f64::MIN, f64::MAX);
    for (i, &y) in ys.iter().enumerate() {
        if y > ymax {
            ymax = y;
            imax = i;
        }
        ymin = ymin.min(y);
    }
    let b = ymin;
    let a = (ymax - ymin).max(0.0);
    let c = xs[imax];
    let half = b + a / 2.0;
    // half-max crossings around the peak
    let mut left = xs[0];
    for i in (0..imax).rev() {
        if ys[i] <= half {
            left = xs[i];
            break;
        }
    }
    let mut right = xs[n - 1];
    for i in imax..n {
        if ys[i] <= half {
            right = xs[i];
            break;
        }
    }
    let span = xs[n - 1] - xs[0];
    let mut g = right - left;
    if !(g > 0.0) {
        g = span / 6.0;
    }
    [c, g.max(span * 1e-3), a, b]
}

// ---------------------------------------------------------------------------
// 2D Gaussian PSF
// ---------------------------------------------------------------------------

/// Pixel geometry of a region of interest in sample coordinates.
#[derive(Debug, Clone, Copy)]
pub struct PixelGrid {
    /// nm coordinate of the low edge of pixel column 0.
    pub x0_nm: f64,
    /// nm coordinate of the low edge of pixel row 0.
    pub y0_nm: f64,
    pub pixel_nm: f64,
    pub width: usize,
    pub height: usize,
}

impl PixelGrid {
    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.x0_nm + (col as f64 + 0.5) * self.pixel_nm,
            self.y0_nm + (row as f64 + 0.5) * self.pixel_nm,
        )
    }
}

/// Result of a PSF fit, params `[x0_nm, y0_nm, sx_nm, sy_nm, n_photons, baseline]`.
#[derive(Debug, Clone)]
pub struct Gaussian2dFit {
    pub fit: FitResult,
}

impl Gaussian2dFit {
    pub fn x_nm(&self) -> f64 {
        self.fit.params[0]
    }
    pub fn y_nm(&self) -> f64 {
        self.fit.params[1]
    }
    pub fn sigma_x_nm(&self) -> f64 {
        self.fit.params[2]
    }
    pub fn sigma_y_nm(&self) -> f64 {
        self.fit.params[3]
    }
    pub fn photons(&self) -> f64 {
        self.fit.params[4]
    }
    /// 1-sigma localization uncertainty of the center, nm.
    pub fn position_sigma_nm(&self) -> f64 {
        0.5 * (self.fit.sigma[0] + self.fit.sigma[1])
    }
}

/// Integral of a unit Gaussian over one pixel interval.
pub(crate) fn pixel_mass(lo: f64, hi: f64, mu: f64, sigma: f64) -> f64 {
    0.5 * (erf((hi - mu) / (sigma * SQRT2)) - erf((lo - mu) / (sigma * SQRT2)))
}

/// Fit an error-function-integrated 2D Gaussian plus flat baseline to a ROI.
///
/// `roi` is row-major counts. The amplitude parameter is the integrated
/// photon number of the spot.
pub fn fit_gaussian2d(roi: &[f64], grid: &PixelGrid, weighting: Weighting) -> Gaussian2dFit {
    assert_eq!(roi.len(), grid.width * grid.height);
    let model = "gaussian2d";
    if grid.width < 7 || grid.height < 7 {
        return Gaussian2dFit {
            fit: FitResult::flagged(vec![f64::NAN; 6], model, "roi smaller than 7x7"),
        };
    }

    let init = gaussian2d_init(roi, grid);
    let flat = init[4] <= 0.0 || !init[2].is_finite() || !init[3].is_finite();
    if flat {
        let mut fit = FitResult::flagged(init.to_vec(), model, "flat or empty roi");
        fit.data_digest = digest_series(&[roi]);
        return Gaussian2dFit { fit };
    }

    let g = *grid;
    let ys = roi.to_vec();
    let make_resid = |w: Vec<f64>| {
        let ys = ys.clone();
        move |p: &[f64]| -> Vec<f64> {
            let (x0, y0, sx, sy, n, b) = (p[0], p[1], p[2], p[3], p[4], p[5]);
            let ex: Vec<f64> = (0..g.width)
                .map(|c| {
                    let lo = g.x0_nm + c as f64 * g.pixel_nm;
                    pixel_mass(lo, lo + g.pixel_nm, x0, sx)
                })
                .collect();
            let ey: Vec<f64> = (0..g.height)
                .map(|r| {
                    let lo = g.y0_nm + r as f64 * g.pixel_nm;
                    pixel_mass(lo, lo + g.pixel_nm, y0, sy)
                })
                .collect();
            let mut out = Vec::with_capacity(ys.len());
            for r in 0..g.height {
                for c in 0..g.width {
                    let i = r * g.width + c;
                    out.push(w[i] * (b + n * ex[c] * ey[r] - ys[i]));
                }
            }
            out
        }
    };
    let make_jac = |w: Vec<f64>| {
        move |p: &[f64]| -> DMatrix<f64> {
            let (x0, y0, sx, sy, n) = (p[0], p[1], p[2], p[3], p[4]);
            let edge = |k: usize, origin: f64| origin + k as f64 * g.pixel_nm;
            // per-axis masses and their derivatives wrt center and width
            let mut ex = vec![0.0; g.width];
            let mut dex_dmu = vec![0.0; g.width];
            let mut dex_ds = vec![0.0; g.width];
            for c in 0..g.width {
                let lo = edge(c, g.x0_nm);
                let hi = lo + g.pixel_nm;
                ex[c] = pixel_mass(lo, hi, x0, sx);
                let phi = |x: f64| {
                    let t = (x - x0) / (sx * SQRT2);
                    (-t * t).exp() / (sx * SQRT_2PI)
                };
                dex_dmu[c] = -(phi(hi) - phi(lo));
                dex_ds[c] = -((hi - x0) * phi(hi) - (lo - x0) * phi(lo)) / sx;
            }
            let mut ey = vec![0.0; g.height];
            let mut dey_dmu = vec![0.0; g.height];
            let mut dey_ds = vec![0.0; g.height];
            for r in 0..g.height {
                let lo = edge(r, g.y0_nm);
                let hi = lo + g.pixel_nm;
                ey[r] = pixel_mass(lo, hi, y0, sy);
                let phi = |x: f64| {
                    let t = (x - y0) / (sy * SQRT2);
                    (-t * t).exp() / (sy * SQRT_2PI)
                };
                dey_dmu[r] = -(phi(hi) - phi(lo));
                dey_ds[r] = -((hi - y0) * phi(hi) - (lo - y0) * phi(lo)) / sy;
            }
            let mut out = DMatrix::zeros(g.width * g.height, 6);
            for r in 0..g.height {
                for c in 0..g.width {
                    let i = r * g.width + c;
                    let wi = w[i];
                    out[(i, 0)] = wi * n * dex_dmu[c] * ey[r];
                    out[(i, 1)] = wi * n * ex[c] * dey_dmu[r];
                    out[(i, 2)] = wi * n * dex_ds[c] * ey[r];
                    out[(i, 3)] = wi * n * ex[c] * dey_ds[r];
                    out[(i, 4)] = wi * ex[c] * ey[r];
                    out[(i, 5)] = wi;
                }
            }
            out
        }
    };

    let pix = grid.pixel_nm;
    let opts = FitOptions {
        bounds: Some(vec![
            Bound::Free,
            Bound::Free,
            Bound::Lower(0.05 * pix),
            Bound::Lower(0.05 * pix),
            Bound::Lower(0.0),
            Bound::Free,
        ]),
        ..Default::default()
    };
    let w: Vec<f64> = roi.iter().map(|&y| weighting.weight(y)).collect();
    let jac0 = make_jac(w.clone());
    let mut fit = levenberg_marquardt(make_resid(w), Some(&jac0), &init, &opts);

    // one reweighting pass: with Poisson weights taken from the noisy data,
    // downward-fluctuating pixels get too much say at low counts, so refit
    // with weights from the fitted model instead
    if weighting == Weighting::PoissonLike && fit.converged {
        let (x0, y0, sx, sy, n, b) =
            (fit.params[0], fit.params[1], fit.params[2], fit.params[3], fit.params[4], fit.params[5]);
        let mut w2 = Vec::with_capacity(roi.len());
        for r in 0..g.height {
            let lo = g.y0_nm + r as f64 * g.pixel_nm;
            let my = pixel_mass(lo, lo + g.pixel_nm, y0, sy);
            for c in 0..g.width {
                let lo = g.x0_nm + c as f64 * g.pixel_nm;
                let mu = b + n * pixel_mass(lo, lo + g.pixel_nm, x0, sx) * my;
                w2.push(weighting.weight(mu));
            }
        }
        let jac1 = make_jac(w2.clone());
        let refit = levenberg_marquardt(make_resid(w2), Some(&jac1), &fit.params, &opts);
        if refit.converged {
            fit = refit;
        }
    }
    fit.model = model.to_string();
    fit.data_digest = digest_series(&[roi]);
    Gaussian2dFit { fit }
}

fn gaussian2d_init(roi: &[f64], g: &PixelGrid) -> [f64; 6] {
    // baseline from the ROI border median
    let mut border: Vec<f64> = Vec::new();
    for r in 0..g.height {
        for c in 0..g.width {
            if r == 0 || c == 0 || r == g.height - 1 || c == g.width - 1 {
                border.push(roi[r * g.width + c]);
            }
        }
    }
    border.sort_by(|a, b| a.total_cmp(b));
    let b = border[border.len() / 2];
    let mut total = 0.0;
    let mut mx = 0.0;
    let mut my = 0.0;
    for r in 0..g.height {
        for c in 0..g.width {
            let v = (roi[r * g.width + c] - b).max(0.0);
            let (x, y) = g.pixel_center(c, r);
            total += v;
            mx += v * x;
            my += v * y;
        }
    }
    if total <= 0.0 {
        return [f64::NAN, f64::NAN, f64::NAN, f64::NAN, 0.0, b];
    }
    mx /= total;
    my /= total;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for r in 0..g.height {
        for c in 0..g.width {
            let v = (roi[r * g.width + c] - b).max(0.0);
            let (x, y) = g.pixel_center(c, r);
            vx += v * (x - mx) * (x - mx);
            vy += v * (y - my) * (y - my);
        }
    }
    let sx = (vx / total).sqrt().max(0.3 * g.pixel_nm);
    let sy = (vy / total).sqrt().max(0.3 * g.pixel_nm);
    [mx, my, sx, sy, total, b]
}

// ---------------------------------------------------------------------------
// cos^2 polarization response
// ---------------------------------------------------------------------------

/// Model value `offset + amplitude * cos^2(theta - phi)`, angles in degrees.
pub fn cos2_model(theta_deg: f64, phi_deg: f64, amplitude: f64, offset: f64) -> f64 {
    let d = (theta_deg - phi_deg).to_radians();
    offset + amplitude * d.cos().powi(2)
}

/// Fit `offset + amplitude * cos^2(theta - phi)`; params `[phi_deg, amplitude, offset]`.
/// The fitted phi is reported wrapped onto (-90, +90].
pub fn fit_cos2(angles_deg: &[f64], rates: &[f64], weighting: Weighting) -> FitResult {
    assert_eq!(angles_deg.len(), rates.len());
    let model = "cos2";
    let distinct = {
        let mut a: Vec<f64> = angles_deg.iter().map(|t| t.rem_euclid(180.0)).collect();
        a.sort_by(|x, y| x.total_cmp(y));
        a.dedup_by(|x, y| (*x - *y).abs() < 1e-9);
        a.len()
    };
    if distinct < 4 {
        return FitResult::flagged(vec![f64::NAN; 3], model, "fewer than 4 distinct angles");
    }
    let ymax = rates.iter().cloned().fold(f64::MIN, f64::max);
    let ymin = rates.iter().cloned().fold(f64::MAX, f64::min);
    if ymax - ymin <= 1e-12 * ymax.abs().max(1.0) {
        let mut r = FitResult::flagged(vec![f64::NAN, 0.0, ymax], model, "phi undetermined: constant rates");
        r.data_digest = digest_series(&[angles_deg, rates]);
        return r;
    }

    // Fourier component at period 180 degrees for the start point
    let n = angles_deg.len() as f64;
    let mut cc = 0.0;
    let mut ss = 0.0;
    let mut mean = 0.0;
    for (&t, &y) in angles_deg.iter().zip(rates) {
        let a2 = 2.0 * t.to_radians();
        cc += y * a2.cos();
        ss += y * a2.sin();
        mean += y;
    }
    mean /= n;
    let phi0 = 0.5 * ss.atan2(cc).to_degrees();
    let amp0 = (4.0 * (cc * cc + ss * ss).sqrt() / n).max(1e-9 * ymax.abs().max(1.0));
    let off0 = mean - amp0 / 2.0;

    let w: Vec<f64> = rates.iter().map(|&y| weighting.weight(y)).collect();
    let ts = angles_deg.to_vec();
    let ys = rates.to_vec();
    let resid = {
        let w = w.clone();
        let ts = ts.clone();
        move |p: &[f64]| -> Vec<f64> {
            ts.iter()
                .zip(&ys)
                .zip(&w)
                .map(|((&t, &y), &wi)| wi * (cos2_model(t, p[0], p[1], p[2]) - y))
                .collect()
        }
    };
    let jac = {
        let w = w.clone();
        move |p: &[f64]| -> DMatrix<f64> {
            let mut out = DMatrix::zeros(ts.len(), 3);
            for (i, (&t, &wi)) in ts.iter().zip(&w).enumerate() {
                let d = (t - p[0]).to_radians();
                out[(i, 0)] = wi * p[1] * (std::f64::consts::PI / 180.0) * (2.0 * d).sin();
                out[(i, 1)] = wi * d.cos().powi(2);
                out[(i, 2)] = wi;
            }
            out
        }
    };
    let opts = FitOptions {
        bounds: Some(vec![Bound::Free, Bound::Lower(0.0), Bound::Free]),
        ..Default::default()
    };
    let mut res = levenberg_marquardt(resid, Some(&jac), &[phi0, amp0, off0], &opts);
    res.params[0] = crate::units::Angle::wrap(res.params[0]).degrees();
    res.model = model.to_string();
    res.data_digest = digest_series(&[angles_deg, rates]);
    res
}

// ---------------------------------------------------------------------------
// Saturation law
// ---------------------------------------------------------------------------

/// Joint fit of peak rates and linewidths versus power to the saturation
/// law, sharing P_sat between the two branches.
/// Params: `[f_inf_kcps, p_sat_nw, gamma0_mhz]`.
pub fn fit_saturation(powers_nw: &[f64], peak_rates: &[f64], linewidths: &[f64]) -> FitResult {
    assert_eq!(powers_nw.len(), peak_rates.len());
    assert_eq!(powers_nw.len(), linewidths.len());
    let model = "saturation";
    let mut flags = Vec::new();
    if powers_nw.len() < 3 {
        flags.push("fewer than 3 powers: parameters poorly identified".to_string());
    }

    let rate_scale = peak_rates.iter().map(|r| r.abs()).fold(0.0f64, f64::max).max(1e-9);
    let width_scale = linewidths.iter().map(|g| g.abs()).fold(0.0f64, f64::max).max(1e-9);
    let ps = powers_nw.to_vec();
    let rs = peak_rates.to_vec();
    let gs = linewidths.to_vec();

    let resid = {
        let (ps, rs, gs) = (ps.clone(), rs.clone(), gs.clone());
        move |p: &[f64]| -> Vec<f64> {
            let (fi, psat, g0) = (p[0], p[1], p[2]);
            let mut out = Vec::with_capacity(2 * ps.len());
            for ((&pw, &r), &g) in ps.iter().zip(&rs).zip(&gs) {
                out.push((fi * pw / (pw + psat) - r) / rate_scale);
                out.push((g0 * ((pw + psat) / psat).sqrt() - g) / width_scale);
            }
            out
        }
    };
    let jac = {
        let ps = ps.clone();
        move |p: &[f64]| -> DMatrix<f64> {
            let (fi, psat, g0) = (p[0], p[1], p[2]);
            let mut out = DMatrix::zeros(2 * ps.len(), 3);
            for (i, &pw) in ps.iter().enumerate() {
                let den = pw + psat;
                out[(2 * i, 0)] = (pw / den) / rate_scale;
                out[(2 * i, 1)] = (-fi * pw / (den * den)) / rate_scale;
                let s = (den / psat).sqrt();
                out[(2 * i + 1, 1)] = (g0 * (-pw / (psat * psat)) / (2.0 * s)) / width_scale;
                out[(2 * i + 1, 2)] = s / width_scale;
            }
            out
        }
    };

    let fi0 = 1.2 * peak_rates.iter().cloned().fold(0.0f64, f64::max).max(1e-6);
    let g00 = linewidths.iter().cloned().fold(f64::MAX, f64::min).max(1e-6);
    let mut psat0 = median(powers_nw).max(1e-6);
    // refine: power where the rate reaches half the asymptote estimate
    for (&pw, &r) in powers_nw.iter().zip(peak_rates) {
        if r > fi0 / 2.4 {
            psat0 = pw.max(1e-6);
            break;
        }
    }
    let opts = FitOptions {
        bounds: Some(vec![Bound::Lower(0.0), Bound::Lower(0.0), Bound::Lower(0.0)]),
        max_iterations: 400,
        ..Default::default()
    };
    let mut res = levenberg_marquardt(resid, Some(&jac), &[fi0, psat0, g00], &opts);
    if powers_nw.len() < 3 {
        res.converged = false;
    }
    res.model = model.to_string();
    res.data_digest = digest_series(&[powers_nw, peak_rates, linewidths]);
    res.flags = flags;
    res
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    if v.is_empty() {
        return f64::NAN;
    }
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
