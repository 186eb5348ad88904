//! Dipole-angle recovery from polarization-resolved scans: per-angle line
//! peak rates fed into a cos^2 fit.

use super::catalog::MoleculeRecord;
use crate::fit::{fit_cos2, fit_lorentzian, Weighting};
use crate::instrument::FrameStack;
use crate::units::Angle;

/// Fill each record's `phi` from a stack series, one stack per polarization
/// angle (as from `simulate_polarization_series`).
///
/// Per record and angle, the counts in a ROI around the molecule are summed
/// per frequency step and fitted with a Lorentzian; the fitted amplitudes
/// versus angle go into `fit_cos2`. Molecules dark at some angles simply
/// contribute near-zero rates there. Records whose cos^2 fit fails are
/// flagged `phi fit failed`.
pub fn dipole_map(
    catalog: &mut [MoleculeRecord],
    stacks: &[FrameStack],
    roi_half_px: usize,
) -> Result<(), crate::error::Error> {
    if stacks.len() < 4 {
        return Err(crate::error::Error::Config(vec![format!(
            "dipole mapping needs >= 4 polarization angles, got {}",
            stacks.len()
        )]));
    }
    for rec in catalog.iter_mut() {
        let mut angles = Vec::with_capacity(stacks.len());
        let mut rates = Vec::with_capacity(stacks.len());
        for stack in stacks {
            let theta = stack.theta_axis.first().copied().unwrap_or(Angle::wrap(0.0));
            let amp = peak_rate(rec, stack, roi_half_px);
            angles.push(theta.degrees());
            rates.push(amp.max(0.0));
        }
        let fit = fit_cos2(&angles, &rates, Weighting::Plain);
        if fit.converged && fit.params[0].is_finite() {
            rec.phi = Some(Angle::wrap(fit.params[0]));
        } else {
            rec.phi = None;
            rec.flags.push("phi fit failed".to_string());
        }
    }
    Ok(())
}

/// Lorentzian amplitude of the record's line in one stack, from ROI-summed
/// counts per frequency step (averaged over repetitions).
fn peak_rate(rec: &MoleculeRecord, stack: &FrameStack, roi_half_px: usize) -> f64 {
    let w = stack.width as usize;
    let h = stack.height as usize;
    let (x0, y0) = stack.camera.origin_nm();
    let px = stack.camera.pixel_size_nm;
    let col = (((rec.position.x_nm - x0) / px) as isize).clamp(0, w as isize - 1) as usize;
    let row = (((rec.position.y_nm - y0) / px) as isize).clamp(0, h as isize - 1) as usize;
    let c0 = col.saturating_sub(roi_half_px);
    let c1 = (col + roi_half_px + 1).min(w);
    let r0 = row.saturating_sub(roi_half_px);
    let r1 = (row + roi_half_px + 1).min(h);

    // group frames by frequency step across repetitions
    let mut freq: Vec<f64> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut hits: Vec<f64> = Vec::new();
    for (t, frame) in stack.frames.iter().enumerate() {
        let f = stack.freq_axis[t].mhz();
        let mut s = 0.0;
        for r in r0..r1 {
            for c in c0..c1 {
                s += frame[r * w + c] as f64;
            }
        }
        match freq.iter().position(|&x| (x - f).abs() < 1e-6) {
            Some(i) => {
                sums[i] += s;
                hits[i] += 1.0;
            }
            None => {
                freq.push(f);
                sums.push(s);
                hits.push(1.0);
            }
        }
    }
    for (s, n) in sums.iter_mut().zip(&hits) {
        *s /= n;
    }
    // restrict the fit to a window around the known line
    let half_window = (rec.gamma_mhz * 10.0).max(200.0);
    let mut wf = Vec::new();
    let mut wy = Vec::new();
    for (f, y) in freq.iter().zip(&sums) {
        if (f - rec.f0.mhz()).abs() <= half_window {
            wf.push(*f);
            wy.push(*y);
        }
    }
    if wf.len() < 8 {
        return 0.0;
    }
    let init = {
        let base = wy.iter().cloned().fold(f64::INFINITY, f64::min);
        let peak = wy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        [rec.f0.mhz(), rec.gamma_mhz.max(1.0), (peak - base).max(0.0), base]
    };
    let fit = fit_lorentzian(&wf, &wy, Weighting::PoissonLike, Some(init));
    if fit.converged && fit.params[2].is_finite() {
        fit.params[2].max(0.0)
    } else {
        // fall back to the raw excess over the window baseline
        let base = wy.iter().cloned().fold(f64::INFINITY, f64::min);
        (wy.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - base).max(0.0)
    }
}
