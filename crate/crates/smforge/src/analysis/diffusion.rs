//! Spectral-diffusion statistics from per-scan line centers.

use crate::error::{Error, Result};
use crate::fit::{fit_lorentzian, Weighting};
use crate::instrument::ScanTrace;
use crate::units::Frequency;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionStat {
    pub molecule_id: u64,
    /// Sample standard deviation of the per-scan centers, MHz.
    pub sigma_f_mhz: f64,
    pub gamma_mhz: f64,
    /// 2 sigma_f / gamma.
    pub normalized_range: f64,
    pub n_scans: usize,
}

/// Raw scatter of per-scan fitted centers; needs at least two scans.
pub fn diffusion_stats(
    molecule_id: u64,
    centers: &[Frequency],
    gamma_mhz: f64,
) -> Result<DiffusionStat> {
    if centers.len() < 2 {
        return Err(Error::domain(format!(
            "diffusion_stats needs >= 2 centers, got {}",
            centers.len()
        )));
    }
    if !(gamma_mhz > 0.0) {
        return Err(Error::domain(format!("gamma must be positive, got {gamma_mhz}")));
    }
    let n = centers.len() as f64;
    let mean = centers.iter().map(|f| f.mhz()).sum::<f64>() / n;
    let var = centers.iter().map(|f| (f.mhz() - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sigma_f = var.sqrt();
    Ok(DiffusionStat {
        molecule_id,
        sigma_f_mhz: sigma_f,
        gamma_mhz,
        normalized_range: 2.0 * sigma_f / gamma_mhz,
        n_scans: centers.len(),
    })
}

/// Fit every repetition's trace with a Lorentzian and return the centers of
/// the converged fits.
pub fn scan_centers(traces: &[ScanTrace]) -> Vec<Frequency> {
    traces
        .iter()
        .filter_map(|t| {
            let f: Vec<f64> = t.freq.iter().map(|x| x.mhz()).collect();
            let y: Vec<f64> = t.rate.iter().map(|r| r.kcps()).collect();
            let res = fit_lorentzian(&f, &y, Weighting::PoissonLike, None);
            (res.converged && res.params[0].is_finite())
                .then(|| Frequency::from_mhz(res.params[0]))
        })
        .collect()
}

/// Linear-interpolated percentile (q in [0, 100]) of an unsorted slice.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    assert!((0.0..=100.0).contains(&q));
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        v[lo]
    } else {
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    }
}
