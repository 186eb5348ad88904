//! Molecule cataloging from wide-field frame stacks: frequency-band
//! detection on the pixel-summed spectrum, per-repetition PSF localization,
//! and a Lorentzian line fit per band.

use super::peaks::detect_peaks;
use crate::fit::{fit_gaussian2d, fit_lorentzian, PixelGrid, Weighting};
use crate::instrument::FrameStack;
use crate::photophysics::Site;
use crate::units::{Angle, Frequency, Position2D};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeRecord {
    pub id: u64,
    pub nc_id: Option<u32>,
    pub position: Position2D,
    /// Width of the localization PDF: scatter of the per-repetition
    /// localizations, or the fit uncertainty when only one exists.
    pub position_sigma_nm: f64,
    pub f0: Frequency,
    pub gamma_mhz: f64,
    pub phi: Option<Angle>,
    pub site: Site,
    pub flags: Vec<String>,
}

impl MoleculeRecord {
    pub fn is_ambiguous(&self) -> bool {
        self.flags.iter().any(|f| f == "ambiguous")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogOptions {
    /// Prominence gate on the pixel-summed spectrum, counts.
    pub min_prominence: f64,
    pub min_separation_mhz: f64,
    /// Localization ROI half-width, pixels (ROI is 2h+1 square).
    pub roi_half_px: usize,
    /// Red/blue site boundary.
    pub site_threshold: Frequency,
    /// Records in overlapping bands closer than this many PSF widths are
    /// flagged ambiguous.
    pub ambiguity_psf_factor: f64,
    /// The prominence gate is raised to at least this many shot-noise
    /// standard deviations of the pixel-summed spectrum baseline.
    pub noise_sigma_factor: f64,
}

impl Default for CatalogOptions {
    fn default() -> Self {
        CatalogOptions {
            min_prominence: 50.0,
            min_separation_mhz: 30.0,
            roi_half_px: 5,
            site_threshold: Frequency::from_thz(382.0),
            ambiguity_psf_factor: 2.0,
            noise_sigma_factor: 8.0,
        }
    }
}

/// Frame indices of each repetition; a repetition ends where the frequency
/// axis steps backwards.
fn repetition_spans(stack: &FrameStack) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    for t in 1..stack.freq_axis.len() {
        if stack.freq_axis[t].mhz() < stack.freq_axis[t - 1].mhz() {
            spans.push((start, t));
            start = t;
        }
    }
    if start < stack.freq_axis.len() {
        spans.push((start, stack.freq_axis.len()));
    }
    spans
}

fn sum_range(frame: &[u32], width: usize, c0: usize, c1: usize, r0: usize, r1: usize) -> f64 {
    let mut s = 0.0;
    for r in r0..r1 {
        for c in c0..c1 {
            s += frame[r * width + c] as f64;
        }
    }
    s
}

/// Build a molecule catalog from a frame stack.
///
/// Lines are found on the spectrum of pixel-summed counts per frequency step
/// (summed over repetitions); each line is localized per repetition with a
/// pixel-integrated Gaussian fit on the band-integrated image, and its
/// (f0, gamma) come from a Lorentzian fit of the ROI-summed counts versus
/// frequency. Records whose bands overlap while sitting within one
/// diffraction spot are flagged `ambiguous`.
pub fn build_catalog(stack: &FrameStack, options: &CatalogOptions) -> Vec<MoleculeRecord> {
    let w = stack.width as usize;
    let h = stack.height as usize;
    if stack.frames.is_empty() {
        return Vec::new();
    }
    let spans = repetition_spans(stack);
    let steps = spans.iter().map(|s| s.1 - s.0).min().unwrap();
    let (x0, y0) = stack.camera.origin_nm();
    let px = stack.camera.pixel_size_nm;

    // pixel-summed spectrum over all repetitions
    let freq_mhz: Vec<f64> = (0..steps).map(|s| stack.freq_axis[spans[0].0 + s].mhz()).collect();
    let spectrum: Vec<f64> = (0..steps)
        .map(|s| {
            spans
                .iter()
                .map(|&(a, _)| stack.frames[a + s].iter().map(|&c| c as f64).sum::<f64>())
                .sum()
        })
        .collect();
    // Poisson shot noise on the pixel-summed baseline easily exceeds a
    // fixed prominence; gate relative to the typical spectrum level too
    let mut sorted = spectrum.clone();
    sorted.sort_by(f64::total_cmp);
    let baseline = sorted[sorted.len() / 2];
    let prominence = options
        .min_prominence
        .max(options.noise_sigma_factor * baseline.max(1.0).sqrt());
    let peaks = detect_peaks(&freq_mhz, &spectrum, prominence, options.min_separation_mhz);

    let mut records = Vec::new();
    for (pid, peak) in peaks.iter().enumerate() {
        let (lo, hi) = peak.window;

        // per-repetition localization on the band-integrated image
        let mut locs: Vec<(f64, f64)> = Vec::new();
        let mut fit_sigmas: Vec<f64> = Vec::new();
        let mut roi_box: Option<(usize, usize, usize, usize)> = None;
        for &(a, _) in &spans {
            let mut img = vec![0.0f64; w * h];
            for s in lo..hi {
                for (p, &c) in img.iter_mut().zip(&stack.frames[a + s]) {
                    *p += c as f64;
                }
            }
            let bright = img
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.total_cmp(y.1))
                .map(|(i, _)| i)
                .unwrap();
            let (br, bc) = (bright / w, bright % w);
            let hb = options.roi_half_px;
            let c0 = bc.saturating_sub(hb);
            let c1 = (bc + hb + 1).min(w);
            let r0 = br.saturating_sub(hb);
            let r1 = (br + hb + 1).min(h);
            if c1 - c0 < 7 || r1 - r0 < 7 {
                continue;
            }
            roi_box = Some((c0, c1, r0, r1));
            let grid = PixelGrid {
                x0_nm: x0 + c0 as f64 * px,
                y0_nm: y0 + r0 as f64 * px,
                pixel_nm: px,
                width: c1 - c0,
                height: r1 - r0,
            };
            let roi: Vec<f64> = (r0..r1)
                .flat_map(|r| (c0..c1).map(move |c| (r, c)))
                .map(|(r, c)| img[r * w + c])
                .collect();
            let g = fit_gaussian2d(&roi, &grid, Weighting::PoissonLike);
            if g.fit.converged {
                locs.push((g.x_nm(), g.y_nm()));
                fit_sigmas.push((g.fit.sigma[0] + g.fit.sigma[1]) / 2.0);
            }
        }
        if locs.is_empty() {
            continue;
        }
        let n = locs.len() as f64;
        let mx = locs.iter().map(|p| p.0).sum::<f64>() / n;
        let my = locs.iter().map(|p| p.1).sum::<f64>() / n;
        let position_sigma = if locs.len() > 1 {
            let vx = locs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>() / (n - 1.0);
            let vy = locs.iter().map(|p| (p.1 - my).powi(2)).sum::<f64>() / (n - 1.0);
            ((vx + vy) / 2.0).sqrt()
        } else {
            fit_sigmas[0]
        };

        // line fit on the ROI-summed counts per step, averaged over reps
        let (c0, c1, r0, r1) = roi_box.unwrap();
        let band_freq: Vec<f64> = freq_mhz[lo..hi].to_vec();
        let band_counts: Vec<f64> = (lo..hi)
            .map(|s| {
                spans
                    .iter()
                    .map(|&(a, _)| sum_range(&stack.frames[a + s], w, c0, c1, r0, r1))
                    .sum::<f64>()
                    / spans.len() as f64
            })
            .collect();
        let lor = fit_lorentzian(&band_freq, &band_counts, Weighting::PoissonLike, None);
        let fit_ok = lor.converged
            && lor.params[0].is_finite()
            && lor.params[0] > 0.0
            && lor.params[1].is_finite()
            && lor.params[1] > 0.0
            && lor.params[0] >= band_freq[0]
            && lor.params[0] <= band_freq[band_freq.len() - 1];
        if !fit_ok {
            // a band that cannot support a line fit is not a molecule record
            continue;
        }
        let f0 = Frequency::from_mhz(lor.params[0]);
        let gamma = lor.params[1];

        records.push((pid, MoleculeRecord {
            id: records.len() as u64,
            nc_id: None,
            position: Position2D::new(mx, my),
            position_sigma_nm: position_sigma,
            f0,
            gamma_mhz: gamma,
            phi: None,
            site: if f0 >= options.site_threshold { Site::Blue } else { Site::Red },
            flags: Vec::new(),
        }));
    }

    // ambiguity: bands that overlap in frequency within one diffraction spot
    let spot = options.ambiguity_psf_factor * stack.camera.psf_sigma_nm;
    let mut ambiguous = vec![false; records.len()];
    for i in 0..records.len() {
        for j in (i + 1)..records.len() {
            let ri = &records[i].1;
            let rj = &records[j].1;
            // lines closer than the sum of their widths are spectrally blended
            let bands_overlap =
                (ri.f0.mhz() - rj.f0.mhz()).abs() < ri.gamma_mhz + rj.gamma_mhz;
            if bands_overlap && ri.position.distance_to(rj.position) < spot {
                ambiguous[i] = true;
                ambiguous[j] = true;
            }
        }
    }
    records
        .into_iter()
        .zip(ambiguous)
        .map(|((_, mut r), amb)| {
            if amb {
                r.flags.push("ambiguous".to_string());
            }
            r
        })
        .collect()
}
