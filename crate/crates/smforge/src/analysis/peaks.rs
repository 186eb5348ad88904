//! Local-maximum peak detection with prominence and separation gates.

use crate::units::Frequency;

/// A candidate line in a frequency spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakCandidate {
    pub index: usize,
    pub freq: Frequency,
    pub height: f64,
    pub prominence: f64,
    /// Half-open sample range to hand to the line fit.
    pub window: (usize, usize),
}

/// Find local maxima whose prominence exceeds `min_prominence`, keeping the
/// highest of any group closer than `min_separation_mhz`.
///
/// Prominence is the drop from the peak to the higher of the two valley
/// minima between it and the nearest taller sample on each side (trace ends
/// count as taller). The fit window spans those valleys.
pub fn detect_peaks(
    freq_mhz: &[f64],
    y: &[f64],
    min_prominence: f64,
    min_separation_mhz: f64,
) -> Vec<PeakCandidate> {
    assert_eq!(freq_mhz.len(), y.len());
    let n = y.len();
    if n < 3 {
        return Vec::new();
    }

    let mut cands = Vec::new();
    let mut i = 1;
    while i < n - 1 {
        if y[i] < y[i - 1] {
            i += 1;
            continue;
        }
        // plateau tolerant: require a strict drop after the flat top
        let mut j = i;
        while j + 1 < n && y[j + 1] == y[i] {
            j += 1;
        }
        if j + 1 >= n || y[j + 1] > y[i] || y[i] == y[i - 1] {
            i = j + 1;
            continue;
        }
        let peak = (i + j) / 2;

        // walk outwards to the nearest strictly taller sample
        let mut left_min = y[peak];
        let mut l = peak;
        while l > 0 {
            l -= 1;
            left_min = left_min.min(y[l]);
            if y[l] > y[peak] {
                break;
            }
        }
        let mut right_min = y[peak];
        let mut r = j;
        while r + 1 < n {
            r += 1;
            right_min = right_min.min(y[r]);
            if y[r] > y[peak] {
                break;
            }
        }
        let prominence = y[peak] - left_min.max(right_min);
        if prominence >= min_prominence {
            cands.push(PeakCandidate {
                index: peak,
                freq: Frequency::from_mhz(freq_mhz[peak]),
                height: y[peak],
                prominence,
                window: (l, r + 1),
            });
        }
        i = j + 1;
    }

    // enforce separation, keeping taller peaks first
    cands.sort_by(|a, b| b.height.total_cmp(&a.height));
    let mut kept: Vec<PeakCandidate> = Vec::new();
    for c in cands {
        if kept
            .iter()
            .all(|k| (k.freq.mhz() - c.freq.mhz()).abs() >= min_separation_mhz)
        {
            kept.push(c);
        }
    }
    kept.sort_by_key(|c| c.index);

    // comparable-height neighbours can both claim windows spanning the whole
    // trace (the outward walk stops only at a strictly taller sample), so
    // split adjacent windows at the valley between the two peaks
    for k in 1..kept.len() {
        let (a, b) = (kept[k - 1].index, kept[k].index);
        let valley = (a..=b)
            .min_by(|&p, &q| y[p].total_cmp(&y[q]))
            .unwrap_or(a);
        kept[k - 1].window.1 = kept[k - 1].window.1.min(valley + 1);
        kept[k].window.0 = kept[k].window.0.max(valley);
    }
    kept
}
