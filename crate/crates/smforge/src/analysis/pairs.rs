//! Pair statistics over a molecule catalog: distance/detuning enumeration
//! with a spatial grid, 2D histograms, and the annulus-corrected radial
//! profile.

use super::catalog::MoleculeRecord;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStat {
    pub id_a: u64,
    pub id_b: u64,
    pub distance_nm: f64,
    /// |f0_a - f0_b| in GHz.
    pub detuning_ghz: f64,
}

/// 2D histogram over (distance, |detuning|) plus the radial profile divided
/// by the annulus measure 2 pi r dr.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairHistogram {
    pub r_bin_nm: f64,
    pub df_bin_ghz: f64,
    /// counts[i][j]: distance bin i, detuning bin j.
    pub counts: Vec<Vec<u64>>,
    /// Distance marginal (all detunings), raw counts per bin.
    pub radial_counts: Vec<u64>,
    /// radial_counts / (2 pi r_center dr) per distance bin.
    pub radial_corrected: Vec<f64>,
}

/// Enumerate unordered pairs with separation <= `max_sep_nm`, skipping
/// ambiguous records, and bin them at 5 nm x 1 GHz by default.
///
/// Detunings beyond the last bin land in the histogram's final detuning
/// column; the pair list itself is exact.
pub fn pair_statistics(
    catalog: &[MoleculeRecord],
    max_sep_nm: f64,
    r_bin_nm: f64,
    df_bin_ghz: f64,
    df_max_ghz: f64,
) -> (Vec<PairStat>, PairHistogram) {
    assert!(max_sep_nm > 0.0 && r_bin_nm > 0.0 && df_bin_ghz > 0.0 && df_max_ghz > 0.0);
    let usable: Vec<&MoleculeRecord> =
        catalog.iter().filter(|r| !r.is_ambiguous()).collect();

    // spatial grid with cell size max_sep: all partners live in the 3x3
    // neighborhood, enumeration order never affects the result
    let cell = max_sep_nm;
    let key = |x: f64, y: f64| -> (i64, i64) {
        ((x / cell).floor() as i64, (y / cell).floor() as i64)
    };
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, r) in usable.iter().enumerate() {
        grid.entry(key(r.position.x_nm, r.position.y_nm)).or_default().push(i);
    }

    let mut pairs = Vec::new();
    for (i, a) in usable.iter().enumerate() {
        let (kx, ky) = key(a.position.x_nm, a.position.y_nm);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(cellmates) = grid.get(&(kx + dx, ky + dy)) else { continue };
                for &j in cellmates {
                    if j <= i {
                        continue;
                    }
                    let b = usable[j];
                    let d = a.position.distance_to(b.position);
                    if d <= max_sep_nm {
                        pairs.push(PairStat {
                            id_a: a.id,
                            id_b: b.id,
                            distance_nm: d,
                            detuning_ghz: (a.f0 - b.f0).ghz().abs(),
                        });
                    }
                }
            }
        }
    }
    pairs.sort_by(|p, q| (p.id_a, p.id_b).cmp(&(q.id_a, q.id_b)));

    let nr = (max_sep_nm / r_bin_nm).ceil() as usize;
    let nf = (df_max_ghz / df_bin_ghz).ceil() as usize;
    let mut counts = vec![vec![0u64; nf]; nr];
    let mut radial_counts = vec![0u64; nr];
    for p in &pairs {
        let i = ((p.distance_nm / r_bin_nm) as usize).min(nr - 1);
        let j = ((p.detuning_ghz / df_bin_ghz) as usize).min(nf - 1);
        counts[i][j] += 1;
        radial_counts[i] += 1;
    }
    let radial_corrected = radial_counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let r_center = (i as f64 + 0.5) * r_bin_nm;
            c as f64 / (2.0 * std::f64::consts::PI * r_center * r_bin_nm)
        })
        .collect();

    (
        pairs,
        PairHistogram { r_bin_nm, df_bin_ghz, counts, radial_counts, radial_corrected },
    )
}

/// Unordered pairs closer than `r_max_nm` and detuned by less than
/// `df_max_ghz` — the co-excitation candidates.
pub fn close_pair_count(catalog: &[MoleculeRecord], r_max_nm: f64, df_max_ghz: f64) -> usize {
    let (pairs, _) = pair_statistics(catalog, r_max_nm, r_max_nm, df_max_ghz, df_max_ghz);
    pairs
        .iter()
        .filter(|p| p.distance_nm < r_max_nm && p.detuning_ghz < df_max_ghz)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photophysics::Site;
    use crate::rng::StreamRng;
    use crate::units::{Frequency, Position2D};

    fn record(id: u64, x: f64, y: f64, f0_mhz_off: f64) -> MoleculeRecord {
        MoleculeRecord {
            id,
            nc_id: None,
            position: Position2D::new(x, y),
            position_sigma_nm: 10.0,
            f0: Frequency::from_mhz(Frequency::from_thz(381.9).mhz() + f0_mhz_off),
            gamma_mhz: 41.0,
            phi: None,
            site: Site::Blue,
            flags: vec![],
        }
    }

    #[test]
    fn two_records_give_one_pair() {
        let cat = vec![record(0, 0.0, 0.0, 0.0), record(1, 69.0, 0.0, 2000.0)];
        let (pairs, hist) = pair_statistics(&cat, 150.0, 5.0, 1.0, 50.0);
        assert_eq!(pairs.len(), 1);
        assert!((pairs[0].distance_nm - 69.0).abs() < 1e-9);
        assert!((pairs[0].detuning_ghz - 2.0).abs() < 1e-9);
        assert_eq!(hist.radial_counts.iter().sum::<u64>(), 1);
        assert_eq!(hist.counts[13][2], 1);
    }

    #[test]
    fn grid_enumeration_matches_brute_force() {
        let mut rng = StreamRng::from_seed(8);
        let cat: Vec<MoleculeRecord> = (0..400)
            .map(|i| {
                record(
                    i,
                    rng.uniform() * 3000.0,
                    rng.uniform() * 3000.0,
                    (rng.uniform() - 0.5) * 2e5,
                )
            })
            .collect();
        let (pairs, _) = pair_statistics(&cat, 150.0, 5.0, 1.0, 200.0);
        let mut brute = 0;
        for i in 0..cat.len() {
            for j in (i + 1)..cat.len() {
                if cat[i].position.distance_to(cat[j].position) <= 150.0 {
                    brute += 1;
                }
            }
        }
        assert_eq!(pairs.len(), brute);
    }

    #[test]
    fn relabeling_leaves_histograms_identical() {
        let mut rng = StreamRng::from_seed(9);
        let mut cat: Vec<MoleculeRecord> = (0..100)
            .map(|i| record(i, rng.uniform() * 500.0, rng.uniform() * 500.0, rng.uniform() * 1e4))
            .collect();
        let (_, h1) = pair_statistics(&cat, 150.0, 5.0, 1.0, 50.0);
        cat.reverse();
        for (i, r) in cat.iter_mut().enumerate() {
            r.id = 1000 + i as u64;
        }
        let (_, h2) = pair_statistics(&cat, 150.0, 5.0, 1.0, 50.0);
        assert_eq!(h1, h2);
    }

    #[test]
    fn ambiguous_records_are_excluded() {
        let mut a = record(0, 0.0, 0.0, 0.0);
        let b = record(1, 5.0, 0.0, 1000.0);
        a.flags.push("ambiguous".to_string());
        let (pairs, _) = pair_statistics(&[a, b], 150.0, 5.0, 1.0, 50.0);
        assert!(pairs.is_empty());
    }

    #[test]
    fn close_pair_gates_are_strict_and() {
        let cat = vec![
            record(0, 0.0, 0.0, 0.0),
            record(1, 5.0, 0.0, 5000.0),   // close and resonant: counted
            record(2, 50.0, 0.0, 1000.0),  // too far
            record(3, 3.0, 0.0, 50_000.0), // too detuned
        ];
        assert_eq!(close_pair_count(&cat, 10.0, 10.0), 1);
        assert_eq!(close_pair_count(&[], 10.0, 10.0), 0);
    }
}
