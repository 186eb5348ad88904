//! Nanocrystal registration: mean-center each NC's molecules, rotate its
//! modal dipole orientation onto the x axis, and pool the displaced
//! positions into one cloud.

use super::catalog::MoleculeRecord;
use crate::rng::{StreamKind, StreamRng};
use crate::units::{axial_difference, Angle, Position2D};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisteredPoint {
    pub molecule_id: u64,
    pub nc_id: u32,
    /// Displacement from the NC centroid, rotated into the NC frame.
    pub pos: Position2D,
    pub position_sigma_nm: f64,
    /// Dipole angle relative to the NC's modal orientation.
    pub phi_rel: Angle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisteredCloud {
    pub points: Vec<RegisteredPoint>,
    /// NC ids dropped for having fewer than `min_per_nc` usable molecules.
    pub excluded_ncs: Vec<u32>,
}

/// Robust modal orientation: the sample angle minimizing the summed axial
/// distances to all others (an outlier-insensitive circular median over the
/// 180-degree-periodic domain).
fn modal_orientation(phis: &[Angle]) -> Angle {
    let best = phis
        .iter()
        .min_by(|&&a, &&b| {
            let cost = |m: Angle| -> f64 {
                phis.iter().map(|&p| axial_difference(p, m).degrees().abs()).sum()
            };
            cost(a).total_cmp(&cost(b))
        })
        .copied()
        .unwrap();
    best
}

/// Register the catalog per nanocrystal. Records missing `nc_id` or `phi`
/// are skipped; groups smaller than `min_per_nc` are reported, not pooled.
pub fn register_ncs(catalog: &[MoleculeRecord], min_per_nc: usize) -> RegisteredCloud {
    let mut groups: BTreeMap<u32, Vec<&MoleculeRecord>> = BTreeMap::new();
    for r in catalog {
        if let (Some(nc), Some(_)) = (r.nc_id, r.phi) {
            groups.entry(nc).or_default().push(r);
        }
    }

    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for (nc, members) in groups {
        if members.len() < min_per_nc {
            excluded.push(nc);
            continue;
        }
        let n = members.len() as f64;
        let cx = members.iter().map(|r| r.position.x_nm).sum::<f64>() / n;
        let cy = members.iter().map(|r| r.position.y_nm).sum::<f64>() / n;
        let phis: Vec<Angle> = members.iter().map(|r| r.phi.unwrap()).collect();
        let modal = modal_orientation(&phis);
        let (s, c) = (-modal.radians()).sin_cos();
        for r in members {
            let dx = r.position.x_nm - cx;
            let dy = r.position.y_nm - cy;
            points.push(RegisteredPoint {
                molecule_id: r.id,
                nc_id: nc,
                pos: Position2D::new(c * dx - s * dy, s * dx + c * dy),
                position_sigma_nm: r.position_sigma_nm,
                phi_rel: axial_difference(r.phi.unwrap(), modal),
            });
        }
    }
    RegisteredCloud { points, excluded_ncs: excluded }
}

/// Pearson correlation between |phi_rel| and radial distance in the
/// registered cloud, with a permutation-test p-value (two-sided) from
/// `n_perm` shuffles of the angle column.
pub fn phi_position_correlation(
    cloud: &RegisteredCloud,
    n_perm: usize,
    seed: u64,
) -> (f64, f64) {
    let xs: Vec<f64> = cloud.points.iter().map(|p| p.pos.x_nm.hypot(p.pos.y_nm)).collect();
    let ys: Vec<f64> = cloud.points.iter().map(|p| p.phi_rel.degrees().abs()).collect();
    let r_obs = pearson(&xs, &ys);
    if n_perm == 0 {
        return (r_obs, f64::NAN);
    }
    let mut rng = StreamRng::new(seed, StreamKind::Analysis, 0);
    let mut extreme = 0usize;
    let mut perm = ys.clone();
    for _ in 0..n_perm {
        // Fisher-Yates with the deterministic stream
        for i in (1..perm.len()).rev() {
            let j = (rng.uniform() * (i + 1) as f64) as usize;
            perm.swap(i, j);
        }
        if pearson(&xs, &perm).abs() >= r_obs.abs() {
            extreme += 1;
        }
    }
    (r_obs, (extreme + 1) as f64 / (n_perm + 1) as f64)
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photophysics::Site;
    use crate::rng::StreamRng;
    use crate::units::Frequency;

    fn record(id: u64, nc: u32, x: f64, y: f64, phi: f64) -> MoleculeRecord {
        MoleculeRecord {
            id,
            nc_id: Some(nc),
            position: Position2D::new(x, y),
            position_sigma_nm: 20.0,
            f0: Frequency::from_thz(381.9),
            gamma_mhz: 41.0,
            phi: Some(Angle::wrap(phi)),
            site: Site::Blue,
            flags: vec![],
        }
    }

    #[test]
    fn centroid_is_subtracted_exactly() {
        let cat = vec![
            record(0, 0, 100.0, 50.0, 10.0),
            record(1, 0, 200.0, 50.0, 10.0),
            record(2, 0, 300.0, 50.0, 10.0),
        ];
        let cloud = register_ncs(&cat, 3);
        assert_eq!(cloud.points.len(), 3);
        let sx: f64 = cloud.points.iter().map(|p| p.pos.x_nm).sum();
        let sy: f64 = cloud.points.iter().map(|p| p.pos.y_nm).sum();
        assert!(sx.abs() < 1e-9 && sy.abs() < 1e-9);
        // all dipoles at the modal angle: phi_rel = 0
        assert!(cloud.points.iter().all(|p| p.phi_rel.degrees().abs() < 1e-9));
    }

    #[test]
    fn small_groups_are_excluded_with_a_report() {
        let cat = vec![
            record(0, 0, 0.0, 0.0, 5.0),
            record(1, 0, 10.0, 0.0, 5.0),
            record(2, 1, 0.0, 0.0, 5.0),
            record(3, 1, 10.0, 0.0, 5.0),
            record(4, 1, 20.0, 0.0, 5.0),
        ];
        let cloud = register_ncs(&cat, 3);
        assert_eq!(cloud.excluded_ncs, vec![0]);
        assert_eq!(cloud.points.len(), 3);
    }

    #[test]
    fn translation_equivariance() {
        let base = vec![
            record(0, 0, 0.0, 0.0, -20.0),
            record(1, 0, 150.0, 80.0, 0.0),
            record(2, 0, 250.0, -40.0, 10.0),
        ];
        let shifted: Vec<MoleculeRecord> = base
            .iter()
            .cloned()
            .map(|mut r| {
                r.position = Position2D::new(r.position.x_nm + 5000.0, r.position.y_nm - 321.0);
                r
            })
            .collect();
        let a = register_ncs(&base, 3);
        let b = register_ncs(&shifted, 3);
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!((p.pos.x_nm - q.pos.x_nm).abs() < 1e-9);
            assert!((p.pos.y_nm - q.pos.y_nm).abs() < 1e-9);
        }
    }

    #[test]
    fn rotation_equivariance_up_to_axial_ambiguity() {
        let base = vec![
            record(0, 0, 0.0, 0.0, -20.0),
            record(1, 0, 150.0, 80.0, 0.0),
            record(2, 0, 250.0, -40.0, 0.0),
            record(3, 0, -90.0, 140.0, 35.0),
        ];
        let rho = 25.0f64;
        let (s, c) = rho.to_radians().sin_cos();
        let rotated: Vec<MoleculeRecord> = base
            .iter()
            .cloned()
            .map(|mut r| {
                let (x, y) = (r.position.x_nm, r.position.y_nm);
                r.position = Position2D::new(c * x - s * y, s * x + c * y);
                r.phi = Some(Angle::wrap(r.phi.unwrap().degrees() + rho));
                r
            })
            .collect();
        let a = register_ncs(&base, 3);
        let b = register_ncs(&rotated, 3);
        for (p, q) in a.points.iter().zip(&b.points) {
            // identical up to a possible 180-degree flip of the frame
            let same = (p.pos.x_nm - q.pos.x_nm).abs() < 1e-6
                && (p.pos.y_nm - q.pos.y_nm).abs() < 1e-6;
            let flipped = (p.pos.x_nm + q.pos.x_nm).abs() < 1e-6
                && (p.pos.y_nm + q.pos.y_nm).abs() < 1e-6;
            assert!(same || flipped, "{p:?} vs {q:?}");
            assert!(
                axial_difference(p.phi_rel, q.phi_rel).degrees().abs() < 1e-9,
                "{p:?} vs {q:?}"
            );
        }
    }

    #[test]
    fn modal_orientation_resists_outliers() {
        let phis: Vec<Angle> = [10.0, 11.0, 9.5, 10.5, 10.2, 88.0]
            .iter()
            .map(|&d| Angle::wrap(d))
            .collect();
        let m = modal_orientation(&phis);
        assert!((m.degrees() - 10.0).abs() < 1.5, "modal {}", m.degrees());
    }

    #[test]
    fn uniform_synthetic_cloud_has_null_phi_position_correlation() {
        let mut rng = StreamRng::from_seed(12);
        let mut cat = Vec::new();
        for nc in 0u32..40 {
            let cx = (nc % 8) as f64 * 2000.0;
            let cy = (nc / 8) as f64 * 2000.0;
            for k in 0..5 {
                let r = 425.0 * rng.uniform().sqrt();
                let th = rng.uniform() * std::f64::consts::TAU;
                cat.push(record(
                    (nc * 8 + k) as u64,
                    nc,
                    cx + r * th.cos(),
                    cy + r * th.sin(),
                    rng.uniform() * 180.0 - 90.0,
                ));
            }
        }
        let cloud = register_ncs(&cat, 3);
        let (r, p) = phi_position_correlation(&cloud, 500, 99);
        assert!(r.abs() < 0.15, "pearson {r}");
        assert!(p > 0.01, "permutation p {p}");
    }
}
