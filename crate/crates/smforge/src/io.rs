//! Ground-truth, catalog, and image persistence.

use crate::analysis::{MoleculeRecord, SuperResImage};
use crate::error::{Error, Result};
use crate::photophysics::Site;
use crate::synthesis::Sample;
use crate::units::{Angle, Frequency, Position2D};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// One emitter of the ground-truth file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub id: u64,
    pub nc_id: u32,
    pub x_nm: f64,
    pub y_nm: f64,
    pub site: Site,
    pub f0_thz: f64,
    pub gamma0_mhz: f64,
    pub p_sat_nw: f64,
    pub f_inf_kcps: f64,
    pub phi_deg: f64,
    pub sigma_f_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub emitters: Vec<GroundTruthRecord>,
}

impl GroundTruth {
    pub fn from_sample(sample: &Sample) -> GroundTruth {
        GroundTruth {
            seed: sample.seed,
            emitters: sample
                .emitters()
                .map(|e| GroundTruthRecord {
                    id: e.id,
                    nc_id: e.nc_id,
                    x_nm: e.pos.x_nm,
                    y_nm: e.pos.y_nm,
                    site: e.params.site,
                    f0_thz: e.params.f0.thz(),
                    gamma0_mhz: e.params.gamma0_mhz,
                    p_sat_nw: e.params.p_sat.nw(),
                    f_inf_kcps: e.params.f_inf.kcps(),
                    phi_deg: e.params.phi.degrees(),
                    sigma_f_mhz: e.params.sigma_f_mhz,
                })
                .collect(),
        }
    }
}

pub fn write_ground_truth<W: Write>(w: W, gt: &GroundTruth) -> Result<()> {
    serde_json::to_writer_pretty(w, gt)?;
    Ok(())
}

pub fn read_ground_truth<R: Read>(r: R) -> Result<GroundTruth> {
    Ok(serde_json::from_reader(r)?)
}

fn site_str(site: Site) -> &'static str {
    match site {
        Site::Red => "red",
        Site::Blue => "blue",
    }
}

/// Catalog CSV: `id,nc_id,x_nm,y_nm,sigma_nm,f0_thz,gamma_mhz,phi_deg,site,flags`.
/// Optional fields serialize empty; flags are `|`-joined.
pub fn write_catalog_csv<W: Write>(w: W, catalog: &[MoleculeRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "id", "nc_id", "x_nm", "y_nm", "sigma_nm", "f0_thz", "gamma_mhz", "phi_deg", "site",
        "flags",
    ])?;
    for r in catalog {
        wtr.write_record([
            r.id.to_string(),
            r.nc_id.map(|n| n.to_string()).unwrap_or_default(),
            format!("{:.4}", r.position.x_nm),
            format!("{:.4}", r.position.y_nm),
            format!("{:.4}", r.position_sigma_nm),
            format!("{:.9}", r.f0.thz()),
            format!("{:.4}", r.gamma_mhz),
            r.phi.map(|p| format!("{:.4}", p.degrees())).unwrap_or_default(),
            site_str(r.site).to_string(),
            r.flags.join("|"),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_catalog_csv<R: Read>(r: R) -> Result<Vec<MoleculeRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let pos = rec.position().map(|p| p.byte()).unwrap_or(0);
        let bad = |what: &str| Error::Format { offset: pos, message: format!("bad {what} field") };
        let field = |i: usize, what: &str| rec.get(i).ok_or_else(|| bad(what));
        let num = |i: usize, what: &str| -> Result<f64> {
            field(i, what)?.parse::<f64>().map_err(|_| bad(what))
        };
        let nc = field(1, "nc_id")?;
        let phi = field(7, "phi_deg")?;
        let site = match field(8, "site")? {
            "red" => Site::Red,
            "blue" => Site::Blue,
            _ => return Err(bad("site")),
        };
        let flags = field(9, "flags")?;
        out.push(MoleculeRecord {
            id: field(0, "id")?.parse().map_err(|_| bad("id"))?,
            nc_id: if nc.is_empty() { None } else { Some(nc.parse().map_err(|_| bad("nc_id"))?) },
            position: Position2D::new(num(2, "x_nm")?, num(3, "y_nm")?),
            position_sigma_nm: num(4, "sigma_nm")?,
            f0: Frequency::from_thz(num(5, "f0_thz")?),
            gamma_mhz: num(6, "gamma_mhz")?,
            phi: if phi.is_empty() {
                None
            } else {
                Some(Angle::wrap(phi.parse().map_err(|_| bad("phi_deg"))?))
            },
            site,
            flags: if flags.is_empty() {
                Vec::new()
            } else {
                flags.split('|').map(str::to_string).collect()
            },
        });
    }
    Ok(out)
}

/// 16-bit binary PGM (P5), intensities scaled to the image maximum.
pub fn write_pgm<W: Write>(mut w: W, img: &SuperResImage) -> Result<()> {
    let maxval = 65535u32;
    let peak = img.pixels.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
    write!(w, "P5\n{} {}\n{}\n", img.width, img.height, maxval)?;
    let mut buf = Vec::with_capacity(img.pixels.len() * 2);
    for &p in &img.pixels {
        let v = ((p / peak) * maxval as f64).round() as u16;
        buf.extend_from_slice(&v.to_be_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: u64) -> MoleculeRecord {
        MoleculeRecord {
            id,
            nc_id: if id % 2 == 0 { Some(3) } else { None },
            position: Position2D::new(1.5, -2.25),
            position_sigma_nm: 18.0,
            f0: Frequency::from_thz(381.9),
            gamma_mhz: 41.0,
            phi: if id % 2 == 0 { Some(Angle::wrap(28.0)) } else { None },
            site: if id % 2 == 0 { Site::Blue } else { Site::Red },
            flags: if id == 2 { vec!["ambiguous".into(), "line fit failed".into()] } else { vec![] },
        }
    }

    #[test]
    fn catalog_csv_round_trips() {
        let cat: Vec<MoleculeRecord> = (0..4).map(record).collect();
        let mut buf = Vec::new();
        write_catalog_csv(&mut buf, &cat).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,nc_id,x_nm,y_nm,sigma_nm,f0_thz,gamma_mhz,phi_deg,site,flags\n"));
        let back = read_catalog_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 4);
        for (a, b) in cat.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.nc_id, b.nc_id);
            assert_eq!(a.site, b.site);
            assert_eq!(a.flags, b.flags);
            assert!((a.f0.mhz() - b.f0.mhz()).abs() < 1.0);
            assert_eq!(a.phi.is_some(), b.phi.is_some());
        }
    }

    #[test]
    fn ground_truth_round_trips() {
        use crate::synthesis::{synthesize, MixtureParams, SampleConfig, SiteModel, ValueSpec};
        let cfg = SampleConfig {
            grid_nx: 2,
            grid_ny: 2,
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
            sigma_f_mhz: ValueSpec::Fixed { value: 26.0 },
            jump_rate: 0.0,
            jump_scale_mhz: 150.0,
        };
        let sample = synthesize(&cfg, 5).unwrap();
        let gt = GroundTruth::from_sample(&sample);
        let mut buf = Vec::new();
        write_ground_truth(&mut buf, &gt).unwrap();
        let back = read_ground_truth(buf.as_slice()).unwrap();
        assert_eq!(gt, back);
        assert_eq!(gt.emitters.len(), sample.emitter_count());
    }

    #[test]
    fn pgm_header_and_size_are_correct() {
        let img = SuperResImage {
            pixels: vec![0.0, 0.5, 1.0, 0.25],
            width: 2,
            height: 2,
            x0_nm: 0.0,
            y0_nm: 0.0,
            pixel_size_nm: 5.0,
        };
        let mut buf = Vec::new();
        write_pgm(&mut buf, &img).unwrap();
        let header = b"P5\n2 2\n65535\n";
        assert_eq!(&buf[..header.len()], header);
        assert_eq!(buf.len(), header.len() + 8);
        // peak maps to maxval
        assert_eq!(&buf[header.len() + 4..header.len() + 6], &65535u16.to_be_bytes());
    }
}
