//! Semantic quantity types shared by all modules.
//!
//! Optical frequencies are stored internally in MHz so that MHz-scale
//! detunings between ~3.85e8 MHz carriers stay exact to well below fit
//! tolerances (f64 spacing at 3.85e8 is about 6e-8 MHz). Angles are kept
//! in degrees and wrapped to the axial domain (-90, +90] because dipole
//! orientations have period 180 degrees.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Absolute optical frequency. Internal unit: MHz.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Frequency(f64);

impl Frequency {
    pub fn from_mhz(mhz: f64) -> Self {
        assert!(mhz.is_finite() && mhz > 0.0, "frequency must be finite and positive");
        Frequency(mhz)
    }

    pub fn from_thz(thz: f64) -> Self {
        Self::from_mhz(thz * 1e6)
    }

    pub fn mhz(self) -> f64 {
        self.0
    }

    pub fn thz(self) -> f64 {
        self.0 * 1e-6
    }

    /// Shift by a signed detuning.
    pub fn offset(self, d: Detuning) -> Frequency {
        Frequency::from_mhz(self.0 + d.mhz())
    }
}

impl std::ops::Sub for Frequency {
    type Output = Detuning;

    fn sub(self, rhs: Frequency) -> Detuning {
        Detuning::from_mhz(self.0 - rhs.0)
    }
}

impl std::ops::Add<Detuning> for Frequency {
    type Output = Frequency;

    fn add(self, rhs: Detuning) -> Frequency {
        self.offset(rhs)
    }
}

/// Signed frequency difference in MHz.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Detuning(f64);

impl Detuning {
    pub fn from_mhz(mhz: f64) -> Self {
        assert!(mhz.is_finite(), "detuning must be finite");
        Detuning(mhz)
    }

    pub fn mhz(self) -> f64 {
        self.0
    }

    pub fn ghz(self) -> f64 {
        self.0 * 1e-3
    }
}

/// Lateral position in the sample plane, in nm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position2D {
    pub x_nm: f64,
    pub y_nm: f64,
}

impl Position2D {
    pub fn new(x_nm: f64, y_nm: f64) -> Self {
        assert!(x_nm.is_finite() && y_nm.is_finite(), "position must be finite");
        Position2D { x_nm, y_nm }
    }

    pub fn distance_to(self, other: Position2D) -> f64 {
        (self.x_nm - other.x_nm).hypot(self.y_nm - other.y_nm)
    }
}

/// Axial orientation angle in degrees, canonical representative in (-90, +90].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Angle(f64);

impl Angle {
    /// Wrap an arbitrary finite angle onto the axial domain.
    pub fn wrap(deg: f64) -> Self {
        assert!(deg.is_finite(), "angle must be finite");
        let r = deg.rem_euclid(180.0);
        Angle(if r > 90.0 { r - 180.0 } else { r })
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }
}

/// Axial wrap with a domain error on non-finite input.
pub fn wrap_axial(deg: f64) -> Result<Angle> {
    if !deg.is_finite() {
        return Err(Error::domain(format!("wrap_axial: non-finite input {deg}")));
    }
    Ok(Angle::wrap(deg))
}

/// Difference of two axial angles, wrapped to (-90, +90].
pub fn axial_difference(a: Angle, b: Angle) -> Angle {
    Angle::wrap(a.degrees() - b.degrees())
}

/// Excitation power at the sample, in nW.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Power(f64);

impl Power {
    pub fn from_nw(nw: f64) -> Self {
        assert!(nw.is_finite() && nw >= 0.0, "power must be finite and non-negative");
        Power(nw)
    }

    pub fn nw(self) -> f64 {
        self.0
    }
}

/// Detected photon rate in kcps.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CountRate(f64);

impl CountRate {
    pub fn from_kcps(kcps: f64) -> Self {
        assert!(kcps.is_finite() && kcps >= 0.0, "count rate must be finite and non-negative");
        CountRate(kcps)
    }

    pub fn kcps(self) -> f64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn wrap_axial_examples() {
        assert_eq!(wrap_axial(0.0).unwrap().degrees(), 0.0);
        assert_abs_diff_eq!(wrap_axial(209.0).unwrap().degrees(), 29.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_axial(-151.0).unwrap().degrees(), 29.0, epsilon = 1e-12);
        assert!(wrap_axial(f64::NAN).is_err());
        assert!(wrap_axial(f64::INFINITY).is_err());
    }

    #[test]
    fn wrap_boundary_is_plus_ninety() {
        assert_eq!(Angle::wrap(90.0).degrees(), 90.0);
        assert_eq!(Angle::wrap(-90.0).degrees(), 90.0);
        assert_eq!(Angle::wrap(270.0).degrees(), 90.0);
    }

    #[test]
    fn axial_difference_examples() {
        let d = axial_difference(Angle::wrap(10.0), Angle::wrap(10.0));
        assert_eq!(d.degrees(), 0.0);
        let d = axial_difference(Angle::wrap(85.0), Angle::wrap(-85.0));
        assert_abs_diff_eq!(d.degrees().abs(), 10.0, epsilon = 1e-12);
        let d = axial_difference(Angle::wrap(29.0), Angle::wrap(0.0));
        assert_abs_diff_eq!(d.degrees(), 29.0, epsilon = 1e-12);
    }

    #[test]
    fn detuning_round_trip_is_exact() {
        let f1 = Frequency::from_thz(383.123456);
        let f2 = Frequency::from_thz(383.000001);
        let d = f1 - f2;
        let back = f2 + d;
        assert_eq!(back.mhz(), f1.mhz());
    }

    proptest! {
        #[test]
        fn wrap_axial_idempotent(x in -1e6f64..1e6) {
            let once = Angle::wrap(x).degrees();
            let twice = Angle::wrap(once).degrees();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn wrap_axial_period_180(x in -1e4f64..1e4, k in -50i32..50) {
            let a = Angle::wrap(x).degrees();
            let b = Angle::wrap(x + 180.0 * k as f64).degrees();
            prop_assert!((a - b).abs() < 1e-7, "a={} b={}", a, b);
        }

        #[test]
        fn wrap_in_domain(x in -1e6f64..1e6) {
            let a = Angle::wrap(x).degrees();
            prop_assert!(a > -90.0 && a <= 90.0);
        }

        #[test]
        fn axial_difference_antisymmetric(a in -500f64..500.0, b in -500f64..500.0) {
            let ab = axial_difference(Angle::wrap(a), Angle::wrap(b)).degrees();
            let ba = axial_difference(Angle::wrap(b), Angle::wrap(a)).degrees();
            // equal magnitudes modulo the 180-degree axial identification
            let sum = Angle::wrap(ab + ba).degrees();
            prop_assert!(sum.abs() < 1e-9 || (sum - 90.0).abs() < 1e-9 && ab == 90.0);
            prop_assert!((ab.abs() - ba.abs()).abs() < 1e-9 || (ab.abs() + ba.abs() - 180.0).abs() < 1e-9);
        }

        #[test]
        fn detuning_roundtrip_prop(f1 in 370f64..390.0, d_mhz in -1e7f64..1e7) {
            let a = Frequency::from_thz(f1);
            let b = Frequency::from_mhz(a.mhz() + d_mhz);
            let det = b - a;
            prop_assert_eq!((a + det).mhz(), b.mhz());
        }
    }
}
