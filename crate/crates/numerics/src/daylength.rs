//! Day length from latitude and solar declination.

use std::f64::consts::FRAC_PI_2;

/// Seconds per radian of hour angle.
pub const SECS_PER_RADIAN: f64 = 13750.9871;

const LAT_EPSILON: f64 = 10.0 * f64::EPSILON;
const POLE: f64 = FRAC_PI_2;
const OFFSET_POLE: f64 = POLE - LAT_EPSILON;

/// Seconds between sunrise and sunset for latitude `lat` and declination
/// `decl`, both in radians.
///
/// Returns NaN when `|lat| >= pi/2 + 10 eps` or `|decl| >= pi/2`. Latitudes
/// within the tolerance band are pulled back to just inside the pole so that
/// `cos(lat)` stays positive.
pub fn daylength(lat: f64, decl: f64) -> f64 {
    if lat.abs() >= POLE + LAT_EPSILON || decl.abs() >= POLE || lat.is_nan() || decl.is_nan() {
        return f64::NAN;
    }
    let my_lat = lat.clamp(-OFFSET_POLE, OFFSET_POLE);
    let temp = -(my_lat.sin() * decl.sin()) / (my_lat.cos() * decl.cos());
    let temp = temp.clamp(-1.0, 1.0);
    2.0 * SECS_PER_RADIAN * temp.acos()
}

/// Elementwise day length over latitudes with a shared declination.
pub fn daylength_many(lats: &[f64], decl: f64) -> Vec<f64> {
    lats.iter().map(|&lat| daylength(lat, decl)).collect()
}

/// Elementwise day length over paired latitude/declination arrays.
pub fn daylength_pairs(lats: &[f64], decls: &[f64]) -> Vec<f64> {
    lats.iter()
        .zip(decls)
        .map(|(&lat, &decl)| daylength(lat, decl))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TOL: f64 = 1e-3;

    #[test]
    fn standard_points() {
        let got = daylength_many(&[-1.4, -1.3], 0.1);
        assert!((got[0] - 26125.331).abs() < TOL, "{}", got[0]);
        assert!((got[1] - 33030.159).abs() < TOL, "{}", got[1]);
    }

    #[test]
    fn near_poles() {
        let got = daylength_many(&[-1.5, 1.5], 0.1);
        assert!(got[0].abs() < TOL);
        assert!((got[1] - 86400.0).abs() < TOL);
    }

    #[test]
    fn exact_pole_is_clamped_not_nan() {
        assert!((daylength(FRAC_PI_2, 0.1) - 86400.0).abs() < TOL);
        assert!(daylength(-FRAC_PI_2, 0.1).abs() < TOL);
    }

    #[test]
    fn invalid_inputs_are_nan() {
        assert!(daylength(3.0, 0.1).is_nan());
        assert!(daylength(-1.0, -3.0).is_nan());
        assert!(daylength(0.0, FRAC_PI_2).is_nan());
        // just past the pole tolerance
        assert!(daylength(std::f64::consts::PI / 1.999, 0.1).is_nan());
        let mixed = daylength_many(&[1.0, 3.0], 0.1);
        assert!(mixed[0].is_finite());
        assert!(mixed[1].is_nan());
    }

    proptest! {
        #[test]
        // 2 * SECS_PER_RADIAN * pi overshoots 86400 by ~1e-4 s
        fn bounded_or_nan(lat in -4.0f64..4.0, decl in -4.0f64..4.0) {
            let d = daylength(lat, decl);
            prop_assert!(d.is_nan() || (0.0..=86400.0 + 1e-3).contains(&d));
        }

        #[test]
        fn symmetric_under_joint_sign_flip(lat in -1.6f64..1.6, decl in -1.6f64..1.6) {
            let a = daylength(lat, decl);
            let b = daylength(-lat, -decl);
            prop_assert!((a.is_nan() && b.is_nan()) || (a - b).abs() < 1e-9);
        }
    }
}
