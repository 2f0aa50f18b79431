//! Synthetic gas-exchange dataset with a planted Vcmax, and the observation
//! CSV format (`ci_pa,an_umol_m2_s`).

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dual::Dual;
use crate::error::NumericsError;
use crate::fit::LeafObservation;
use crate::photosynthesis::{assimilation_with, PhotoParams};

pub const PLANTED_VCMAX: f64 = 38.383;
pub const NOISE_SIGMA: f64 = 0.5;
pub const NOISE_SEED: u64 = 2023;
pub const POINTS: usize = 12;
pub const CI_RANGE: (f64, f64) = (10.0, 80.0);

/// Parameters used both to generate the dataset and as the fixed part of the
/// model during fitting.
pub fn base_params() -> PhotoParams {
    PhotoParams::default().with_vcmax(PLANTED_VCMAX)
}

/// Generate `POINTS` observations evenly spaced in ci over `CI_RANGE`.
///
/// The Gaussian noise draw has its component along dAn/dVcmax (evaluated at
/// the planted value) projected out, which makes the planted Vcmax an exact
/// stationary point of the mean squared error while keeping the residual
/// scatter at roughly `sigma`.
pub fn generate(vcmax: f64, sigma: f64, seed: u64) -> Vec<LeafObservation> {
    let params = PhotoParams::default().with_vcmax(vcmax);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");

    let ci: Vec<f64> = (0..POINTS)
        .map(|k| CI_RANGE.0 + (CI_RANGE.1 - CI_RANGE.0) * k as f64 / (POINTS - 1) as f64)
        .collect();
    let mut noise: Vec<f64> = (0..POINTS).map(|_| normal.sample(&mut rng)).collect();

    let model: Vec<Dual> = ci
        .iter()
        .map(|&c| assimilation_with(Dual::constant(c), Dual::variable(vcmax), &params))
        .collect();
    let sens_sq: f64 = model.iter().map(|m| m.deriv * m.deriv).sum();
    if sens_sq > 0.0 {
        let proj: f64 = model.iter().zip(&noise).map(|(m, e)| m.deriv * e).sum::<f64>() / sens_sq;
        for (e, m) in noise.iter_mut().zip(&model) {
            *e -= proj * m.deriv;
        }
    }

    ci.iter()
        .zip(model.iter().zip(&noise))
        .map(|(&ci, (m, e))| LeafObservation { ci, an: m.value + e })
        .collect()
}

/// The frozen dataset used by the estimation experiments.
pub fn frozen_dataset() -> Vec<LeafObservation> {
    generate(PLANTED_VCMAX, NOISE_SIGMA, NOISE_SEED)
}

pub fn read_observations<R: Read>(reader: R) -> Result<Vec<LeafObservation>, NumericsError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["ci_pa", "an_umol_m2_s"] {
        return Err(NumericsError::Csv(format!(
            "expected header ci_pa,an_umol_m2_s, found {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn load_observations(path: &Path) -> Result<Vec<LeafObservation>, NumericsError> {
    let file = std::fs::File::open(path)
        .map_err(|e| NumericsError::Csv(format!("{}: {e}", path.display())))?;
    read_observations(file)
}

pub fn write_observations<W: Write>(
    writer: W,
    observations: &[LeafObservation],
) -> Result<(), NumericsError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for obs in observations {
        wtr.serialize(obs)?;
    }
    wtr.flush().map_err(|e| NumericsError::Csv(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::loss_and_gradient;

    #[test]
    fn planted_value_is_stationary() {
        let obs = frozen_dataset();
        let (_, grad) = loss_and_gradient(PLANTED_VCMAX, &base_params(), &obs).unwrap();
        assert!(grad.abs() < 1e-10, "{grad}");
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        assert_eq!(frozen_dataset(), frozen_dataset());
        assert_ne!(generate(PLANTED_VCMAX, NOISE_SIGMA, 1), frozen_dataset());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let obs = frozen_dataset();
        let mut buf = Vec::new();
        write_observations(&mut buf, &obs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("ci_pa,an_umol_m2_s\n"));
        assert_eq!(read_observations(buf.as_slice()).unwrap(), obs);
    }

    #[test]
    fn wrong_header_rejected() {
        let err = read_observations("ci,an\n1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, NumericsError::Csv(_)));
    }
}
