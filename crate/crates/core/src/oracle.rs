//! Reference values for corpus units, computed by `leaf-numerics`.

use leaf_numerics::dual::Real;
use leaf_numerics::photosynthesis::{
    ci_residual, light_limited, rubisco_limited, stomatal_conductance, PhotoParams,
};
use leaf_numerics::{daylength, secant_step, solve_ci};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("no reference function named `{0}`")]
    Unknown(String),
    #[error("`{name}` takes {expected} arguments, got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("`{name}`: {message}")]
    Numerics { name: String, message: String },
}

/// Parameters whose Medlyn slope and CO2 mole fraction equal `slope` and `cs`.
fn conductance_params(g0: f64, slope: f64, cs: f64) -> PhotoParams {
    let mut p = PhotoParams::default();
    p.g0 = g0;
    p.vpd = 1.0;
    p.g1 = slope / 1.6 - 1.0;
    p.ca = cs * p.pressure / 1e6;
    p
}

/// Parameters with `kc_effective() == kc_eff` (no O2 inhibition term).
fn kc_params(gamma_star: f64, kc_eff: f64) -> PhotoParams {
    let mut p = PhotoParams::default();
    p.gamma_star = gamma_star;
    p.kc = kc_eff;
    p.oi = 0.0;
    p
}

fn arity(name: &str, args: &[f64], n: usize) -> Result<(), OracleError> {
    if args.len() == n {
        Ok(())
    } else {
        Err(OracleError::Arity {
            name: name.into(),
            expected: n,
            got: args.len(),
        })
    }
}

/// Evaluate reference function `name`; returns every output in order.
pub fn evaluate(name: &str, args: &[f64]) -> Result<Vec<f64>, OracleError> {
    let numerics = |e: leaf_numerics::NumericsError| OracleError::Numerics {
        name: name.into(),
        message: e.to_string(),
    };
    let a = args;
    Ok(match name {
        "daylength" => {
            arity(name, a, 2)?;
            vec![daylength(a[0], a[1])]
        }
        "leaf_photosynthesis" | "hybrid" => {
            arity(name, a, 2)?;
            let p = PhotoParams::for_vcmax(a[1]);
            let out = solve_ci(&p, a[0]).map_err(numerics)?;
            let mut values = vec![out.ci_star, out.an_star];
            if name == "hybrid" {
                values.push(stomatal_conductance(out.an_star, &p));
            }
            values
        }
        "photo_residual" => {
            arity(name, a, 2)?;
            let p = PhotoParams::for_vcmax(a[1]);
            vec![ci_residual(a[0], a[1], &p)]
        }
        "effective_kc" => {
            arity(name, a, 3)?;
            let mut p = PhotoParams::default();
            (p.kc, p.ko, p.oi) = (a[0], a[1], a[2]);
            vec![p.kc_effective()]
        }
        "medlyn_slope" => {
            arity(name, a, 2)?;
            let mut p = PhotoParams::default();
            (p.g1, p.vpd) = (a[0], a[1]);
            vec![p.medlyn_slope()]
        }
        "rubisco_rate" => {
            arity(name, a, 4)?;
            vec![rubisco_limited(a[1], a[0], &kc_params(a[2], a[3]))]
        }
        "electron_rate" => {
            arity(name, a, 3)?;
            let mut p = PhotoParams::default();
            (p.jmax25, p.gamma_star) = (a[0], a[2]);
            vec![light_limited(a[1], &p)]
        }
        "net_assimilation" => {
            arity(name, a, 3)?;
            vec![Real::min(a[0], a[1]) - a[2]]
        }
        "stomatal_conductance" => {
            arity(name, a, 4)?;
            vec![stomatal_conductance(a[2], &conductance_params(a[0], a[1], a[3]))]
        }
        "ci_residual" => {
            arity(name, a, 10)?;
            let (ci, vcmax, jmax, rd, gamma_star, kc_eff) = (a[0], a[1], a[2], a[3], a[4], a[5]);
            let (g0, slope, ca, pressure) = (a[6], a[7], a[8], a[9]);
            let mut p = kc_params(gamma_star, kc_eff);
            p.jmax25 = jmax;
            p.rd25 = rd;
            p.pressure = pressure;
            let c = conductance_params(g0, slope, ca / pressure * 1e6);
            (p.g0, p.g1, p.vpd) = (c.g0, c.g1, c.vpd);
            p.ca = ca;
            vec![ci_residual(ci, vcmax, &p)]
        }
        "secant_step" => {
            arity(name, a, 4)?;
            vec![secant_step(a[0], a[1], a[2], a[3])]
        }
        _ => return Err(OracleError::Unknown(name.into())),
    })
}

/// `expected` (None = NaN) matches `got` within `tol`.
pub fn matches(expected: &[Option<f64>], got: &[f64], tol: f64) -> bool {
    expected.len() == got.len()
        && expected.iter().zip(got).all(|(e, g)| match e {
            None => g.is_nan(),
            Some(e) => (e - g).abs() <= tol,
        })
}
