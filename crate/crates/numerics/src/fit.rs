//! Single-parameter Vcmax estimation against (ci, An) observations.

use serde::{Deserialize, Serialize};

use crate::dual::{Dual, Real};
use crate::error::NumericsError;
use crate::photosynthesis::{assimilation_with, PhotoParams};

/// One gas-exchange measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafObservation {
    /// Intercellular CO₂ partial pressure (Pa).
    #[serde(rename = "ci_pa")]
    pub ci: f64,
    /// Measured net assimilation (µmol m⁻² s⁻¹).
    #[serde(rename = "an_umol_m2_s")]
    pub an: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    UniformSampling,
    GradientDescent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub vcmax: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: FitMethod,
    pub vcmax_hat: f64,
    /// Mean squared error at `vcmax_hat`.
    pub loss: f64,
    pub iterations: usize,
    pub trajectory: Vec<TrajectoryPoint>,
}

fn check_observations(observations: &[LeafObservation]) -> Result<(), NumericsError> {
    if observations.is_empty() {
        return Err(NumericsError::EmptyObservations);
    }
    if let Some(bad) = observations.iter().find(|o| !(o.ci > 0.0)) {
        return Err(NumericsError::NonPositiveCi(bad.ci));
    }
    Ok(())
}

/// Mean squared error of the model with Vcmax set to `vcmax25`, generic so a
/// dual `vcmax25` yields dLoss/dVcmax.
pub fn mse_loss_with<T: Real>(
    vcmax25: T,
    params: &PhotoParams,
    observations: &[LeafObservation],
) -> Result<T, NumericsError> {
    check_observations(observations)?;
    let mut total = T::constant(0.0);
    for obs in observations {
        let r = assimilation_with(T::constant(obs.ci), vcmax25, params) - obs.an;
        total = total + r * r;
    }
    Ok(total / observations.len() as f64)
}

/// Mean squared error at `params.vcmax25`.
pub fn mse_loss(params: &PhotoParams, observations: &[LeafObservation]) -> Result<f64, NumericsError> {
    mse_loss_with(params.vcmax25, params, observations)
}

/// Loss and its derivative with respect to Vcmax.
pub fn loss_and_gradient(
    vcmax25: f64,
    params: &PhotoParams,
    observations: &[LeafObservation],
) -> Result<(f64, f64), NumericsError> {
    let d = mse_loss_with(Dual::variable(vcmax25), params, observations)?;
    Ok((d.value, d.deriv))
}

fn argmin(trajectory: &[TrajectoryPoint]) -> TrajectoryPoint {
    trajectory
        .iter()
        .copied()
        .fold(None::<TrajectoryPoint>, |best, p| match best {
            Some(b) if b.loss <= p.loss => Some(b),
            _ => Some(p),
        })
        .expect("trajectory is nonempty")
}

/// Evaluate the loss at `n` evenly spaced Vcmax values over `range`
/// (endpoints included) and keep the best.
pub fn fit_uniform(
    params: &PhotoParams,
    observations: &[LeafObservation],
    range: (f64, f64),
    n: usize,
) -> Result<FitResult, NumericsError> {
    if n < 2 {
        return Err(NumericsError::InvalidSampleCount { min: 2, got: n });
    }
    let (lo, hi) = range;
    if !(lo > 0.0 && hi > lo) {
        return Err(NumericsError::InvalidOption(format!(
            "sampling range must satisfy 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    let spacing = (hi - lo) / (n - 1) as f64;
    let trajectory = (0..n)
        .map(|k| {
            let vcmax = if k == n - 1 { hi } else { lo + spacing * k as f64 };
            mse_loss_with(vcmax, params, observations).map(|loss| TrajectoryPoint { vcmax, loss })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let best = argmin(&trajectory);
    Ok(FitResult {
        method: FitMethod::UniformSampling,
        vcmax_hat: best.vcmax,
        loss: best.loss,
        iterations: n,
        trajectory,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdOptions {
    pub start: f64,
    pub steps: usize,
    pub learning_rate: f64,
}

impl Default for GdOptions {
    fn default() -> Self {
        Self {
            start: 60.0,
            steps: 10,
            learning_rate: 15.0,
        }
    }
}

// below this the step is numerically zero and halving stops
const MIN_LEARNING_RATE: f64 = 1e-12;

/// Plain gradient descent on Vcmax. A step that would increase the loss (or
/// leave the positive half-line) is rejected and the learning rate halved
/// until the step is accepted, so the recorded losses never increase.
pub fn fit_gradient_descent(
    params: &PhotoParams,
    observations: &[LeafObservation],
    options: GdOptions,
) -> Result<FitResult, NumericsError> {
    if options.steps == 0 {
        return Err(NumericsError::InvalidSampleCount { min: 1, got: 0 });
    }
    if !(options.learning_rate > 0.0) || !(options.start > 0.0) {
        return Err(NumericsError::InvalidOption(
            "learning rate and start must be positive".into(),
        ));
    }
    let mut vcmax = options.start;
    let mut lr = options.learning_rate;
    let (mut loss, mut grad) = loss_and_gradient(vcmax, params, observations)?;
    let mut trajectory = vec![TrajectoryPoint { vcmax, loss }];

    for _ in 0..options.steps {
        loop {
            let candidate = vcmax - lr * grad;
            if candidate > 0.0 {
                let (c_loss, c_grad) = loss_and_gradient(candidate, params, observations)?;
                if c_loss <= loss {
                    vcmax = candidate;
                    loss = c_loss;
                    grad = c_grad;
                    break;
                }
            }
            lr *= 0.5;
            if lr < MIN_LEARNING_RATE {
                break;
            }
        }
        trajectory.push(TrajectoryPoint { vcmax, loss });
    }

    let best = argmin(&trajectory);
    Ok(FitResult {
        method: FitMethod::GradientDescent,
        vcmax_hat: best.vcmax,
        loss: best.loss,
        iterations: options.steps,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photosynthesis::assimilation;

    fn noiseless(vcmax: f64) -> (PhotoParams, Vec<LeafObservation>) {
        let truth = PhotoParams::default().with_vcmax(vcmax);
        let obs = (0..12)
            .map(|k| {
                let ci = 10.0 + 70.0 * k as f64 / 11.0;
                LeafObservation {
                    ci,
                    an: assimilation(ci, &truth).unwrap(),
                }
            })
            .collect();
        (truth, obs)
    }

    #[test]
    fn exact_data_has_zero_loss() {
        let (truth, obs) = noiseless(42.0);
        assert_eq!(mse_loss(&truth, &obs).unwrap(), 0.0);
    }

    #[test]
    fn single_offset_observation_gives_squared_offset() {
        let p = PhotoParams::default();
        let ci = 30.0;
        let an = assimilation(ci, &p).unwrap() + 2.0;
        let loss = mse_loss(&p, &[LeafObservation { ci, an }]).unwrap();
        assert!((loss - 4.0).abs() < 1e-12);
    }

    #[test]
    fn empty_observations_rejected() {
        let p = PhotoParams::default();
        assert_eq!(mse_loss(&p, &[]), Err(NumericsError::EmptyObservations));
    }

    #[test]
    fn uniform_recovers_truth_on_grid_point() {
        // k = 20 on the 50-point grid over [10, 100]
        let truth = 10.0 + 90.0 / 49.0 * 20.0;
        let (p, obs) = noiseless(truth);
        let fit = fit_uniform(&p, &obs, (10.0, 100.0), 50).unwrap();
        assert_eq!(fit.vcmax_hat, truth);
        assert_eq!(fit.loss, 0.0);
        assert_eq!(fit.iterations, 50);
    }

    #[test]
    fn uniform_with_two_samples_picks_better_endpoint() {
        let (p, obs) = noiseless(20.0);
        let fit = fit_uniform(&p, &obs, (10.0, 100.0), 2).unwrap();
        assert_eq!(fit.vcmax_hat, 10.0);
        assert_eq!(fit.trajectory.len(), 2);
        assert!(matches!(
            fit_uniform(&p, &obs, (10.0, 100.0), 1),
            Err(NumericsError::InvalidSampleCount { .. })
        ));
    }

    #[test]
    fn gd_started_at_truth_does_not_move() {
        let (p, obs) = noiseless(38.383);
        let fit = fit_gradient_descent(
            &p,
            &obs,
            GdOptions {
                start: 38.383,
                ..GdOptions::default()
            },
        )
        .unwrap();
        assert!((fit.vcmax_hat - 38.383).abs() < 1e-6);
    }

    #[test]
    fn gd_loss_is_nonincreasing() {
        let (p, obs) = noiseless(38.383);
        let fit = fit_gradient_descent(
            &p,
            &obs,
            GdOptions {
                start: 95.0,
                steps: 30,
                learning_rate: 50.0,
            },
        )
        .unwrap();
        for w in fit.trajectory.windows(2) {
            assert!(w[1].loss <= w[0].loss);
        }
        assert_eq!(fit.trajectory.len(), 31);
    }
}
