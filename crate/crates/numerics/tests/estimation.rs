use std::path::Path;

use leaf_numerics::synthetic::{self, PLANTED_VCMAX};
use leaf_numerics::{fit_gradient_descent, fit_uniform, mse_loss, GdOptions};

fn fixture() -> Vec<leaf_numerics::LeafObservation> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic_observations.csv");
    synthetic::load_observations(&path).unwrap()
}

#[test]
fn frozen_csv_matches_generator() {
    assert_eq!(fixture(), synthetic::frozen_dataset());
}

/// Loss recomputed from the raw rate equations, independent of the crate's
/// model code.
#[test]
fn loss_matches_independent_recomputation() {
    let obs = fixture();
    let p = synthetic::base_params().with_vcmax(45.0);
    let kc_eff = 40.49 * (1.0 + 20900.0 / 27840.0);
    let mut sum = 0.0;
    for o in &obs {
        let ac = 45.0 * (o.ci - 4.275) / (o.ci + kc_eff);
        let aj = (1.67 * 50.0 / 4.0) * (o.ci - 4.275) / (o.ci + 2.0 * 4.275);
        let model = if ac < aj { ac } else { aj } - 0.015 * 50.0;
        sum += (model - o.an).powi(2);
    }
    let expected = sum / obs.len() as f64;
    let got = mse_loss(&p, &obs).unwrap();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn uniform_recovers_off_grid_truth_within_spacing() {
    let obs = fixture();
    let fit = fit_uniform(&synthetic::base_params(), &obs, (10.0, 100.0), 50).unwrap();
    assert!((fit.vcmax_hat - PLANTED_VCMAX).abs() <= 90.0 / 49.0);
}

#[test]
fn gradient_descent_agrees_with_fine_grid_oracle() {
    let obs = fixture();
    let p = synthetic::base_params();
    let gd = fit_gradient_descent(&p, &obs, GdOptions::default()).unwrap();
    let (mut best_v, mut best_l) = (0.0, f64::INFINITY);
    for k in 0..=9000 {
        let v = 10.0 + 0.01 * k as f64;
        let l = mse_loss(&p.with_vcmax(v), &obs).unwrap();
        if l < best_l {
            best_v = v;
            best_l = l;
        }
    }
    assert!((gd.vcmax_hat - best_v).abs() <= 0.01);
    assert!((gd.vcmax_hat - PLANTED_VCMAX).abs() < 0.05);
    assert!(gd.loss <= best_l + 1e-12);
    assert_eq!(gd.iterations, 10);
}

#[test]
fn gradient_descent_beats_uniform_sampling() {
    let obs = fixture();
    let p = synthetic::base_params();
    let gd = fit_gradient_descent(&p, &obs, GdOptions::default()).unwrap();
    let grid = fit_uniform(&p, &obs, (10.0, 100.0), 50).unwrap();
    assert!(gd.loss <= grid.loss);
    assert!(gd.iterations < grid.iterations);
}
