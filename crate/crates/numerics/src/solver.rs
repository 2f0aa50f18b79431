//! Coupled solve for intercellular CO₂.
//!
//! Finds `ci` where biochemical demand equals stomatal supply with a secant
//! iteration started from `ci0` and `0.99 ci0`, safeguarded by bisection on the
//! bracket `(CI_FLOOR, 2 ca)`. The same routine runs over any [`Real`]; the
//! differentiable variant replays exactly the iteration count reached by the
//! plain solve so derivatives come from the unrolled loop.

use serde::{Deserialize, Serialize};

use crate::dual::{Dual, Real};
use crate::error::NumericsError;
use crate::photosynthesis::{assimilation_with, ci_residual, PhotoParams};

/// Lower end of the safeguard bracket (Pa).
pub const CI_FLOOR: f64 = 1e-6;
/// Residual tolerance on `|f(ci)|`.
pub const RESIDUAL_TOL: f64 = 1e-6;
/// Step tolerance on `ci` (Pa).
pub const STEP_TOL: f64 = 1e-3;
pub const MAX_ITERATIONS: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub ci_star: f64,
    pub an_star: f64,
    /// Iterations taken; replaying this many gives the same root.
    pub iterations: usize,
    pub residual: f64,
    pub bisection_steps: usize,
}

#[derive(Clone, Copy)]
enum Stop {
    Converge,
    After(usize),
}

struct Trace<T> {
    ci: T,
    iterations: usize,
    residual: f64,
    bisection_steps: usize,
    converged: bool,
}

/// One secant update through `(x0, f0)` and `(x1, f1)`.
pub fn secant_step<T: Real>(x0: T, f0: T, x1: T, f1: T) -> T {
    x1 - f1 * (x1 - x0) / (f1 - f0)
}

fn iterate<T: Real>(p: &PhotoParams, vcmax25: T, ci0: f64, stop: Stop) -> Trace<T> {
    let f = |ci: T| ci_residual(ci, vcmax25, p);

    let mut lo = T::constant(CI_FLOOR);
    let mut hi = T::constant(2.0 * p.ca);
    let lo_negative = f(lo).value() < 0.0;

    let mut x0 = T::constant(ci0);
    let mut f0 = f(x0);
    let mut x1 = T::constant(0.99 * ci0);
    let mut f1 = f(x1);

    // keep the bracket oriented so that f(lo) and f(hi) have fixed signs
    let tighten = |x: T, fx: T, lo: &mut T, hi: &mut T| {
        let inside = x.value() > lo.value() && x.value() < hi.value();
        if inside {
            if (fx.value() < 0.0) == lo_negative {
                *lo = x;
            } else {
                *hi = x;
            }
        }
    };
    tighten(x0, f0, &mut lo, &mut hi);
    tighten(x1, f1, &mut lo, &mut hi);

    let limit = match stop {
        Stop::Converge => MAX_ITERATIONS,
        Stop::After(n) => n,
    };
    let mut bisection_steps = 0;
    let mut stalled = false;
    for iteration in 1..=limit {
        let mut x2 = if (f1 - f0).value() != 0.0 {
            secant_step(x0, f0, x1, f1)
        } else {
            T::constant(f64::NAN)
        };
        let in_bracket = x2.value().is_finite()
            && x2.value() > lo.value()
            && x2.value() < hi.value();
        if !in_bracket || stalled {
            x2 = (lo + hi) * 0.5;
            bisection_steps += 1;
        }
        let f2 = f(x2);
        tighten(x2, f2, &mut lo, &mut hi);
        let step = (x2 - x1).value().abs();
        stalled = f2.value().abs() > 0.5 * f1.value().abs();
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f2;

        if let Stop::Converge = stop {
            if f2.value().abs() <= RESIDUAL_TOL && step <= STEP_TOL {
                return Trace {
                    ci: x2,
                    iterations: iteration,
                    residual: f2.value(),
                    bisection_steps,
                    converged: true,
                };
            }
        }
    }
    Trace {
        ci: x1,
        iterations: limit,
        residual: f1.value(),
        bisection_steps,
        converged: matches!(stop, Stop::After(_)),
    }
}

/// Solve the coupled system from the initial guess `ci0` (Pa).
pub fn solve_ci(p: &PhotoParams, ci0: f64) -> Result<SolveOutcome, NumericsError> {
    p.validate()?;
    if !(ci0 > 0.0 && ci0 < 2.0 * p.ca) {
        return Err(NumericsError::InitialCiOutOfRange { ci0, upper: 2.0 * p.ca });
    }
    let trace = iterate(p, p.vcmax25, ci0, Stop::Converge);
    if !trace.converged {
        return Err(NumericsError::NoConvergence {
            iterations: trace.iterations,
            residual: trace.residual,
        });
    }
    Ok(SolveOutcome {
        ci_star: trace.ci,
        an_star: assimilation_with(trace.ci, p.vcmax25, p),
        iterations: trace.iterations,
        residual: trace.residual,
        bisection_steps: trace.bisection_steps,
    })
}

/// Run the solver loop for exactly `iterations` steps over any scalar type,
/// returning `(ci, an)` at the final iterate.
pub fn solve_ci_unrolled<T: Real>(
    p: &PhotoParams,
    vcmax25: T,
    ci0: f64,
    iterations: usize,
) -> (T, T) {
    let trace = iterate(p, vcmax25, ci0, Stop::After(iterations));
    (trace.ci, assimilation_with(trace.ci, vcmax25, p))
}

/// Root and assimilation at the root with derivatives with respect to Vcmax,
/// obtained by replaying the converged iteration count with dual numbers.
pub fn solve_ci_dual(p: &PhotoParams, ci0: f64) -> Result<(Dual, Dual, SolveOutcome), NumericsError> {
    let outcome = solve_ci(p, ci0)?;
    let (ci, an) = solve_ci_unrolled(p, Dual::variable(p.vcmax25), ci0, outcome.iterations);
    Ok((ci, an, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense bisection over the safeguard bracket: locate every sign change on
    /// a uniform grid, then refine the first by plain bisection.
    fn bisection_oracle(p: &PhotoParams) -> (usize, f64) {
        let f = |ci: f64| ci_residual(ci, p.vcmax25, p);
        let n = 1_000_000;
        let (a, b) = (0.1, 2.0 * p.ca);
        let mut changes = 0;
        let mut first = None;
        let mut prev = f(a);
        for k in 1..=n {
            let x = a + (b - a) * k as f64 / n as f64;
            let fx = f(x);
            if (fx < 0.0) != (prev < 0.0) {
                changes += 1;
                if first.is_none() {
                    first = Some((x - (b - a) / n as f64, x));
                }
            }
            prev = fx;
        }
        let (mut lo, mut hi) = first.expect("no sign change");
        let lo_negative = f(lo) < 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) < 0.0) == lo_negative {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (changes, 0.5 * (lo + hi))
    }

    #[test]
    fn converges_from_both_ends_of_input_range() {
        let p = PhotoParams::default();
        let a = solve_ci(&p, 35.0).unwrap();
        let b = solve_ci(&p, 70.0).unwrap();
        assert!(a.residual.abs() <= RESIDUAL_TOL);
        assert!(b.residual.abs() <= RESIDUAL_TOL);
        assert!((a.ci_star - b.ci_star).abs() < 1e-3);
        let (changes, root) = bisection_oracle(&p);
        assert_eq!(changes, 1);
        assert!((a.ci_star - root).abs() < 1e-3, "{} vs {}", a.ci_star, root);
    }

    #[test]
    fn large_g0_without_slope_drives_ci_to_ca() {
        let mut p = PhotoParams::default();
        p.g1 = 1e-9;
        p.g0 = 50.0;
        let out = solve_ci(&p, 35.0).unwrap();
        assert!((out.ci_star - p.ca).abs() < 0.5, "{}", out.ci_star);
    }

    #[test]
    fn rejects_initial_guess_outside_bracket() {
        let p = PhotoParams::default();
        assert!(matches!(
            solve_ci(&p, 0.0),
            Err(NumericsError::InitialCiOutOfRange { .. })
        ));
        assert!(solve_ci(&p, 2.0 * p.ca).is_err());
    }

    #[test]
    fn unrolled_replay_reproduces_root() {
        let p = PhotoParams::default();
        let out = solve_ci(&p, 50.0).unwrap();
        let (ci, an) = solve_ci_unrolled(&p, p.vcmax25, 50.0, out.iterations);
        assert_eq!(ci, out.ci_star);
        assert_eq!(an, out.an_star);
    }

    #[test]
    fn dual_root_derivative_matches_finite_difference_of_unrolled_loop() {
        let p = PhotoParams::default();
        let (ci, an, out) = solve_ci_dual(&p, 35.0).unwrap();
        let h = 1e-3 * p.vcmax25 + 1e-6;
        let eval = |v: f64| solve_ci_unrolled(&p, v, 35.0, out.iterations);
        let (cp, ap) = eval(p.vcmax25 + h);
        let (cm, am) = eval(p.vcmax25 - h);
        let fd_ci = (cp - cm) / (2.0 * h);
        let fd_an = (ap - am) / (2.0 * h);
        assert!((ci.deriv - fd_ci).abs() <= 1e-4 * fd_ci.abs(), "{} vs {}", ci.deriv, fd_ci);
        assert!((an.deriv - fd_an).abs() <= 1e-4 * fd_an.abs(), "{} vs {}", an.deriv, fd_an);
    }
}
