//! Throughput harness for the coupled ci solve.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::NumericsError;
use crate::photosynthesis::PhotoParams;
use crate::solver::{solve_ci, SolveOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub n: usize,
    pub ci_range: (f64, f64),
    /// `None` or `Some(1)` runs on the calling thread.
    pub workers: Option<usize>,
}

impl BenchOptions {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            ci_range: (35.0, 70.0),
            workers: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n: usize,
    pub ci_range: (f64, f64),
    pub workers: usize,
    pub wall_seconds: f64,
    pub solves_per_second: f64,
    pub converged: usize,
    pub failed: usize,
    pub mean_iterations: f64,
    pub max_iterations: usize,
    pub mean_ci_star: f64,
    /// SHA-256 over the little-endian bits of every (ci0, ci_star, an_star).
    pub results_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSample {
    pub ci0: f64,
    pub outcome: Option<SolveOutcome>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRun {
    pub report: BenchReport,
    pub samples: Vec<BenchSample>,
}

fn inputs(n: usize, (lo, hi): (f64, f64)) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| if k == n - 1 { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
        .collect()
}

/// Solve at `n` evenly spaced initial guesses with default parameters.
pub fn bench_kernel(options: BenchOptions) -> Result<BenchRun, NumericsError> {
    if options.n == 0 {
        return Err(NumericsError::InvalidSampleCount { min: 1, got: 0 });
    }
    let params = PhotoParams::default();
    let ci0s = inputs(options.n, options.ci_range);
    let workers = options.workers.unwrap_or(1).max(1);
    let solve = |&ci0: &f64| BenchSample {
        ci0,
        outcome: solve_ci(&params, ci0).ok(),
    };

    let start = Instant::now();
    let samples: Vec<BenchSample> = if workers == 1 {
        ci0s.iter().map(solve).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| NumericsError::InvalidOption(e.to_string()))?;
        pool.install(|| ci0s.par_iter().map(solve).collect())
    };
    let wall_seconds = start.elapsed().as_secs_f64();

    let mut hasher = Sha256::new();
    let mut converged = 0;
    let mut iter_total = 0usize;
    let mut max_iterations = 0;
    let mut ci_total = 0.0;
    for s in &samples {
        hasher.update(s.ci0.to_le_bytes());
        if let Some(o) = &s.outcome {
            converged += 1;
            iter_total += o.iterations;
            max_iterations = max_iterations.max(o.iterations);
            ci_total += o.ci_star;
            hasher.update(o.ci_star.to_le_bytes());
            hasher.update(o.an_star.to_le_bytes());
        } else {
            hasher.update(f64::NAN.to_le_bytes());
        }
    }
    let denom = converged.max(1) as f64;
    let report = BenchReport {
        n: options.n,
        ci_range: options.ci_range,
        workers,
        wall_seconds,
        solves_per_second: options.n as f64 / wall_seconds.max(f64::MIN_POSITIVE),
        converged,
        failed: options.n - converged,
        mean_iterations: iter_total as f64 / denom,
        max_iterations,
        mean_ci_star: ci_total / denom,
        results_sha256: hex::encode(hasher.finalize()),
    };
    Ok(BenchRun { report, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_input_report_is_well_formed() {
        let run = bench_kernel(BenchOptions::new(1)).unwrap();
        assert_eq!(run.samples.len(), 1);
        assert_eq!(run.report.converged, 1);
        let json = serde_json::to_value(&run.report).unwrap();
        for key in ["n", "wall_seconds", "solves_per_second", "results_sha256"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn zero_inputs_rejected() {
        assert!(bench_kernel(BenchOptions::new(0)).is_err());
    }

    #[test]
    fn parallel_and_serial_agree_bitwise() {
        let serial = bench_kernel(BenchOptions::new(500)).unwrap();
        let mut opts = BenchOptions::new(500);
        opts.workers = Some(4);
        let parallel = bench_kernel(opts).unwrap();
        assert_eq!(serial.report.results_sha256, parallel.report.results_sha256);
        assert_eq!(serial.samples, parallel.samples);
    }
}
