use leaf_numerics::{bench_kernel, BenchOptions};

#[test]
fn repeated_runs_are_bitwise_identical() {
    let a = bench_kernel(BenchOptions::new(2000)).unwrap();
    let b = bench_kernel(BenchOptions::new(2000)).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.report.results_sha256, b.report.results_sha256);
    assert_eq!(a.report.failed, 0);
    assert!(a.report.solves_per_second > 0.0);
}
