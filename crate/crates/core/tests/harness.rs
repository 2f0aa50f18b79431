use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use ftrans_core::corpus::{compute_checksums, default_root};
use ftrans_core::harness::{
    format_failure_context, prepare_workdir, run_tests, HarnessConfig, HarnessError, TestRun, UnitFiles, Verdict,
};

fn golden(entry: &str, name: &str) -> String {
    fs::read_to_string(default_root().join(entry).join("golden").join(name)).unwrap()
}

fn run(files: &UnitFiles, config: &HarnessConfig) -> (tempfile::TempDir, ftrans_core::harness::TestReport) {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("work");
    prepare_workdir(&work, files).unwrap();
    let report = run_tests(&TestRun::new(&work, config)).unwrap();
    (dir, report)
}

fn daylength_files() -> UnitFiles {
    UnitFiles {
        unit: "daylength".into(),
        source: golden("daylength", "daylength.py"),
        tests: golden("daylength", "test_daylength.py"),
        ..Default::default()
    }
}

#[test]
fn golden_daylength_passes() {
    let (_dir, report) = run(&daylength_files(), &HarnessConfig::default());
    assert_eq!(report.verdict, Verdict::AllPassed, "{report:?}");
    assert!(report.passed >= 5);
    assert_eq!(report.exit_code, Some(0));
}

#[test]
fn workdir_holds_only_unit_files() {
    let dir = tempfile::tempdir().unwrap();
    let files = UnitFiles {
        fixtures: vec![("helper".into(), "K = 1\n".into())],
        imports: vec!["helper".into()],
        ..daylength_files()
    };
    prepare_workdir(dir.path(), &files).unwrap();
    let mut names: Vec<String> = walkdir::WalkDir::new(dir.path())
        .min_depth(1)
        .into_iter()
        .map(|e| e.unwrap().path().strip_prefix(dir.path()).unwrap().display().to_string())
        .collect();
    names.sort();
    assert_eq!(names, ["daylength.py", "fixtures", "fixtures/helper.py", "test_daylength.py"]);
    assert!(matches!(
        prepare_workdir(dir.path(), &files),
        Err(HarnessError::WorkdirSetupFailed { .. })
    ));
}

#[test]
fn fixtures_are_importable() {
    let files = UnitFiles {
        unit: "scaled".into(),
        source: "def scaled(x):\n    return K * x\n".into(),
        tests: "def test_scaled():\n    assert scaled(2) == 6\n".into(),
        imports: vec!["helper".into()],
        fixtures: vec![("helper".into(), "K = 3\n".into())],
    };
    let (_dir, report) = run(&files, &HarnessConfig::default());
    assert_eq!(report.verdict, Verdict::AllPassed, "{report:?}");
}

#[test]
fn injected_fault_fails_one_test() {
    let fault: serde_json::Value =
        serde_json::from_str(&golden("daylength", "fault.json")).unwrap();
    let bad = fault["remove_line"].as_str().unwrap();
    let source: String = golden("daylength", "daylength.py")
        .lines()
        .filter(|l| *l != bad)
        .map(|l| format!("{l}\n"))
        .collect();
    let (_dir, report) = run(&UnitFiles { source, ..daylength_files() }, &HarnessConfig::default());
    assert_eq!(report.verdict, Verdict::SomeFailed);
    assert_eq!((report.failed, report.passed), (1, 6));
    let ctx = format_failure_context(&report, 6000).unwrap();
    assert!(ctx.contains("test_error_in_decl"), "{ctx}");
    assert!(ctx.contains("assert"), "{ctx}");
}

#[test]
fn syntax_error_crashes() {
    let files = UnitFiles {
        source: "def daylength(lat, decl)\n    return 0\n".into(),
        ..daylength_files()
    };
    let (_dir, report) = run(&files, &HarnessConfig::default());
    assert_eq!(report.verdict, Verdict::Crashed);
    assert_ne!(report.exit_code, Some(0));
}

#[test]
fn no_tests_collected_crashes() {
    let files = UnitFiles {
        tests: "x = 1\n".into(),
        ..daylength_files()
    };
    let (_dir, report) = run(&files, &HarnessConfig::default());
    assert_eq!(report.verdict, Verdict::Crashed);
    assert_eq!(report.passed, 0);
}

#[test]
fn slow_test_times_out_and_is_killed() {
    let files = UnitFiles {
        unit: "slow".into(),
        source: "import subprocess, time\n".into(),
        tests: "def test_sleep():\n    subprocess.Popen(['sleep', '30'])\n    time.sleep(30)\n".into(),
        ..Default::default()
    };
    let config = HarnessConfig {
        timeout_seconds: 1.0,
        ..Default::default()
    };
    let start = std::time::Instant::now();
    let (_dir, report) = run(&files, &config);
    assert_eq!(report.verdict, Verdict::TimedOut);
    assert!(start.elapsed() < Duration::from_secs(10));
}

#[test]
fn environment_is_cleared() {
    std::env::set_var("FTRANS_HARNESS_SECRET", "hunter2");
    let files = UnitFiles {
        unit: "envcheck".into(),
        source: "import os\n".into(),
        tests: "def test_env():\n    assert os.environ.get('FTRANS_HARNESS_SECRET') is None\n    assert os.environ['PYTHONDONTWRITEBYTECODE'] == '1'\n".into(),
        ..Default::default()
    };
    let (_dir, report) = run(&files, &HarnessConfig::default());
    assert_eq!(report.verdict, Verdict::AllPassed, "{report:?}");
}

#[test]
fn missing_runner_is_reported() {
    let config = HarnessConfig {
        test_command: vec!["definitely-not-a-runner-xyz".into()],
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    prepare_workdir(dir.path(), &daylength_files()).unwrap();
    assert!(matches!(
        run_tests(&TestRun::new(dir.path(), &config)),
        Err(HarnessError::RunnerNotFound(_))
    ));
}

#[test]
fn sandbox_wrapper_prefixes_the_command() {
    let config = HarnessConfig {
        sandbox_wrapper: vec!["env".into(), "FTRANS_WRAPPED=1".into()],
        ..Default::default()
    };
    let files = UnitFiles {
        unit: "wrapped".into(),
        source: "import os\n".into(),
        tests: "def test_wrapped():\n    assert os.environ['FTRANS_WRAPPED'] == '1'\n".into(),
        ..Default::default()
    };
    let (_dir, report) = run(&files, &config);
    assert_eq!(report.verdict, Verdict::AllPassed, "{report:?}");
}

fn snapshot(root: &Path) -> BTreeMap<String, String> {
    compute_checksums(root).unwrap()
}

#[test]
fn runs_do_not_touch_the_project_tree() {
    let before = snapshot(&default_root());
    let files = UnitFiles {
        tests: format!(
            "{}\ndef test_writes_cwd():\n    open('scratch.txt', 'w').write('x')\n",
            golden("daylength", "test_daylength.py")
        ),
        ..daylength_files()
    };
    let (dir, report) = run(&files, &HarnessConfig::default());
    assert_eq!(report.verdict, Verdict::AllPassed, "{report:?}");
    assert!(dir.path().join("work/scratch.txt").is_file());
    assert_eq!(snapshot(&default_root()), before);
    assert!(!default_root().join("daylength/golden/__pycache__").exists());
}
