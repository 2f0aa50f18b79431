//! Run generated Python tests in an isolated working directory and classify
//! the outcome.

use std::fs;
use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TAIL_LINES: usize = 200;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("test runner `{0}` not found")]
    RunnerNotFound(String),
    #[error("could not set up {path}: {source}")]
    WorkdirSetupFailed {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid summary regex: {0}")]
    BadRegex(#[from] regex::Error),
    #[error("failed to run tests: {0}")]
    Spawn(std::io::Error),
    #[error("failure context requested for a passing report")]
    ReportPassed,
    #[error("empty test command")]
    EmptyCommand,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub test_command: Vec<String>,
    /// Selects the runner's summary line; counts are read from that line.
    pub summary_regex: String,
    pub timeout_seconds: f64,
    pub env_allowlist: Vec<String>,
    /// Argv prefix such as a container invocation; empty runs directly.
    pub sandbox_wrapper: Vec<String>,
    /// Character budget of the failure context in repair prompts.
    pub failure_budget: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            test_command: ["python3", "-m", "pytest", "-q", "-p", "no:cacheprovider"]
                .map(String::from)
                .to_vec(),
            summary_regex: r"^=*\s*(?:\d+ \w+(?:, \d+ \w+)*|no tests ran) in [\d.]+s".into(),
            timeout_seconds: 120.0,
            env_allowlist: ["PATH", "HOME", "LANG", "LC_ALL", "TMPDIR", "SYSTEMROOT"]
                .map(String::from)
                .to_vec(),
            sandbox_wrapper: Vec::new(),
            failure_budget: 6000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    AllPassed,
    SomeFailed,
    Crashed,
    TimedOut,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub passed: u32,
    pub failed: u32,
    pub errored: u32,
    pub exit_code: Option<i32>,
    pub summary_line: Option<String>,
    pub stdout_tail: String,
    pub stderr_tail: String,
    pub duration_secs: f64,
    pub verdict: Verdict,
}

impl TestReport {
    pub fn passed_all(&self) -> bool {
        self.verdict == Verdict::AllPassed
    }

    /// A report for a run that never happened, e.g. an unparseable response.
    pub fn not_run(reason: &str) -> Self {
        Self {
            passed: 0,
            failed: 0,
            errored: 0,
            exit_code: None,
            summary_line: None,
            stdout_tail: String::new(),
            stderr_tail: reason.to_string(),
            duration_secs: 0.0,
            verdict: Verdict::Crashed,
        }
    }
}

/// Files making up one run: `<unit>.py`, `test_<unit>.py` and `fixtures/`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UnitFiles {
    pub unit: String,
    pub source: String,
    pub tests: String,
    /// Modules the source star-imports, in order.
    pub imports: Vec<String>,
    /// `(module name, text)` placed under `fixtures/`.
    pub fixtures: Vec<(String, String)>,
}

pub fn source_header(imports: &[String]) -> String {
    let mut h = String::from(
        "import os as _os\nimport sys as _sys\n_sys.path.insert(0, _os.path.join(_os.path.dirname(_os.path.abspath(__file__)), \"fixtures\"))\n",
    );
    for m in imports {
        h.push_str(&format!("from {m} import *\n"));
    }
    h
}

pub fn test_header(unit: &str) -> String {
    format!("import numpy as np\nimport pytest\nfrom {unit} import *\n")
}

/// Write the unit's files into `dir`, which must be empty or absent.
pub fn prepare_workdir(dir: &Path, files: &UnitFiles) -> Result<(), HarnessError> {
    let fail = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::WorkdirSetupFailed { path, source }
    };
    fs::create_dir_all(dir).map_err(fail(dir))?;
    if fs::read_dir(dir).map_err(fail(dir))?.next().is_some() {
        return Err(HarnessError::WorkdirSetupFailed {
            path: dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::AlreadyExists, "workdir is not empty"),
        });
    }
    let write = |path: PathBuf, text: String| fs::write(&path, text).map_err(fail(&path));
    write(
        dir.join(format!("{}.py", files.unit)),
        format!("{}{}\n", source_header(&files.imports), files.source.trim_end()),
    )?;
    write(
        dir.join(format!("test_{}.py", files.unit)),
        format!("{}{}\n", test_header(&files.unit), files.tests.trim_end()),
    )?;
    let fixtures = dir.join("fixtures");
    fs::create_dir_all(&fixtures).map_err(fail(&fixtures))?;
    for (name, text) in &files.fixtures {
        write(fixtures.join(format!("{name}.py")), text.clone())?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestRun {
    pub workdir: PathBuf,
    /// Full argv, wrapper included.
    pub command: Vec<String>,
    pub timeout: Duration,
    pub env_allowlist: Vec<String>,
    pub summary_regex: String,
}

impl TestRun {
    pub fn new(workdir: &Path, config: &HarnessConfig) -> Self {
        Self {
            workdir: workdir.to_path_buf(),
            command: config
                .sandbox_wrapper
                .iter()
                .chain(&config.test_command)
                .cloned()
                .collect(),
            timeout: Duration::from_secs_f64(config.timeout_seconds.max(0.0)),
            env_allowlist: config.env_allowlist.clone(),
            summary_regex: config.summary_regex.clone(),
        }
    }
}

fn tail(text: &str, lines: usize) -> String {
    let all: Vec<&str> = text.lines().collect();
    all[all.len().saturating_sub(lines)..].join("\n")
}

fn reader<R: Read + Send + 'static>(mut r: R) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = r.read_to_end(&mut buf);
        buf
    })
}

pub fn run_tests(run: &TestRun) -> Result<TestReport, HarnessError> {
    let pattern = Regex::new(&format!("(?m){}", run.summary_regex))?;
    let (program, args) = run.command.split_first().ok_or(HarnessError::EmptyCommand)?;
    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(&run.workdir)
        .env_clear()
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    for key in &run.env_allowlist {
        if let Some(v) = std::env::var_os(key) {
            cmd.env(key, v);
        }
    }
    let start = Instant::now();
    let mut child = cmd.spawn().map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => HarnessError::RunnerNotFound(program.clone()),
        _ => HarnessError::Spawn(e),
    })?;
    let out = reader(child.stdout.take().expect("piped stdout"));
    let err = reader(child.stderr.take().expect("piped stderr"));
    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait().map_err(HarnessError::Spawn)? {
            break Some(status);
        }
        if start.elapsed() >= run.timeout {
            timed_out = true;
            // SAFETY: signalling the process group created for this child.
            unsafe {
                libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
            }
            let _ = child.kill();
            let _ = child.wait();
            break None;
        }
        thread::sleep(Duration::from_millis(10));
    };
    let stdout = String::from_utf8_lossy(&out.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&err.join().unwrap_or_default()).into_owned();
    Ok(parse_report(
        &stdout,
        &stderr,
        status.and_then(|s| s.code()),
        timed_out,
        start.elapsed().as_secs_f64(),
        &pattern,
    ))
}

/// Classify captured runner output. Pure, so fixed output always gives the
/// same report.
pub fn parse_report(
    stdout: &str,
    stderr: &str,
    exit_code: Option<i32>,
    timed_out: bool,
    duration_secs: f64,
    summary: &Regex,
) -> TestReport {
    let summary_line = summary
        .find_iter(stdout)
        .last()
        .map(|m| stdout[m.start()..].lines().next().unwrap_or_default().trim().to_string());
    let count = |words: &[&str]| -> u32 {
        let Some(line) = &summary_line else { return 0 };
        let re = Regex::new(r"(\d+) (\w+)").expect("static regex");
        re.captures_iter(line)
            .filter(|c| words.contains(&&c[2]))
            .filter_map(|c| c[1].parse::<u32>().ok())
            .sum()
    };
    let passed = count(&["passed", "xpassed"]);
    let failed = count(&["failed"]);
    let errored = count(&["error", "errors"]);
    let verdict = if timed_out {
        Verdict::TimedOut
    } else {
        match (exit_code, &summary_line) {
            (Some(0), Some(_)) if failed == 0 && errored == 0 && passed >= 1 => Verdict::AllPassed,
            (Some(1), Some(_)) if failed > 0 || errored > 0 => Verdict::SomeFailed,
            (Some(1), None) => Verdict::SomeFailed,
            _ => Verdict::Crashed,
        }
    };
    TestReport {
        passed,
        failed,
        errored,
        exit_code,
        summary_line,
        stdout_tail: tail(stdout, TAIL_LINES),
        stderr_tail: tail(stderr, TAIL_LINES),
        duration_secs,
        verdict,
    }
}

fn keep_tail(text: &str, budget: usize) -> &str {
    let n = text.chars().count();
    if n <= budget {
        return text;
    }
    let skip = n - budget;
    let at = text.char_indices().nth(skip).map_or(text.len(), |(i, _)| i);
    &text[at..]
}

/// Failure text for the repair prompt, unfenced, at most `budget` chars,
/// ending with the summary line.
pub fn failure_body(report: &TestReport, budget: usize) -> Result<String, HarnessError> {
    if report.passed_all() {
        return Err(HarnessError::ReportPassed);
    }
    let mut body = String::new();
    if !report.stderr_tail.trim().is_empty() {
        body.push_str(report.stderr_tail.trim_end());
        body.push('\n');
    }
    body.push_str(report.stdout_tail.trim_end());
    let last = match (&report.summary_line, report.verdict) {
        (_, Verdict::TimedOut) => "test run timed out".to_string(),
        (Some(s), _) => s.clone(),
        (None, _) => format!("runner exited with code {:?}", report.exit_code),
    };
    if !body.trim_end().ends_with(&last) {
        if !body.is_empty() {
            body.push('\n');
        }
        body.push_str(&last);
    }
    let body = normalize_volatile(body.trim_start_matches('\n'));
    Ok(keep_tail(&body, budget).to_string())
}

/// Mask run-to-run noise (durations, object addresses) so identical
/// failures give identical repair prompts.
pub fn normalize_volatile(text: &str) -> String {
    let durations = Regex::new(r"\bin \d+(?:\.\d+)?s\b").expect("static regex");
    let addresses = Regex::new(r"\b0x[0-9a-fA-F]{6,}\b").expect("static regex");
    let text = durations.replace_all(text, "in <elapsed>");
    addresses.replace_all(&text, "0x<addr>").into_owned()
}

/// [`failure_body`] inside a fenced block.
pub fn format_failure_context(report: &TestReport, budget: usize) -> Result<String, HarnessError> {
    Ok(format!("```\n{}\n```", failure_body(report, budget)?))
}
