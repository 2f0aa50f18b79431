//! Plan a session over a codebase and drive each chunk through test
//! generation, translation, test runs and repair, in dependency order.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::corpus::extract_test_module;
use crate::fortran::{approx_tokens, scan_tree, FortranError, ScanOptions};
use crate::graph::{build_graph, order_for_translation, GraphError};
use crate::harness::{self, failure_body, prepare_workdir, run_tests, TestReport, TestRun, UnitFiles};
use crate::llm::{ChatMessage, LlmClient};
use crate::prompt::{self, ParsedResponse, Task};
use crate::session::{
    Attempt, BlockReason, ConfigSnapshot, OrchestratorConfig, SessionError, Store, TranslationSession,
    UnitState, UnitStatus,
};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("no Fortran units found under {0}")]
    EmptyCodebase(PathBuf),
    #[error(transparent)]
    Fortran(#[from] FortranError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),
    #[error("unit `{unit}` is not eligible: {reason}")]
    NotEligible { unit: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, OrchestratorError>;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> OrchestratorError + '_ {
    move |source| OrchestratorError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Text of every `.pf` file under `root` (or beside it, for a single file).
fn fortran_test_files(root: &Path) -> Result<Vec<String>> {
    let dir = if root.is_file() {
        root.parent().unwrap_or(Path::new("."))
    } else {
        root
    };
    let mut out = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name().into_iter().filter_map(|e| e.ok()) {
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|x| x == "pf") {
            out.push(fs::read_to_string(entry.path()).map_err(io(entry.path()))?);
        }
    }
    Ok(out)
}

/// Scan, build the graph and order it; chunks over the token budget start
/// blocked, the rest pending.
pub fn plan_session(root: &Path, config: ConfigSnapshot) -> Result<TranslationSession> {
    let units = scan_tree(root, &ScanOptions::default())?;
    if units.is_empty() {
        return Err(OrchestratorError::EmptyCodebase(root.to_path_buf()));
    }
    let graph = build_graph(&units)?;
    let order = order_for_translation(&graph);
    let pf_files = fortran_test_files(root)?;
    let by_id: BTreeMap<&str, _> = units.iter().map(|u| (u.id.as_str(), u)).collect();
    let key_of: BTreeMap<&str, &str> = order
        .groups
        .iter()
        .flat_map(|g| g.iter().map(move |m| (m.as_str(), g[0].as_str())))
        .collect();

    let now = Utc::now();
    let mut session = TranslationSession {
        session_id: uuid::Uuid::new_v4().to_string(),
        codebase_root: root.to_path_buf(),
        order: order.clone(),
        unit_states: BTreeMap::new(),
        config,
        created_at: now,
        updated_at: now,
        events: Vec::new(),
    };
    let budget = session.config.orchestrator.token_budget;
    let mut over_budget = Vec::new();
    for group in &order.groups {
        let key = group[0].as_str();
        let members: Vec<_> = group.iter().map(|id| by_id[id.as_str()]).collect();
        let code: String = members
            .iter()
            .map(|u| format!("{}\n", u.text.trim_end()))
            .collect::<Vec<_>>()
            .join("\n");
        let tests: Option<Vec<String>> = members
            .iter()
            .map(|u| pf_files.iter().find_map(|pf| extract_test_module(pf, &u.name)))
            .collect();
        let mut depends_on: Vec<&str> = group
            .iter()
            .flat_map(|id| graph.dependencies(id))
            .map(|d| key_of[d])
            .filter(|d| *d != key)
            .collect();
        depends_on.sort_by_key(|d| order.position(d));
        depends_on.dedup();
        let tokens = members.iter().map(|u| approx_tokens(&u.text)).sum();
        if tokens > budget {
            over_budget.push((key.to_string(), tokens));
        }
        session.unit_states.insert(
            key.to_string(),
            UnitState {
                name: members[0].name.clone(),
                members: group.clone(),
                depends_on: depends_on.into_iter().map(String::from).collect(),
                code,
                approx_tokens: tokens,
                status: UnitStatus::Pending,
                blocked_reason: None,
                fortran_tests: tests.map(|t| t.join("\n")),
                fortran_tests_generated: false,
                attempts: Vec::new(),
                final_source: None,
                final_tests: None,
                provider_calls: 0,
                last_error: None,
            },
        );
    }
    for (key, tokens) in over_budget {
        block(&mut session, &key, BlockReason::TokenBudget, format!("{tokens} tokens > budget {budget}"));
    }
    Ok(session)
}

fn block(session: &mut TranslationSession, key: &str, reason: BlockReason, note: String) {
    session.set_status(key, UnitStatus::Blocked, Some(note));
    if let Some(s) = session.unit_states.get_mut(key) {
        s.blocked_reason = Some(reason);
    }
}

fn status_of(session: &TranslationSession, key: &str) -> Option<UnitStatus> {
    session.unit_states.get(key).map(|s| s.status)
}

/// Block pending chunks behind failed or blocked dependencies, and release
/// chunks whose dependencies have recovered (e.g. by a waiver).
pub fn refresh_blocking(session: &mut TranslationSession) {
    let keys: Vec<String> = session.keys().map(String::from).collect();
    for key in keys {
        let state = &session.unit_states[&key];
        let broken = state.depends_on.iter().find(|d| {
            matches!(status_of(session, d), Some(UnitStatus::Failed | UnitStatus::Blocked))
        });
        match (state.status, state.blocked_reason, broken) {
            (UnitStatus::Pending, _, Some(dep)) => {
                let note = format!("dependency {} did not pass", session.unit_states[dep].name);
                block(session, &key, BlockReason::DependencyFailed, note);
            }
            (UnitStatus::Blocked, Some(BlockReason::DependencyFailed), None) => {
                session.set_status(&key, UnitStatus::Pending, Some("dependencies satisfied".into()));
            }
            _ => {}
        }
    }
}

fn deps_satisfied(session: &TranslationSession, state: &UnitState) -> bool {
    state
        .depends_on
        .iter()
        .all(|d| status_of(session, d).is_some_and(UnitStatus::satisfies_dependents))
}

fn next_eligible_in(
    session: &TranslationSession,
    busy: &BTreeSet<String>,
    scope: Option<&BTreeSet<String>>,
) -> Option<String> {
    session
        .keys()
        .filter(|k| !busy.contains(*k) && scope.is_none_or(|s| s.contains(*k)))
        .find(|k| {
            let state = &session.unit_states[*k];
            state.status == UnitStatus::Pending && deps_satisfied(session, state)
        })
        .map(String::from)
}

/// The first pending chunk, in order, whose dependencies are all passed or waived.
pub fn next_eligible(session: &TranslationSession) -> Option<String> {
    next_eligible_in(session, &BTreeSet::new(), None)
}

/// Every chunk `key` depends on, directly or not, in translation order.
pub fn transitive_dependencies(session: &TranslationSession, key: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![key.to_string()];
    while let Some(k) = stack.pop() {
        for d in session.unit_states.get(&k).map(|s| s.depends_on.as_slice()).unwrap_or_default() {
            if seen.insert(d.clone()) {
                stack.push(d.clone());
            }
        }
    }
    session.keys().filter(|k| seen.contains(*k)).map(String::from).collect()
}

/// Resolve a unit name (or chunk key) to its chunk key.
pub fn resolve_unit(session: &TranslationSession, unit: &str) -> Result<String> {
    if session.unit_states.contains_key(unit) {
        return Ok(unit.to_string());
    }
    let lower = unit.to_ascii_lowercase();
    session
        .unit_states
        .iter()
        .find(|(_, s)| s.name == lower || s.members.iter().any(|m| m.rsplit("::").next() == Some(&lower)))
        .map(|(k, _)| k.clone())
        .ok_or_else(|| OrchestratorError::UnknownUnit(unit.to_string()))
}

/// Accept a failed or blocked chunk as is; its last candidate stands in
/// for a passing translation.
pub fn waive(session: &mut TranslationSession, unit: &str) -> Result<()> {
    let key = resolve_unit(session, unit)?;
    let state = &session.unit_states[&key];
    match state.status {
        UnitStatus::Failed | UnitStatus::Blocked => {}
        UnitStatus::Waived | UnitStatus::Passed => return Ok(()),
        other => {
            return Err(OrchestratorError::NotEligible {
                unit: unit.to_string(),
                reason: format!("only failed or blocked units can be waived, not {}", other.as_str()),
            })
        }
    }
    let last = state.last_attempt().cloned();
    let s = session.unit_states.get_mut(&key).expect("key resolved");
    s.final_source = last.as_ref().and_then(|a| a.candidate_source.clone());
    s.final_tests = last.and_then(|a| a.candidate_tests);
    session.set_status(&key, UnitStatus::Waived, Some("waived by operator".into()));
    Ok(())
}

/// Replay the event log and report the first chunk that entered
/// `translating` before all its dependencies were passed or waived.
pub fn check_event_order(session: &TranslationSession) -> std::result::Result<(), String> {
    let mut status: BTreeMap<&str, UnitStatus> =
        session.unit_states.keys().map(|k| (k.as_str(), UnitStatus::Pending)).collect();
    for event in &session.events {
        if event.status == UnitStatus::Translating {
            let deps = session.unit_states.get(&event.unit).map(|s| s.depends_on.as_slice()).unwrap_or_default();
            if let Some(d) = deps.iter().find(|d| !status[d.as_str()].satisfies_dependents()) {
                return Err(format!(
                    "event {}: {} started while dependency {} was {}",
                    event.seq,
                    event.unit,
                    d,
                    status[d.as_str()].as_str()
                ));
            }
        }
        status.insert(&event.unit, event.status);
    }
    Ok(())
}

/// `from <dep> import *` for each transitive dependency, then `source`.
pub fn module_text(session: &TranslationSession, key: &str, source: &str) -> String {
    let mut text = String::new();
    for dep in transitive_dependencies(session, key) {
        text.push_str(&format!("from {} import *\n", session.unit_states[&dep].name));
    }
    text.push_str(source.trim_end());
    text.push('\n');
    text
}

/// Everything a worker needs to translate one chunk.
#[derive(Clone, Debug)]
struct Job {
    name: String,
    code: String,
    fortran_tests: Option<String>,
    attempts: Vec<Attempt>,
    imports: Vec<String>,
    fixtures: Vec<(String, String)>,
}

fn job_for(session: &TranslationSession, key: &str) -> Job {
    let state = &session.unit_states[key];
    let deps = transitive_dependencies(session, key);
    Job {
        name: state.name.clone(),
        code: state.code.clone(),
        fortran_tests: state.fortran_tests.clone(),
        attempts: state.attempts.clone(),
        imports: deps.iter().map(|d| session.unit_states[d].name.clone()).collect(),
        fixtures: deps
            .iter()
            .filter_map(|d| {
                let dep = &session.unit_states[d];
                let source = dep.final_source.as_deref()?;
                Some((dep.name.clone(), module_text(session, d, source)))
            })
            .collect(),
    }
}

#[derive(Debug)]
enum Progress {
    Attempt {
        attempt: Attempt,
        calls: usize,
        generated_fortran_tests: Option<String>,
    },
    Done {
        passed: bool,
    },
}

/// Provider calls made within one attempt.
struct Turn<'a> {
    client: &'a LlmClient,
    exchanges: Vec<String>,
    calls: usize,
}

impl Turn<'_> {
    fn ask(&mut self, task: Task, slots: &[(&str, &str)]) -> std::result::Result<ParsedResponse, String> {
        let slots: BTreeMap<String, String> = slots.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let fail = |e: &dyn std::fmt::Display| format!("{task}: {e}");
        let (system, user) = prompt::render(task, &slots).map_err(|e| fail(&e))?;
        self.calls += 1;
        let exchange = self
            .client
            .complete(&[ChatMessage::system(system), ChatMessage::user(user)])
            .map_err(|e| fail(&e))?;
        self.exchanges.push(exchange.request_digest);
        prompt::parse_response(task, &exchange.response_text).map_err(|e| fail(&e))
    }
}

fn run_candidate(job: &Job, source: &str, tests: &str, config: &harness::HarnessConfig) -> std::result::Result<TestReport, String> {
    let dir = tempfile::Builder::new()
        .prefix("ftrans-run-")
        .tempdir()
        .map_err(|e| format!("could not create a workdir: {e}"))?;
    let files = UnitFiles {
        unit: job.name.clone(),
        source: source.to_string(),
        tests: tests.to_string(),
        imports: job.imports.clone(),
        fixtures: job.fixtures.clone(),
    };
    prepare_workdir(dir.path(), &files).map_err(|e| e.to_string())?;
    run_tests(&TestRun::new(dir.path(), config)).map_err(|e| e.to_string())
}

/// Failure text fed to the next repair prompt.
fn repair_context(attempt: &Attempt, budget: usize) -> Option<String> {
    if attempt.tests_ran {
        failure_body(&attempt.report, budget).ok()
    } else {
        attempt.error.clone()
    }
}

/// Translate, test and repair one chunk, continuing after any attempts already made.
/// `emit` returns false to stop early.
fn run_pipeline(job: Job, client: &LlmClient, config: &OrchestratorConfig, emit: &mut dyn FnMut(Progress) -> bool) {
    let last = job.attempts.last();
    if last.is_some_and(|a| a.report.passed_all()) {
        emit(Progress::Done { passed: true });
        return;
    }
    let budget = config.harness.failure_budget;
    let mut source = last.and_then(|a| a.candidate_source.clone());
    let mut tests = last.and_then(|a| a.candidate_tests.clone());
    let mut fortran_tests = job.fortran_tests.clone();
    let mut context = job
        .attempts
        .iter()
        .rev()
        .find(|a| a.tests_ran)
        .or(last)
        .and_then(|a| repair_context(a, budget));

    for index in job.attempts.len() + 1..=config.max_iters as usize {
        let started = Instant::now();
        // 3 calls on the first attempt, at most 2 per retry
        let call_budget = if index == 1 { 3 } else { 2 };
        let mut turn = Turn {
            client,
            exchanges: Vec::new(),
            calls: 0,
        };
        let mut generated = None;
        let step = (|| -> std::result::Result<(), String> {
            if fortran_tests.is_none() {
                let r = turn.ask(Task::GenFortranTests, &[("fortran_code", &job.code)])?;
                let t = r.unit_tests.unwrap_or_default();
                generated = Some(t.clone());
                fortran_tests = Some(t);
            }
            if let (Some(s), Some(t)) = (&source, &tests) {
                let results = context.clone().unwrap_or_else(|| "the tests did not run".into());
                let r = turn.ask(
                    Task::Repair,
                    &[("python_function", s), ("python_unit_tests", t), ("python_test_results", &results)],
                )?;
                source = r.source_code;
                tests = r.unit_tests;
                return Ok(());
            }
            if tests.is_none() && turn.calls < call_budget {
                let ft = fortran_tests.as_deref().unwrap_or_default();
                tests = turn.ask(Task::TranslateTests, &[("unit_tests", ft)])?.unit_tests;
            }
            if source.is_none() && turn.calls < call_budget {
                source = turn.ask(Task::TranslateSource, &[("fortran_code", &job.code)])?.source_code;
            }
            Ok(())
        })();

        let (report, tests_ran, error) = match (step, &source, &tests) {
            (Err(e), _, _) => (TestReport::not_run(&e), false, Some(e)),
            (Ok(()), Some(s), Some(t)) => match run_candidate(&job, s, t, &config.harness) {
                Ok(report) => (report, true, None),
                Err(e) => (TestReport::not_run(&e), false, Some(e)),
            },
            (Ok(()), _, _) => {
                let e = "no complete candidate within this attempt's call budget".to_string();
                (TestReport::not_run(&e), false, Some(e))
            }
        };
        let attempt = Attempt {
            index: index as u32,
            exchanges: turn.exchanges,
            candidate_source: source.clone(),
            candidate_tests: tests.clone(),
            report,
            tests_ran,
            error,
            duration_secs: started.elapsed().as_secs_f64(),
        };
        let passed = attempt.report.passed_all();
        if tests_ran || context.is_none() {
            context = repair_context(&attempt, budget).or(context);
        }
        let keep_going = emit(Progress::Attempt {
            attempt,
            calls: turn.calls,
            generated_fortran_tests: generated,
        });
        if !keep_going {
            return;
        }
        if passed {
            emit(Progress::Done { passed: true });
            return;
        }
    }
    emit(Progress::Done { passed: false });
}

fn failure_summary(attempt: &Attempt) -> String {
    if let Some(e) = &attempt.error {
        return e.clone();
    }
    let r = &attempt.report;
    match &r.summary_line {
        Some(line) => line.trim_matches(|c: char| c == '=' || c.is_whitespace()).to_string(),
        None => format!("tests {:?} with exit code {:?}", r.verdict, r.exit_code),
    }
}

fn apply(session: &mut TranslationSession, key: &str, progress: Progress) {
    match progress {
        Progress::Attempt {
            attempt,
            calls,
            generated_fortran_tests,
        } => {
            let state = session.unit_states.get_mut(key).expect("known chunk");
            if let Some(t) = generated_fortran_tests {
                state.fortran_tests = Some(t);
                state.fortran_tests_generated = true;
            }
            state.provider_calls += calls;
            state.last_error = (!attempt.report.passed_all()).then(|| failure_summary(&attempt));
            state.attempts.push(attempt);
            session.updated_at = Utc::now();
        }
        Progress::Done { passed: true } => {
            let state = session.unit_states.get_mut(key).expect("known chunk");
            let last = state.attempts.last();
            state.final_source = last.and_then(|a| a.candidate_source.clone());
            state.final_tests = last.and_then(|a| a.candidate_tests.clone());
            state.last_error = None;
            session.set_status(key, UnitStatus::Passed, None);
        }
        Progress::Done { passed: false } => {
            let note = session.unit_states[key].last_error.clone();
            session.set_status(key, UnitStatus::Failed, note);
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Parallel chunk translations.
    pub workers: usize,
    /// Restrict the run to these units and their dependencies.
    pub targets: Option<Vec<String>>,
    /// Units to waive before scheduling.
    pub waive: Vec<String>,
}

impl RunOptions {
    pub fn from_config(config: &OrchestratorConfig) -> Self {
        Self {
            workers: config.workers,
            targets: None,
            waive: config.waive.clone(),
        }
    }
}

enum Message {
    Progress(Progress),
    Exit,
}

/// Translate every eligible chunk, saving after each state transition.
/// Returns the chunk keys that reached a final status in this run. A failed
/// save stops scheduling, lets in-flight work wind down unsaved, and is
/// returned as the error.
pub fn run_session(
    session: &mut TranslationSession,
    client: &LlmClient,
    store: &mut dyn Store,
    options: &RunOptions,
) -> Result<Vec<String>> {
    let scope = match &options.targets {
        None => None,
        Some(targets) => {
            let mut keys = BTreeSet::new();
            for t in targets {
                let key = resolve_unit(session, t)?;
                keys.extend(transitive_dependencies(session, &key));
                keys.insert(key);
            }
            Some(keys)
        }
    };
    for unit in &options.waive {
        waive(session, unit)?;
    }
    refresh_blocking(session);
    store.save(session)?;

    let config = session.config.orchestrator.clone();
    let workers = options.workers.max(1);
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(String, Message)>();
    let mut busy = BTreeSet::new();
    let mut finished = Vec::new();
    let mut failure: Option<SessionError> = None;

    thread::scope(|threads| loop {
        while failure.is_none() && busy.len() < workers {
            refresh_blocking(session);
            let Some(key) = next_eligible_in(session, &busy, scope.as_ref()) else {
                break;
            };
            session.set_status(&key, UnitStatus::Translating, None);
            if let Err(e) = store.save(session) {
                failure = Some(e);
                abort.store(true, Ordering::SeqCst);
                break;
            }
            let job = job_for(session, &key);
            let tx = tx.clone();
            let (abort, config, worker_key) = (&abort, &config, key.clone());
            threads.spawn(move || {
                run_pipeline(job, client, config, &mut |p| {
                    tx.send((worker_key.clone(), Message::Progress(p))).is_ok() && !abort.load(Ordering::SeqCst)
                });
                let _ = tx.send((worker_key, Message::Exit));
            });
            busy.insert(key);
        }
        if busy.is_empty() {
            break;
        }
        let (key, message) = rx.recv().expect("workers hold senders until they exit");
        match message {
            Message::Exit => {
                busy.remove(&key);
            }
            Message::Progress(p) if failure.is_none() => {
                let done = matches!(p, Progress::Done { .. });
                apply(session, &key, p);
                if let Err(e) = store.save(session) {
                    failure = Some(e);
                    abort.store(true, Ordering::SeqCst);
                } else if done {
                    finished.push(key);
                }
            }
            Message::Progress(_) => {}
        }
    });

    match failure {
        Some(e) => Err(e.into()),
        None => {
            refresh_blocking(session);
            store.save(session)?;
            Ok(finished)
        }
    }
}

/// Translate one chunk whose dependencies are satisfied. A passed chunk is
/// returned unchanged.
pub fn translate_unit(
    session: &mut TranslationSession,
    client: &LlmClient,
    store: &mut dyn Store,
    unit: &str,
) -> Result<UnitState> {
    let key = resolve_unit(session, unit)?;
    let state = &session.unit_states[&key];
    if state.status == UnitStatus::Passed {
        return Ok(state.clone());
    }
    let not_eligible = |reason: String| OrchestratorError::NotEligible {
        unit: unit.to_string(),
        reason,
    };
    if state.status != UnitStatus::Pending {
        return Err(not_eligible(format!("status is {}", state.status.as_str())));
    }
    if !deps_satisfied(session, state) {
        return Err(not_eligible("dependencies are not all passed or waived".into()));
    }
    let options = RunOptions {
        workers: 1,
        targets: Some(vec![key.clone()]),
        waive: Vec::new(),
    };
    run_session(session, client, store, &options)?;
    Ok(session.unit_states[&key].clone())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestUnit {
    pub unit: String,
    pub members: Vec<String>,
    pub status: UnitStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocked_reason: Option<BlockReason>,
    /// Paths relative to the output directory.
    pub files: Vec<String>,
    pub attempts: usize,
    pub provider_calls: usize,
    pub duration_secs: f64,
    pub attempt_durations: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputManifest {
    pub session_id: String,
    pub units: Vec<ManifestUnit>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

const CONFTEST: &str = "import os\nimport sys\n\nsys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))\n";

/// Write translated modules, their tests, generated Fortran tests and
/// `manifest.json` under `out_dir`.
pub fn emit_outputs(session: &TranslationSession, out_dir: &Path) -> Result<OutputManifest> {
    let write = |rel: &str, text: &str| -> Result<()> {
        let path = out_dir.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io(dir))?;
        }
        fs::write(&path, text).map_err(io(&path))
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut units = Vec::new();
    let mut any_tests = false;
    for key in session.keys() {
        let state = &session.unit_states[key];
        let name = &state.name;
        let mut files = Vec::new();
        if state.status.satisfies_dependents() {
            if let Some(source) = &state.final_source {
                let rel = format!("{name}.py");
                write(&rel, &module_text(session, key, source))?;
                files.push(rel);
            }
            if let Some(tests) = &state.final_tests {
                let rel = format!("tests/test_{name}.py");
                write(&rel, &format!("{}{}\n", harness::test_header(name), tests.trim_end()))?;
                files.push(rel);
                any_tests = true;
            }
        }
        if let (true, Some(pf)) = (state.fortran_tests_generated, &state.fortran_tests) {
            let rel = format!("fortran_tests/{name}.pf");
            write(&rel, &format!("{}\n", pf.trim_end()))?;
            files.push(rel);
        }
        units.push(ManifestUnit {
            unit: name.clone(),
            members: state.members.clone(),
            status: state.status,
            blocked_reason: state.blocked_reason,
            files,
            attempts: state.attempts.len(),
            provider_calls: state.provider_calls,
            duration_secs: state.duration_secs(),
            attempt_durations: state.attempts.iter().map(|a| a.duration_secs).collect(),
            last_error: state.last_error.clone(),
        });
    }
    if any_tests {
        write("tests/conftest.py", CONFTEST)?;
    }
    let manifest = OutputManifest {
        session_id: session.session_id.clone(),
        units,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write(MANIFEST_FILE, &text)?;
    Ok(manifest)
}
