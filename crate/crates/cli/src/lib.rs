//! The `ftrans` command line: Fortran unit analysis, dependency ordering,
//! test-verified translation sessions and the leaf numerics.
//!
//! Exit codes: 0 success, 1 pipeline failure, 2 usage or input error.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ftrans_core::corpus::{default_root, load_corpus};
use ftrans_core::fortran::{scan_tree, units_manifest, ScanOptions};
use ftrans_core::graph::{build_graph, order_for_translation, to_dot, DependencyGraph};
use ftrans_core::llm::{LlmClient, ProviderKind};
use ftrans_core::orchestrator::{emit_outputs, plan_session, resolve_unit, run_session, RunOptions};
use ftrans_core::session::{resume, ConfigSnapshot, FileStore, TranslationSession, UnitStatus};
use ftrans_core::verify::{verify_dir, VerifyError};
use leaf_numerics::synthetic::{base_params, frozen_dataset, load_observations};
use leaf_numerics::{bench_kernel, fit_gradient_descent, fit_uniform, BenchOptions, GdOptions};
use serde::Serialize;

use crate::config::{resolve, Overrides, Settings};

pub const SUCCESS: u8 = 0;
pub const PIPELINE_FAILURE: u8 = 1;
pub const USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "ftrans", version, about = "Translate Fortran units to tested Python")]
pub struct Cli {
    /// TOML or JSON settings file (FTRANS_CONFIG takes precedence).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct JsonArg {
    /// Machine-readable output to PATH, or stdout when PATH is `-` or omitted.
    #[arg(long, value_name = "PATH", num_args = 0..=1, default_missing_value = "-")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan Fortran sources and list program units.
    Analyze {
        root: PathBuf,
        /// Include each unit's source text in the manifest.
        #[arg(long)]
        inline_text: bool,
        #[command(flatten)]
        json: JsonArg,
    },
    /// Emit the unit dependency graph as Graphviz DOT.
    Graph {
        root: PathBuf,
        /// DOT destination; stdout when `-` or omitted.
        #[arg(long, value_name = "PATH")]
        dot: Option<PathBuf>,
        #[command(flatten)]
        json: JsonArg,
    },
    /// Print the translation order, one group per line.
    Order {
        root: PathBuf,
        #[command(flatten)]
        json: JsonArg,
    },
    /// Run or resume a translation session.
    Translate(TranslateArgs),
    /// Estimate Vcmax from (ci, An) observations.
    Fit(FitArgs),
    /// Time the coupled ci solve over n initial guesses.
    Bench {
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long)]
        workers: Option<usize>,
        /// Report destination; stdout when omitted.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[command(flatten)]
        json: JsonArg,
    },
    /// Check translated modules against the reference numerics.
    Verify {
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
        /// Corpus supplying the oracle cases.
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        json: JsonArg,
    },
    /// Print the resolved settings.
    Config {
        #[command(flatten)]
        json: JsonArg,
    },
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// Codebase root; not needed with --resume.
    #[arg(required_unless_present = "resume")]
    pub root: Option<PathBuf>,
    /// Translate only these units and their dependencies.
    #[arg(long)]
    pub unit: Vec<String>,
    #[arg(long, value_parser = parse_provider)]
    pub provider: Option<ProviderKind>,
    /// Output directory for modules, tests and manifest.json.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Session file; defaults to <out>/session.json.
    #[arg(long, value_name = "PATH")]
    pub session: Option<PathBuf>,
    /// Continue the session stored at PATH.
    #[arg(long, value_name = "PATH")]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub max_iters: Option<u32>,
    #[arg(long)]
    pub token_budget: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Accept a failed or blocked unit with its last candidate.
    #[arg(long)]
    pub waive: Vec<String>,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Recorded exchanges for the replay provider.
    #[arg(long, value_name = "DIR")]
    pub transcript_dir: Option<PathBuf>,
    /// Record every exchange here.
    #[arg(long, value_name = "DIR")]
    pub record_dir: Option<PathBuf>,
    #[command(flatten)]
    pub json: JsonArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Grid,
    Gd,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV with header `ci_pa,an_umol_m2_s`; the frozen synthetic set when omitted.
    #[arg(long, value_name = "CSV")]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::Gd)]
    pub method: Method,
    #[arg(long, default_value_t = GdOptions::default().steps)]
    pub steps: usize,
    #[arg(long, default_value_t = GdOptions::default().learning_rate)]
    pub lr: f64,
    #[arg(long, default_value_t = GdOptions::default().start)]
    pub start: f64,
    /// Grid size for uniform sampling.
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 10.0)]
    pub lo: f64,
    #[arg(long, default_value_t = 100.0)]
    pub hi: f64,
    /// Report destination; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub json: JsonArg,
}

fn parse_provider(s: &str) -> Result<ProviderKind, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn is_stdout(p: &Path) -> bool {
    p.as_os_str() == "-"
}

/// Where machine output goes and where human lines go.
struct Output {
    json: Option<PathBuf>,
}

impl Output {
    fn new(json: &JsonArg) -> Self {
        Self {
            json: json.json.clone(),
        }
    }

    fn json_to_stdout(&self) -> bool {
        self.json.as_deref().is_some_and(is_stdout)
    }

    fn human(&self, text: &str) {
        if self.json_to_stdout() {
            eprint!("{text}");
        } else {
            print!("{text}");
        }
    }

    fn emit<T: Serialize>(&self, value: &T) -> Result<()> {
        match &self.json {
            None => Ok(()),
            Some(path) => write_json(path, value),
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if is_stdout(path) {
        print!("{text}");
        return Ok(());
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn scan(root: &Path) -> Result<Vec<ftrans_core::fortran::SourceUnit>> {
    if !root.exists() {
        bail!("{} does not exist", root.display());
    }
    Ok(scan_tree(root, &ScanOptions::default())?)
}

fn graph_of(root: &Path) -> Result<DependencyGraph> {
    Ok(build_graph(&scan(root)?)?)
}

fn analyze(root: &Path, inline_text: bool, json: &JsonArg) -> Result<u8> {
    let units = scan(root)?;
    if units.is_empty() {
        bail!("no Fortran program units under {}", root.display());
    }
    let out = Output::new(json);
    let manifest = units_manifest(&units, inline_text);
    let mut text = String::new();
    for u in &manifest {
        let _ = writeln!(
            text,
            "{:<28} {:<12} {:>6} tokens  {}:{}-{}",
            u.name,
            format!("{:?}", u.kind).to_ascii_lowercase(),
            u.approx_tokens,
            u.file,
            u.start_line,
            u.end_line
        );
    }
    let _ = writeln!(text, "{} units", manifest.len());
    out.human(&text);
    out.emit(&manifest)?;
    Ok(SUCCESS)
}

#[derive(Serialize)]
struct GraphJson<'a> {
    nodes: Vec<&'a ftrans_core::graph::Node>,
    edges: Vec<&'a ftrans_core::graph::Edge>,
}

fn graph(root: &Path, dot: Option<&Path>, json: &JsonArg) -> Result<u8> {
    let g = graph_of(root)?;
    let out = Output::new(json);
    let dot = dot.unwrap_or(Path::new("-"));
    if is_stdout(dot) && out.json_to_stdout() {
        bail!("--dot and --json cannot both write to stdout");
    }
    write_text(dot, &to_dot(&g))?;
    if !is_stdout(dot) {
        out.human(&format!("{} nodes, {} edges -> {}\n", g.node_count(), g.edge_count(), dot.display()));
    }
    out.emit(&GraphJson {
        nodes: g.nodes.values().collect(),
        edges: g.edges.iter().collect(),
    })?;
    Ok(SUCCESS)
}

/// Group names in translation order; a cycle becomes one group.
pub fn order_groups(root: &Path) -> Result<Vec<Vec<String>>> {
    let g = graph_of(root)?;
    let order = order_for_translation(&g);
    Ok(order
        .groups
        .iter()
        .map(|ids| ids.iter().map(|id| g.name_of(id).to_string()).collect())
        .collect())
}

pub fn format_group(names: &[String]) -> String {
    match names {
        [one] => one.clone(),
        _ => format!("{{{}}}", names.join(", ")),
    }
}

fn order(root: &Path, json: &JsonArg) -> Result<u8> {
    let groups = order_groups(root)?;
    let out = Output::new(json);
    let text: String = groups.iter().map(|g| format_group(g) + "\n").collect();
    out.human(&text);
    out.emit(&serde_json::json!({ "groups": groups }))?;
    Ok(SUCCESS)
}

#[derive(Serialize)]
struct TranslateSummary {
    session: PathBuf,
    out: PathBuf,
    ok: bool,
    manifest: ftrans_core::orchestrator::OutputManifest,
}

fn overrides_for(a: &TranslateArgs) -> Overrides {
    Overrides {
        provider: a.provider,
        base_url: a.base_url.clone(),
        model_name: a.model.clone(),
        transcript_dir: a.transcript_dir.clone(),
        record_dir: a.record_dir.clone(),
        max_iters: a.max_iters,
        token_budget: a.token_budget,
        workers: a.workers,
        waive: a.waive.clone(),
    }
}

fn translate(a: &TranslateArgs, settings: &Settings) -> Result<u8> {
    let out = Output::new(&a.json);
    let (mut session, session_path): (TranslationSession, PathBuf) = match &a.resume {
        Some(path) => {
            let mut s = resume(path)?;
            s.config.provider = settings.provider.clone();
            (s, path.clone())
        }
        None => {
            let root = a.root.as_deref().expect("clap requires root without --resume");
            let snapshot = ConfigSnapshot {
                orchestrator: settings.orchestrator(),
                provider: settings.provider.clone(),
            };
            let s = plan_session(root, snapshot)?;
            let path = a.session.clone().unwrap_or_else(|| a.out.join("session.json"));
            (s, path)
        }
    };
    let targets = if a.unit.is_empty() {
        None
    } else {
        for u in &a.unit {
            resolve_unit(&session, u)?;
        }
        Some(a.unit.clone())
    };
    let client = LlmClient::new(settings.provider.clone())?;
    if let Some(dir) = session_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut store = FileStore::open(&session_path)?;
    let options = RunOptions {
        workers: settings.workers,
        targets,
        waive: settings.waive.clone(),
    };

    let run = run_session(&mut session, &client, &mut store, &options);
    drop(store);
    if let Err(e) = run {
        eprintln!("error: {e}");
        eprintln!("session saved up to the failure: {}", session_path.display());
        return Ok(PIPELINE_FAILURE);
    }
    let manifest = emit_outputs(&session, &a.out)?;

    let in_scope: Vec<&ftrans_core::orchestrator::ManifestUnit> = match &options.targets {
        None => manifest.units.iter().collect(),
        Some(_) => manifest
            .units
            .iter()
            .filter(|u| u.status != UnitStatus::Pending)
            .collect(),
    };
    let ok = in_scope.iter().all(|u| u.status.satisfies_dependents());
    let mut text = String::new();
    for u in &manifest.units {
        let _ = write!(
            text,
            "{:<28} {:<11} attempts={} calls={}",
            u.unit,
            u.status.as_str(),
            u.attempts,
            u.provider_calls
        );
        if let Some(r) = &u.blocked_reason {
            let _ = write!(text, " ({})", serde_json::to_value(r)?.as_str().unwrap_or_default());
        }
        if !u.status.satisfies_dependents() {
            if let Some(e) = &u.last_error {
                let _ = write!(text, "\n    {}", e.lines().next().unwrap_or_default());
            }
        }
        text.push('\n');
    }
    let _ = writeln!(
        text,
        "{} passed, {} waived, {} failed, {} blocked; outputs in {}",
        session.count(UnitStatus::Passed),
        session.count(UnitStatus::Waived),
        session.count(UnitStatus::Failed),
        session.count(UnitStatus::Blocked),
        a.out.display()
    );
    out.human(&text);
    out.emit(&TranslateSummary {
        session: session_path,
        out: a.out.clone(),
        ok,
        manifest,
    })?;
    Ok(if ok { SUCCESS } else { PIPELINE_FAILURE })
}

fn report_out<T: Serialize>(out: Option<&Path>, json: &JsonArg, report: &T, human: &str) -> Result<()> {
    // the report goes to --out, else to --json, else to stdout
    let dest = out.map(Path::to_path_buf).or_else(|| json.json.clone()).unwrap_or_else(|| "-".into());
    write_json(&dest, report)?;
    if is_stdout(&dest) {
        eprint!("{human}");
    } else {
        print!("{human}");
    }
    Ok(())
}

fn fit(a: &FitArgs) -> Result<u8> {
    let observations = match &a.data {
        Some(path) => {
            if !path.is_file() {
                bail!("data file {} not found", path.display());
            }
            load_observations(path)?
        }
        None => frozen_dataset(),
    };
    let params = base_params();
    let result = match a.method {
        Method::Grid => fit_uniform(&params, &observations, (a.lo, a.hi), a.n)?,
        Method::Gd => fit_gradient_descent(
            &params,
            &observations,
            GdOptions {
                start: a.start,
                steps: a.steps,
                learning_rate: a.lr,
            },
        )?,
    };
    let human = format!(
        "{:?}: vcmax_hat={:.4} loss={:.6} iterations={} ({} observations)\n",
        result.method,
        result.vcmax_hat,
        result.loss,
        result.iterations,
        observations.len()
    );
    report_out(a.out.as_deref(), &a.json, &result, &human)?;
    Ok(SUCCESS)
}

fn bench(n: usize, workers: Option<usize>, out: Option<&Path>, json: &JsonArg) -> Result<u8> {
    if n == 0 {
        bail!("--n must be at least 1");
    }
    if workers == Some(0) {
        bail!("--workers must be at least 1");
    }
    let run = bench_kernel(BenchOptions {
        workers,
        ..BenchOptions::new(n)
    })?;
    let r = &run.report;
    let human = format!(
        "{} solves in {:.3} s ({:.0} solves/s), {} converged, {} failed, results {}\n",
        r.n, r.wall_seconds, r.solves_per_second, r.converged, r.failed, r.results_sha256
    );
    report_out(out, json, r, &human)?;
    Ok(if r.failed == 0 { SUCCESS } else { PIPELINE_FAILURE })
}

fn verify(dir: &Path, corpus: Option<&Path>, python: &str, json: &JsonArg) -> Result<u8> {
    let root = corpus.map(Path::to_path_buf).unwrap_or_else(default_root);
    let entries = load_corpus(&root)?;
    let report = match verify_dir(dir, &entries, python) {
        Ok(r) => r,
        Err(e @ (VerifyError::NotADirectory(_) | VerifyError::NothingToVerify(_) | VerifyError::Spawn { .. })) => {
            return Err(e.into())
        }
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(PIPELINE_FAILURE);
        }
    };
    let out = Output::new(json);
    let mut text = String::new();
    for m in &report.mismatches {
        let _ = write!(text, "MISMATCH {} ({}.py) args={:?} expected={:?} got={:?}", m.unit, m.module, m.args, m.expected, m.got);
        if let Some(e) = &m.error {
            let _ = write!(text, " error={e}");
        }
        text.push('\n');
    }
    if !report.missing_units.is_empty() {
        let _ = writeln!(text, "not translated: {}", report.missing_units.join(", "));
    }
    let _ = writeln!(
        text,
        "{} cases over {} units, {} mismatches",
        report.checked,
        report.verified_units.len(),
        report.mismatches.len()
    );
    out.human(&text);
    out.emit(&report)?;
    Ok(if report.ok() { SUCCESS } else { PIPELINE_FAILURE })
}

fn show_config(settings: &Settings, json: &JsonArg) -> Result<u8> {
    match &json.json {
        Some(path) => write_json(path, settings)?,
        None => print!("{}", toml::to_string_pretty(settings)?),
    }
    Ok(SUCCESS)
}

/// Run a parsed command line with `env` as the environment lookup.
pub fn run(cli: &Cli, env: &dyn Fn(&str) -> Option<String>) -> Result<u8> {
    let flags = match &cli.command {
        Command::Translate(a) => overrides_for(a),
        _ => Overrides::default(),
    };
    let settings = || resolve(cli.config.as_deref(), &flags, env);
    match &cli.command {
        Command::Analyze { root, inline_text, json } => analyze(root, *inline_text, json),
        Command::Graph { root, dot, json } => graph(root, dot.as_deref(), json),
        Command::Order { root, json } => order(root, json),
        Command::Translate(a) => translate(a, &settings()?),
        Command::Fit(a) => fit(a),
        Command::Bench { n, workers, out, json } => bench(*n, *workers, out.as_deref(), json),
        Command::Verify { out, corpus, json } => verify(out, corpus.as_deref(), &settings()?.python, json),
        Command::Config { json } => show_config(&settings()?, json),
    }
}
