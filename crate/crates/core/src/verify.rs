//! Compare translated Python modules against the reference numerics on
//! every corpus oracle case.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::corpus::CorpusEntry;
use crate::oracle::{self, OracleError};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("{0} is not a directory")]
    NotADirectory(PathBuf),
    #[error("no module in {0} matches an oracle case")]
    NothingToVerify(PathBuf),
    #[error("could not run `{python}`: {source}")]
    Spawn {
        python: String,
        #[source]
        source: std::io::Error,
    },
    #[error("evaluator failed: {0}")]
    Evaluator(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

const EVALUATOR: &str = r#"
import importlib, json, math, sys
import numpy as np

req = json.load(sys.stdin)
sys.path.insert(0, req["dir"])
out = []
for case in req["cases"]:
    try:
        fn = getattr(importlib.import_module(case["module"]), case["function"])
        r = fn(*case["args"])
        values = [float(np.asarray(v).reshape(-1)[0]) for v in (r if isinstance(r, tuple) else (r,))]
        out.append({"values": [None if math.isnan(v) else v for v in values]})
    except Exception as e:
        out.append({"error": "%s: %s" % (type(e).__name__, e)})
json.dump(out, sys.stdout)
"#;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub unit: String,
    pub module: String,
    pub args: Vec<f64>,
    /// `None` stands for NaN.
    pub expected: Vec<Option<f64>>,
    pub got: Vec<Option<f64>>,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checked: usize,
    /// Units with at least one case checked.
    pub verified_units: Vec<String>,
    /// Units with oracle cases but no module in the directory.
    pub missing_units: Vec<String>,
    pub mismatches: Vec<Mismatch>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.checked > 0 && self.mismatches.is_empty()
    }
}

#[derive(Deserialize)]
struct Outcome {
    #[serde(default)]
    values: Vec<Option<f64>>,
    #[serde(default)]
    error: Option<String>,
}

fn nan_free(values: &[f64]) -> Vec<Option<f64>> {
    values.iter().map(|v| (!v.is_nan()).then_some(*v)).collect()
}

/// Module that should define `unit` in `dir`: `<unit>.py`, else the entry's
/// shared golden module.
fn module_for(dir: &Path, entry: &CorpusEntry, unit: &str) -> Option<String> {
    if dir.join(format!("{unit}.py")).is_file() {
        return Some(unit.to_string());
    }
    let shared = entry.oracle.golden_module.as_deref()?;
    dir.join(format!("{shared}.py")).is_file().then(|| shared.to_string())
}

/// Run every applicable oracle case against the modules in `dir`.
pub fn verify_dir(dir: &Path, entries: &[CorpusEntry], python: &str) -> Result<VerifyReport, VerifyError> {
    if !dir.is_dir() {
        return Err(VerifyError::NotADirectory(dir.to_path_buf()));
    }
    let mut report = VerifyReport::default();
    let mut cases = Vec::new();
    for entry in entries {
        for case in &entry.oracle.cases {
            match module_for(dir, entry, &case.unit) {
                Some(module) => {
                    let expected = nan_free(&oracle::evaluate(&case.oracle, &case.args)?);
                    cases.push((case, module, expected));
                }
                None if !report.missing_units.contains(&case.unit) => report.missing_units.push(case.unit.clone()),
                None => {}
            }
        }
    }
    if cases.is_empty() {
        return Err(VerifyError::NothingToVerify(dir.to_path_buf()));
    }

    let request = json!({
        "dir": dir.canonicalize().unwrap_or_else(|_| dir.to_path_buf()),
        "cases": cases
            .iter()
            .map(|(c, module, _)| json!({"module": module, "function": c.unit, "args": c.args}))
            .collect::<Vec<_>>(),
    });
    let spawn = |source| VerifyError::Spawn {
        python: python.to_string(),
        source,
    };
    let mut child = Command::new(python)
        .args(["-c", EVALUATOR])
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(spawn)?;
    child
        .stdin
        .take()
        .expect("piped stdin")
        .write_all(request.to_string().as_bytes())
        .map_err(spawn)?;
    let output = child.wait_with_output().map_err(spawn)?;
    if !output.status.success() {
        return Err(VerifyError::Evaluator(String::from_utf8_lossy(&output.stderr).trim().to_string()));
    }
    let outcomes: Vec<Outcome> =
        serde_json::from_slice(&output.stdout).map_err(|e| VerifyError::Evaluator(e.to_string()))?;
    if outcomes.len() != cases.len() {
        return Err(VerifyError::Evaluator(format!("{} results for {} cases", outcomes.len(), cases.len())));
    }

    for ((case, module, expected), outcome) in cases.into_iter().zip(outcomes) {
        report.checked += 1;
        if !report.verified_units.contains(&case.unit) {
            report.verified_units.push(case.unit.clone());
        }
        let got: Vec<f64> = outcome.values.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        if outcome.error.is_some() || !oracle::matches(&expected, &got, case.tolerance) {
            report.mismatches.push(Mismatch {
                unit: case.unit.clone(),
                module,
                args: case.args.clone(),
                expected,
                got: outcome.values,
                tolerance: case.tolerance,
                error: outcome.error,
            });
        }
    }
    Ok(report)
}
