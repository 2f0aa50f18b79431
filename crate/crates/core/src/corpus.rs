//! The bundled Fortran corpus: sources, funit tests, Python goldens and
//! oracle cases, verified against `checksums.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use walkdir::WalkDir;

pub const CHECKSUM_FILE: &str = "checksums.json";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("checksum mismatch for {file}: expected {expected}, found {actual}")]
    ChecksumMismatch {
        file: String,
        expected: String,
        actual: String,
    },
    #[error("corpus entry `{entry}` is missing {file}")]
    MissingFile { entry: String, file: String },
}

/// Bundled corpus directory inside the source tree.
pub fn default_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCase {
    pub unit: String,
    /// Name of the reference function in [`crate::oracle`].
    pub oracle: String,
    pub args: Vec<f64>,
    /// `None` stands for NaN.
    pub expected: Vec<Option<f64>>,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub entry: String,
    /// Python module holding every golden function, when not one module per unit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub golden_module: Option<String>,
    pub cases: Vec<OracleCase>,
}

/// A deliberate bug applied to a golden translation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub unit: String,
    pub description: String,
    pub remove_line: String,
    pub failing_tests: Vec<String>,
}

impl FaultSpec {
    /// Drop every line equal to `remove_line`.
    pub fn apply(&self, source: &str) -> String {
        source
            .split_inclusive('\n')
            .filter(|line| line.trim_end_matches(['\n', '\r']) != self.remove_line)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusEntry {
    pub name: String,
    pub dir: PathBuf,
    pub fortran_source: PathBuf,
    pub fortran_tests: PathBuf,
    pub golden_dir: PathBuf,
    /// Golden modules, excluding tests.
    pub golden_sources: Vec<PathBuf>,
    pub golden_tests: Vec<PathBuf>,
    pub oracle: OracleSpec,
    pub fault: Option<FaultSpec>,
}

impl CorpusEntry {
    /// Golden `(source, tests)` text for a unit translated one module per unit.
    pub fn golden_for(&self, unit: &str) -> Option<(String, String)> {
        let src = self.golden_dir.join(format!("{unit}.py"));
        let tests = self.golden_dir.join(format!("test_{unit}.py"));
        Some((fs::read_to_string(src).ok()?, fs::read_to_string(tests).ok()?))
    }

    /// The funit module `test_<unit>` from this entry's test file, if present.
    pub fn fortran_tests_for(&self, unit: &str) -> Option<String> {
        let text = fs::read_to_string(&self.fortran_tests).ok()?;
        extract_test_module(&text, unit)
    }
}

/// Cut `module test_<unit>` ... `end module test_<unit>` out of a `.pf` file.
pub fn extract_test_module(text: &str, unit: &str) -> Option<String> {
    let open = format!("module test_{unit}");
    let close = format!("end module test_{unit}");
    let mut out = String::new();
    let mut inside = false;
    for line in text.split_inclusive('\n') {
        let t = line.trim().to_ascii_lowercase();
        if !inside && t == open {
            inside = true;
        }
        if inside {
            out.push_str(line);
            if t == close {
                return Some(out);
            }
        }
    }
    None
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CorpusError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|source| CorpusError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn tracked(entry: &walkdir::DirEntry) -> bool {
    let name = entry.file_name().to_string_lossy();
    name != "__pycache__" && !name.ends_with(".pyc") && name != CHECKSUM_FILE
}

/// sha256 of every corpus file, keyed by `/`-separated relative path.
pub fn compute_checksums(root: &Path) -> Result<BTreeMap<String, String>, CorpusError> {
    let mut out = BTreeMap::new();
    for entry in WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(tracked)
    {
        let entry = entry.map_err(|e| CorpusError::Io {
            path: e.path().unwrap_or(root).to_path_buf(),
            source: e.into(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .unwrap_or(entry.path())
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let bytes = fs::read(entry.path()).map_err(io(entry.path()))?;
        out.insert(rel, sha256_hex(&bytes));
    }
    Ok(out)
}

fn verify_checksums(root: &Path) -> Result<(), CorpusError> {
    let expected: BTreeMap<String, String> = read_json(&root.join(CHECKSUM_FILE))?;
    let actual = compute_checksums(root)?;
    for (file, want) in &expected {
        let got = actual.get(file).map_or("<missing>", String::as_str);
        if got != want {
            return Err(CorpusError::ChecksumMismatch {
                file: file.clone(),
                expected: want.clone(),
                actual: got.to_string(),
            });
        }
    }
    if let Some(extra) = actual.keys().find(|k| !expected.contains_key(*k)) {
        return Err(CorpusError::ChecksumMismatch {
            file: extra.clone(),
            expected: "<unlisted>".into(),
            actual: actual[extra].clone(),
        });
    }
    Ok(())
}

fn required(entry: &str, path: PathBuf) -> Result<PathBuf, CorpusError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CorpusError::MissingFile {
            entry: entry.to_string(),
            file: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
        })
    }
}

/// Enumerate entries (sorted by name) after verifying every checksum.
pub fn load_corpus(root: &Path) -> Result<Vec<CorpusEntry>, CorpusError> {
    verify_checksums(root)?;
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(io(root))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();

    let mut entries = Vec::new();
    for dir in dirs {
        let name = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let golden_dir = dir.join("golden");
        let mut golden_sources = Vec::new();
        let mut golden_tests = Vec::new();
        let mut files: Vec<PathBuf> = fs::read_dir(&golden_dir)
            .map_err(io(&golden_dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "py"))
            .collect();
        files.sort();
        for f in files {
            let stem = f.file_stem().unwrap_or_default().to_string_lossy();
            if stem.starts_with("test_") {
                golden_tests.push(f);
            } else {
                golden_sources.push(f);
            }
        }
        let fault_path = golden_dir.join("fault.json");
        let fault = if fault_path.is_file() {
            Some(read_json(&fault_path)?)
        } else {
            None
        };
        entries.push(CorpusEntry {
            fortran_source: required(&name, dir.join("src.f90"))?,
            fortran_tests: required(&name, dir.join("tests.pf"))?,
            oracle: read_json(&required(&name, dir.join("oracle.json"))?)?,
            name,
            dir,
            golden_dir,
            golden_sources,
            golden_tests,
            fault,
        });
    }
    Ok(entries)
}

pub fn find_entry<'a>(entries: &'a [CorpusEntry], name: &str) -> Option<&'a CorpusEntry> {
    entries.iter().find(|e| e.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_named_test_module() {
        let pf = "module test_a\n  x\nend module test_a\n\nmodule test_b\n  y\nend module test_b\n";
        assert_eq!(
            extract_test_module(pf, "b").unwrap(),
            "module test_b\n  y\nend module test_b\n"
        );
        assert!(extract_test_module(pf, "c").is_none());
    }

    #[test]
    fn fault_removes_exact_line() {
        let f = FaultSpec {
            unit: "u".into(),
            description: String::new(),
            remove_line: "    b = 2".into(),
            failing_tests: vec![],
        };
        assert_eq!(f.apply("a = 1\n    b = 2\nc = 3\n"), "a = 1\nc = 3\n");
    }
}
