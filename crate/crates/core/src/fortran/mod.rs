//! Free-form Fortran units: lexing, chunking, reference tracing and the
//! units manifest.

pub mod lexer;
mod scan;
mod trace;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

pub use scan::{scan_file, Attribute, LineSpan, SourceUnit, UnitKind};
pub use trace::{declared_entities, trace_references, KnownNames, Traced};

#[derive(Debug, Error)]
pub enum FortranError {
    #[error("line {line}: fixed-form source is not supported")]
    FixedForm { line: usize },
    #[error("line {line}: unbalanced block: {detail}")]
    UnbalancedBlock { line: usize, detail: String },
    #[error("{file}: not valid UTF-8 at byte {offset}")]
    NonUtf8 { file: String, offset: usize },
    #[error("{file}: {source}")]
    InFile {
        file: String,
        #[source]
        source: Box<FortranError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEstimate<'a> {
    pub unit_id: &'a str,
    pub approx_tokens: usize,
}

/// `ceil(chars / 4)`.
pub fn approx_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

pub fn estimate_tokens(unit: &SourceUnit) -> TokenEstimate<'_> {
    TokenEstimate {
        unit_id: &unit.id,
        approx_tokens: approx_tokens(&unit.text),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScanOptions {
    /// Case-sensitive file extensions, without the dot.
    pub extensions: Vec<String>,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            extensions: vec!["f90".into(), "F90".into(), "f95".into()],
        }
    }
}

fn collect_files(root: &Path, options: &ScanOptions) -> Result<Vec<PathBuf>, FortranError> {
    let mut out = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| FortranError::Io {
            path: e.path().unwrap_or(root).to_path_buf(),
            source: e.into(),
        })?;
        let matches = entry.file_type().is_file()
            && entry
                .path()
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| options.extensions.iter().any(|x| x == e));
        if matches {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Scan a single file or every matching file under a directory. References
/// are traced against the union of all unit names found.
pub fn scan_tree(root: &Path, options: &ScanOptions) -> Result<Vec<SourceUnit>, FortranError> {
    let (base, files) = if root.is_file() {
        (
            root.parent().unwrap_or(Path::new("")).to_path_buf(),
            vec![root.to_path_buf()],
        )
    } else {
        (root.to_path_buf(), collect_files(root, options)?)
    };
    let mut sources = Vec::with_capacity(files.len());
    for path in files {
        let bytes = fs::read(&path).map_err(|source| FortranError::Io {
            path: path.clone(),
            source,
        })?;
        sources.push((relative(&base, &path), bytes));
    }
    scan_sources(&sources)
}

/// Scan in-memory `(relative path, bytes)` pairs as one codebase.
pub fn scan_sources(sources: &[(String, Vec<u8>)]) -> Result<Vec<SourceUnit>, FortranError> {
    let mut units = Vec::new();
    for (path, bytes) in sources {
        let found = scan_file(path, bytes).map_err(|e| match e {
            FortranError::NonUtf8 { .. } => e,
            other => FortranError::InFile {
                file: path.clone(),
                source: Box::new(other),
            },
        })?;
        units.extend(found);
    }
    let known = KnownNames::from_units(&units);
    for unit in &mut units {
        let traced = trace_references(unit, &known);
        unit.references = traced.names;
        unit.type_uses = traced.type_uses;
    }
    Ok(units)
}

/// One entry of the units manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub name: String,
    pub kind: UnitKind,
    pub file: String,
    pub start_line: usize,
    pub end_line: usize,
    pub attributes: Vec<Attribute>,
    pub references: Vec<String>,
    /// References that name a derived type (`kind="type_use"` edges).
    pub type_uses: Vec<String>,
    pub approx_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl ManifestEntry {
    pub fn from_unit(unit: &SourceUnit, inline_text: bool) -> Self {
        Self {
            id: unit.id.clone(),
            name: unit.name.clone(),
            kind: unit.kind,
            file: unit.file.clone(),
            start_line: unit.line_span.start,
            end_line: unit.line_span.end,
            attributes: unit.attributes.iter().copied().collect(),
            references: unit.references.clone(),
            type_uses: unit.type_uses.clone(),
            approx_tokens: approx_tokens(&unit.text),
            text: inline_text.then(|| unit.text.clone()),
        }
    }
}

pub fn units_manifest(units: &[SourceUnit], inline_text: bool) -> Vec<ManifestEntry> {
    units
        .iter()
        .map(|u| ManifestEntry::from_unit(u, inline_text))
        .collect()
}
