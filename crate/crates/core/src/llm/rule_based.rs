use std::collections::BTreeMap;
use std::fs;

use super::{Backend, ChatRequest, LlmError, ProviderConfig};
use crate::corpus::{self, extract_test_module, FaultSpec};
use crate::fortran::{scan_sources, UnitKind};
use crate::prompt::{format_response, longest_block, PromptTask, Task};
use crate::transpile::{fortran_to_python, funit_to_pytest, smoke_funit};

/// Deterministic offline provider: corpus goldens where they exist, the
/// transpiler otherwise, and optional fault injection for the first
/// translation of a unit.
#[derive(Debug, Default)]
pub struct RuleBased {
    /// unit -> (source, tests)
    goldens: BTreeMap<String, (String, String)>,
    /// unit -> funit module text
    fortran_tests: BTreeMap<String, String>,
    faults: BTreeMap<String, FaultSpec>,
    inject_faults: bool,
}

fn prefix(task: Task) -> String {
    let template = PromptTask::bundled(task).user_template;
    template.split('{').next().unwrap_or_default().to_string()
}

fn detect(user: &str) -> Option<Task> {
    Task::ALL.into_iter().find(|&t| user.starts_with(&prefix(t)))
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let to = text[from..].find(end)? + from;
    Some(&text[from..to])
}

fn def_names(python: &str) -> impl Iterator<Item = &str> {
    python.lines().filter_map(|l| {
        let rest = l.strip_prefix("def ")?;
        Some(rest.split('(').next()?.trim())
    })
}

fn refuse(reason: impl std::fmt::Display) -> String {
    format!("I could not produce code for this request: {reason}")
}

impl RuleBased {
    pub fn from_config(config: &ProviderConfig) -> Result<Self, LlmError> {
        let root = config.corpus_root.clone().unwrap_or_else(corpus::default_root);
        let mut this = Self {
            inject_faults: config.inject_faults,
            ..Default::default()
        };
        for entry in corpus::load_corpus(&root)? {
            for src in &entry.golden_sources {
                let unit = src.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                if let Some(pair) = entry.golden_for(&unit) {
                    this.goldens.insert(unit, pair);
                }
            }
            let pf = fs::read_to_string(&entry.fortran_tests).map_err(|source| LlmError::Io {
                path: entry.fortran_tests.clone(),
                source,
            })?;
            let code = fs::read(&entry.fortran_source).map_err(|source| LlmError::Io {
                path: entry.fortran_source.clone(),
                source,
            })?;
            let units = scan_sources(&[("src.f90".into(), code)]).unwrap_or_default();
            for unit in units {
                if let Some(module) = extract_test_module(&pf, &unit.name) {
                    this.fortran_tests.insert(unit.name, module);
                }
            }
            if let Some(fault) = entry.fault {
                this.faults.insert(fault.unit.clone(), fault);
            }
        }
        Ok(this)
    }

    fn gen_fortran_tests(&self, user: &str) -> String {
        let code = user
            .rsplit_once("FORTRAN CODE: ")
            .map(|(_, c)| c.strip_suffix("\nFORTRAN TESTS:").unwrap_or(c))
            .unwrap_or_default();
        let units = match scan_sources(&[("unit.f90".into(), code.as_bytes().to_vec())]) {
            Ok(u) => u,
            Err(e) => return refuse(e),
        };
        let mut known = String::new();
        for unit in units.iter().filter(|u| matches!(u.kind, UnitKind::Function | UnitKind::Subroutine)) {
            match self.fortran_tests.get(&unit.name) {
                Some(m) => known.push_str(m),
                None => match smoke_funit(&unit.text) {
                    Ok(m) => known.push_str(&m),
                    Err(e) => return refuse(e),
                },
            }
        }
        if known.is_empty() {
            return refuse("no procedures to test");
        }
        format_response(Task::GenFortranTests, "", known.trim_end())
    }

    fn translate_source(&self, user: &str) -> String {
        let Some(code) = longest_block(user) else {
            return refuse("no code block in the request");
        };
        let units = match scan_sources(&[("unit.f90".into(), code.as_bytes().to_vec())]) {
            Ok(u) => u,
            Err(e) => return refuse(e),
        };
        if let [unit] = units.as_slice() {
            if let Some((golden, _)) = self.goldens.get(&unit.name) {
                let source = match self.faults.get(&unit.name) {
                    Some(f) if self.inject_faults => f.apply(golden),
                    _ => golden.clone(),
                };
                return format_response(Task::TranslateSource, source.trim_end(), "");
            }
        }
        match fortran_to_python(&code) {
            Ok(py) => format_response(Task::TranslateSource, py.trim_end(), ""),
            Err(e) => refuse(e),
        }
    }

    fn translate_tests(&self, user: &str) -> String {
        let Some(pf) = longest_block(user) else {
            return refuse("no code block in the request");
        };
        let modules: Vec<&str> = pf
            .lines()
            .filter_map(|l| l.trim().to_ascii_lowercase().strip_prefix("module test_").map(|_| l.trim()))
            .collect();
        if let [m] = modules.as_slice() {
            let unit = m["module test_".len()..].trim().to_ascii_lowercase();
            if let Some((_, tests)) = self.goldens.get(&unit) {
                return format_response(Task::TranslateTests, "", tests.trim_end());
            }
        }
        match funit_to_pytest(&pf) {
            Ok(py) => format_response(Task::TranslateTests, "", py.trim_end()),
            Err(e) => refuse(e),
        }
    }

    fn gen_target_tests(&self, user: &str) -> String {
        let Some(py) = longest_block(user) else {
            return refuse("no code block in the request");
        };
        let names: Vec<&str> = def_names(&py).collect();
        if let Some((_, tests)) = names.iter().find_map(|n| self.goldens.get(*n)) {
            return format_response(Task::GenTargetTests, "", tests.trim_end());
        }
        if names.is_empty() {
            return refuse("no function definitions found");
        }
        let tests: Vec<String> = names
            .iter()
            .map(|n| format!("def test_{n}_is_callable():\n    assert callable({n})\n"))
            .collect();
        format_response(Task::GenTargetTests, "", tests.join("\n\n").trim_end())
    }

    fn repair(&self, user: &str) -> String {
        let source = between(user, "Function being tested:\n", "\nHere are some unit tests for the above code");
        let tests = between(user, "Unit tests: ", "\nOutput from `pytest`:");
        let (Some(source), Some(tests)) = (source, tests) else {
            return refuse("could not find the function and its tests");
        };
        if let Some((golden, golden_tests)) = def_names(source).find_map(|n| self.goldens.get(n)) {
            return format_response(Task::Repair, golden.trim_end(), golden_tests.trim_end());
        }
        format_response(Task::Repair, source, tests)
    }
}

impl Backend for RuleBased {
    fn respond(&self, request: &ChatRequest, _digest: &str) -> Result<String, LlmError> {
        let user = &request.messages[1].content;
        Ok(match detect(user) {
            Some(Task::GenFortranTests) => self.gen_fortran_tests(user),
            Some(Task::TranslateSource) => self.translate_source(user),
            Some(Task::TranslateTests) => self.translate_tests(user),
            Some(Task::GenTargetTests) => self.gen_target_tests(user),
            Some(Task::Repair) => self.repair(user),
            None => refuse("unrecognized request"),
        })
    }
}
