//! Prompt templates for the five pipeline tasks and response parsing.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("missing slot `{0}`")]
    MissingSlot(String),
    #[error("no fenced code block found")]
    NoCodeBlockFound,
    #[error("missing section `{0}`")]
    MissingSection(String),
    #[error("template `{0}` has no `---` separator line")]
    MalformedTemplate(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    GenFortranTests,
    TranslateSource,
    TranslateTests,
    GenTargetTests,
    Repair,
}

impl Task {
    pub const ALL: [Task; 5] = [
        Task::GenFortranTests,
        Task::TranslateSource,
        Task::TranslateTests,
        Task::GenTargetTests,
        Task::Repair,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::GenFortranTests => "gen_fortran_tests",
            Task::TranslateSource => "translate_source",
            Task::TranslateTests => "translate_tests",
            Task::GenTargetTests => "gen_target_tests",
            Task::Repair => "repair",
        }
    }

    /// Slots the caller must supply.
    pub fn required_slots(self) -> &'static [&'static str] {
        match self {
            Task::GenFortranTests | Task::TranslateSource => &["fortran_code"],
            Task::TranslateTests => &["unit_tests"],
            Task::GenTargetTests => &["python_function"],
            Task::Repair => &["python_function", "python_unit_tests", "python_test_results"],
        }
    }

    fn bundled_text(self) -> &'static str {
        match self {
            Task::GenFortranTests => include_str!("../templates/gen_fortran_tests.txt"),
            Task::TranslateSource => include_str!("../templates/translate_source.txt"),
            Task::TranslateTests => include_str!("../templates/translate_tests.txt"),
            Task::GenTargetTests => include_str!("../templates/gen_target_tests.txt"),
            Task::Repair => include_str!("../templates/repair.txt"),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| PromptError::UnknownTask(s.to_string()))
    }
}

/// Default content of the example slots in `gen_fortran_tests`.
pub const EXAMPLE_FORTRAN_CODE: &str = include_str!("../corpus/daylength/src.f90");
pub const EXAMPLE_FORTRAN_TESTS: &str = include_str!("../corpus/daylength/tests.pf");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTask {
    pub task: Task,
    pub system_text: String,
    pub user_template: String,
}

impl PromptTask {
    /// Parse a template file: system text, a `---` line, then the user template.
    pub fn parse(task: Task, text: &str) -> Result<Self, PromptError> {
        let text = text.strip_suffix('\n').unwrap_or(text);
        let (system, user) = text
            .split_once("\n---\n")
            .ok_or_else(|| PromptError::MalformedTemplate(task.to_string()))?;
        Ok(Self {
            task,
            system_text: system.to_string(),
            user_template: user.to_string(),
        })
    }

    pub fn bundled(task: Task) -> Self {
        Self::parse(task, task.bundled_text()).expect("bundled templates are well formed")
    }

    /// Substitute `{slot}` placeholders in one pass; substituted text is
    /// never rescanned.
    pub fn render(&self, slots: &BTreeMap<String, String>) -> Result<(String, String), PromptError> {
        for &name in self.task.required_slots() {
            if slots.get(name).is_none_or(|v| v.is_empty()) {
                return Err(PromptError::MissingSlot(name.to_string()));
            }
        }
        let lookup = |name: &str| -> Option<&str> {
            match name {
                // translate_source also accepts `{python_code}` for its Fortran input
                "python_code" if self.task == Task::TranslateSource => {
                    slots.get("fortran_code").map(String::as_str)
                }
                "example_fortran_code" => Some(
                    slots
                        .get(name)
                        .map_or(EXAMPLE_FORTRAN_CODE.trim_end(), String::as_str),
                ),
                "example_fortran_tests" => Some(
                    slots
                        .get(name)
                        .map_or(EXAMPLE_FORTRAN_TESTS.trim_end(), String::as_str),
                ),
                _ => slots.get(name).map(String::as_str),
            }
        };

        let template = &self.user_template;
        let mut out = String::with_capacity(template.len());
        let mut rest = template.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let close = after.find('}');
            let name = close.map(|c| &after[..c]);
            match name.filter(|n| is_slot_name(n)) {
                Some(n) => {
                    let value = lookup(n).ok_or_else(|| PromptError::MissingSlot(n.to_string()))?;
                    out.push_str(value);
                    rest = &after[n.len() + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok((self.system_text.clone(), out))
    }
}

fn is_slot_name(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b == b'_')
}

/// Render a bundled template.
pub fn render(task: Task, slots: &BTreeMap<String, String>) -> Result<(String, String), PromptError> {
    PromptTask::bundled(task).render(slots)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub source_code: Option<String>,
    pub unit_tests: Option<String>,
    pub raw: String,
}

const FENCE: &str = "```";

/// A fenced block: payload and the byte offset just past the closing fence.
fn next_block(text: &str, from: usize) -> Option<(String, usize)> {
    let open = text[from..].find(FENCE)? + from + FENCE.len();
    let close = text[open..].find(FENCE)? + open;
    Some((clean_block(&text[open..close]), close + FENCE.len()))
}

fn clean_block(content: &str) -> String {
    let body = if let Some(b) = content.strip_prefix('\n') {
        b
    } else if let Some(b) = content.strip_prefix("\r\n") {
        b
    } else {
        match content.split_once('\n') {
            Some((tag, b)) if is_fence_tag(tag.trim_end_matches('\r')) => b,
            _ => content,
        }
    };
    let body = body.strip_suffix('\n').unwrap_or(body);
    body.strip_suffix('\r').unwrap_or(body).to_string()
}

fn is_fence_tag(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'+' | b'-' | b'.'))
}

fn all_blocks(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut at = 0;
    while let Some((block, end)) = next_block(text, at) {
        out.push(block);
        at = end;
    }
    out
}

/// The longest fenced block; the first wins on ties.
pub fn longest_block(text: &str) -> Option<String> {
    all_blocks(text)
        .into_iter()
        .rev()
        .max_by_key(|b| b.len())
}

fn labeled_block(text: &str, label: &str, from: usize) -> Result<(String, usize), PromptError> {
    let at = text[from..]
        .find(label)
        .ok_or_else(|| PromptError::MissingSection(label.trim_end_matches(':').to_string()))?
        + from
        + label.len();
    next_block(text, at).ok_or(PromptError::NoCodeBlockFound)
}

pub fn parse_response(task: Task, text: &str) -> Result<ParsedResponse, PromptError> {
    let mut parsed = ParsedResponse {
        raw: text.to_string(),
        ..Default::default()
    };
    match task {
        Task::Repair => {
            let (source, end) = labeled_block(text, "SOURCE CODE:", 0)?;
            let (tests, _) = labeled_block(text, "UNIT TESTS:", end)?;
            parsed.source_code = Some(source);
            parsed.unit_tests = Some(tests);
        }
        Task::TranslateSource => {
            parsed.source_code = Some(longest_block(text).ok_or(PromptError::NoCodeBlockFound)?);
        }
        Task::GenFortranTests | Task::TranslateTests | Task::GenTargetTests => {
            parsed.unit_tests = Some(longest_block(text).ok_or(PromptError::NoCodeBlockFound)?);
        }
    }
    Ok(parsed)
}

/// A well-formed response carrying `source` and/or `tests`.
pub fn format_response(task: Task, source: &str, tests: &str) -> String {
    match task {
        Task::Repair => format!("SOURCE CODE: ```python\n{source}\n```\nUNIT TESTS: ```python\n{tests}\n```\n"),
        Task::TranslateSource => format!("```python\n{source}\n```\n"),
        Task::GenFortranTests => format!("```fortran\n{tests}\n```\n"),
        Task::TranslateTests | Task::GenTargetTests => format!("```python\n{tests}\n```\n"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slots(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn translate_source_wraps_code_in_fence() {
        let (system, user) = render(Task::TranslateSource, &slots(&[("fortran_code", "x")])).unwrap();
        assert_eq!(system, "You're a programmer proficient in Fortran and Python.");
        assert_eq!(user, "Convert the following Fortran function to Python. ```x```");
    }

    #[test]
    fn missing_and_empty_slots_are_errors() {
        for task in Task::ALL {
            assert!(matches!(render(task, &BTreeMap::new()), Err(PromptError::MissingSlot(_))));
        }
        assert_eq!(
            render(Task::TranslateTests, &slots(&[("unit_tests", "")])),
            Err(PromptError::MissingSlot("unit_tests".into()))
        );
    }

    #[test]
    fn substituted_text_is_not_rescanned() {
        let (_, user) = render(Task::GenTargetTests, &slots(&[("python_function", "{unit_tests} {x")])).unwrap();
        assert!(user.contains("```{unit_tests} {x```"));
    }

    #[test]
    fn example_slots_default_to_daylength() {
        let (_, user) = render(Task::GenFortranTests, &slots(&[("fortran_code", "CODE")])).unwrap();
        assert!(user.contains("FORTRAN CODE: elemental real(r8) function daylength(lat, decl)\n"));
        assert!(user.contains("module test_daylength"));
        assert!(user.ends_with("FORTRAN CODE: CODE\nFORTRAN TESTS:"));
    }

    #[test]
    fn repair_ends_with_response_shape() {
        let s = slots(&[
            ("python_function", "f"),
            ("python_unit_tests", "t"),
            ("python_test_results", "r"),
        ]);
        let (system, user) = render(Task::Repair, &s).unwrap();
        assert!(system.contains("SOURCE CODE: ```<python source code>```"));
        assert!(user.contains("Output from `pytest`:\n``` r ```"));
        assert!(user.ends_with(
            "SOURCE CODE: ```<python source code>```\nUNIT TESTS: ```<python unit tests>```"
        ));
    }

    #[test]
    fn parse_single_block_with_prose_and_tag() {
        let p = parse_response(Task::TranslateSource, "here you go\n```python\nA\n```").unwrap();
        assert_eq!(p.source_code.as_deref(), Some("A"));
        assert_eq!(p.unit_tests, None);
    }

    #[test]
    fn longest_block_wins() {
        let text = "```\nshort\n```\nthen\n```py\nthe real code\n```\n```\nx\n```";
        assert_eq!(
            parse_response(Task::GenTargetTests, text).unwrap().unit_tests.as_deref(),
            Some("the real code")
        );
    }

    #[test]
    fn inline_fence_keeps_content() {
        assert_eq!(longest_block("```code goes here```").as_deref(), Some("code goes here"));
    }

    #[test]
    fn no_block_is_an_error() {
        assert_eq!(
            parse_response(Task::TranslateTests, "sorry"),
            Err(PromptError::NoCodeBlockFound)
        );
        assert_eq!(
            parse_response(Task::TranslateTests, "```unterminated"),
            Err(PromptError::NoCodeBlockFound)
        );
    }

    #[test]
    fn repair_requires_both_sections() {
        let ok = "Sure.\nSOURCE CODE: ```python\ndef f():\n    return 1\n```\nUNIT TESTS: ```python\ndef test_f():\n    assert f() == 1\n```";
        let p = parse_response(Task::Repair, ok).unwrap();
        assert_eq!(p.source_code.as_deref(), Some("def f():\n    return 1"));
        assert_eq!(p.unit_tests.as_deref(), Some("def test_f():\n    assert f() == 1"));

        let missing = "SOURCE CODE: ```python\nx\n```\n```python\ny\n```";
        assert_eq!(
            parse_response(Task::Repair, missing),
            Err(PromptError::MissingSection("UNIT TESTS".into()))
        );
        assert_eq!(
            parse_response(Task::Repair, "UNIT TESTS: ```x```"),
            Err(PromptError::MissingSection("SOURCE CODE".into()))
        );
    }

    #[test]
    fn task_names_round_trip() {
        for task in Task::ALL {
            assert_eq!(task.as_str().parse::<Task>().unwrap(), task);
        }
        assert!("nope".parse::<Task>().is_err());
    }
}
