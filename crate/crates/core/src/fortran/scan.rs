//! Chunk a file into testable units by tracking block openers and `end`s.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::lexer::{self, skip_type_spec, Statement, Token};
use super::trace::{trace_references, KnownNames};
use super::FortranError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Function,
    Subroutine,
    DerivedType,
    ModuleVariableBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Elemental,
    Pure,
    Recursive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineSpan {
    pub start: usize,
    pub end: usize,
}

/// One testable chunk of Fortran.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceUnit {
    /// `path::name`
    pub id: String,
    /// Canonical lowercase name.
    pub name: String,
    pub kind: UnitKind,
    pub file: String,
    pub line_span: LineSpan,
    /// Verbatim slice of the file covering `line_span`.
    pub text: String,
    /// Comment block immediately above the header.
    pub doc: String,
    pub attributes: BTreeSet<Attribute>,
    /// Names of other known units this unit mentions, in first-occurrence order.
    pub references: Vec<String>,
    /// Subset of `references` that name derived types used in declarations.
    #[serde(default)]
    pub type_uses: Vec<String>,
}

impl SourceUnit {
    pub fn make_id(file: &str, name: &str) -> String {
        format!("{file}::{name}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BlockKind {
    Module,
    Program,
    Function,
    Subroutine,
    Type,
    Interface,
    // procedure headers inside an interface body
    InterfaceProc,
}

#[derive(Debug)]
struct Block {
    kind: BlockKind,
    name: String,
    header_line: usize,
    attributes: BTreeSet<Attribute>,
    /// First line of the `contains` statement, if any.
    contains_line: Option<usize>,
    /// Start line of the first nested unit (modules only).
    first_nested: Option<usize>,
    /// Whether the module specification part has real declarations.
    has_declarations: bool,
}

impl Block {
    fn new(kind: BlockKind, name: String, header_line: usize) -> Self {
        Self {
            kind,
            name,
            header_line,
            attributes: BTreeSet::new(),
            contains_line: None,
            first_nested: None,
            has_declarations: false,
        }
    }
}

struct Raw {
    name: String,
    kind: UnitKind,
    start: usize,
    end: usize,
    attributes: BTreeSet<Attribute>,
}

struct ProcHeader {
    kind: BlockKind,
    name: String,
    attributes: BTreeSet<Attribute>,
}

fn parse_proc_header(tokens: &[Token]) -> Option<ProcHeader> {
    let mut attributes = BTreeSet::new();
    let mut i = 0;
    loop {
        let word = tokens.get(i)?.ident()?;
        match word {
            "elemental" => {
                attributes.insert(Attribute::Elemental);
                i += 1;
            }
            "pure" => {
                attributes.insert(Attribute::Pure);
                i += 1;
            }
            "recursive" => {
                attributes.insert(Attribute::Recursive);
                i += 1;
            }
            "impure" | "non_recursive" | "module" => i += 1,
            "function" | "subroutine" => {
                let name = tokens.get(i + 1)?.ident()?.to_string();
                let next = tokens.get(i + 2);
                if next.is_some_and(|t| !t.is_op("(") && !t.is_ident("result") && !t.is_ident("bind")) {
                    return None;
                }
                let kind = if word == "function" {
                    BlockKind::Function
                } else {
                    BlockKind::Subroutine
                };
                return Some(ProcHeader {
                    kind,
                    name,
                    attributes,
                });
            }
            _ => {
                i = skip_type_spec(tokens, i)?;
            }
        }
    }
}

/// `type name`, `type :: name`, `type, public :: name`; not `type(x) :: v`
/// and not `type is (...)` inside `select type`.
fn parse_type_header(tokens: &[Token]) -> Option<String> {
    if !tokens.first()?.is_ident("type") {
        return None;
    }
    match tokens.get(1)? {
        Token::Ident(name) => {
            if (name == "is") && tokens.get(2).is_some_and(|t| t.is_op("(")) {
                return None;
            }
            Some(name.clone())
        }
        Token::Op("::") => tokens.get(2)?.ident().map(str::to_owned),
        Token::Op(",") => {
            let sep = tokens.iter().position(|t| t.is_op("::"))?;
            tokens.get(sep + 1)?.ident().map(str::to_owned)
        }
        _ => None,
    }
}

enum EndTarget {
    /// `end`, `end function`, ... closes the innermost unit-level block.
    Block(Option<&'static str>),
    /// `end if`, `end do`, ... belongs to executable constructs.
    Construct,
}

fn parse_end(tokens: &[Token]) -> Option<EndTarget> {
    let first = tokens.first()?.ident()?;
    let keyword = if first == "end" {
        tokens.get(1).and_then(Token::ident)
    } else if let Some(k) = first.strip_prefix("end") {
        Some(k)
    } else {
        return None;
    };
    match keyword {
        None => Some(EndTarget::Block(None)),
        Some(k) => {
            let block = match k {
                "function" => "function",
                "subroutine" => "subroutine",
                "module" => "module",
                "submodule" => "module",
                "program" => "program",
                "type" => "type",
                "interface" => "interface",
                "procedure" => "procedure",
                "if" | "do" | "select" | "where" | "forall" | "associate" | "block" | "critical"
                | "enum" | "team" => return Some(EndTarget::Construct),
                // `end = 3` style assignments to a variable named end*
                _ => return None,
            };
            if tokens.len() > 1 && tokens[1].is_op("=") {
                return None;
            }
            Some(EndTarget::Block(Some(block)))
        }
    }
}

fn end_matches(kind: BlockKind, target: Option<&str>) -> bool {
    let Some(t) = target else { return true };
    matches!(
        (kind, t),
        (BlockKind::Module, "module")
            | (BlockKind::Program, "program")
            | (BlockKind::Function | BlockKind::InterfaceProc, "function")
            | (BlockKind::Subroutine | BlockKind::InterfaceProc, "subroutine")
            | (BlockKind::Function | BlockKind::Subroutine | BlockKind::InterfaceProc, "procedure")
            | (BlockKind::Type, "type")
            | (BlockKind::Interface, "interface")
    )
}

fn is_spec_only_statement(tokens: &[Token]) -> bool {
    matches!(
        tokens.first().and_then(Token::ident),
        Some("use" | "implicit" | "private" | "public" | "save" | "include" | "import" | "protected")
    )
}

/// Leading comment lines directly above `header_line` (1-based).
fn doc_block(lines: &[&str], header_line: usize) -> String {
    let mut start = header_line - 1;
    while start > 0 {
        let prev = lines[start - 1].trim();
        if prev.starts_with('!') {
            start -= 1;
        } else {
            break;
        }
    }
    lines[start..header_line - 1]
        .iter()
        .map(|l| l.trim())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Scan one file. `path` is recorded as given; `bytes` must be UTF-8
/// free-form Fortran.
pub fn scan_file(path: &str, bytes: &[u8]) -> Result<Vec<SourceUnit>, FortranError> {
    let text = std::str::from_utf8(bytes).map_err(|e| FortranError::NonUtf8 {
        file: path.to_string(),
        offset: e.valid_up_to(),
    })?;
    lexer::check_free_form(text)?;
    let stmts = lexer::statements(text);
    let raws = chunk(&stmts)?;

    let ranges = lexer::line_ranges(text);
    let lines: Vec<&str> = ranges
        .iter()
        .map(|r| text[r.clone()].trim_end_matches(['\n', '\r']))
        .collect();

    let mut units: Vec<SourceUnit> = raws
        .into_iter()
        .map(|raw| {
            let byte_start = ranges[raw.start - 1].start;
            let byte_end = ranges[raw.end - 1].end;
            SourceUnit {
                id: SourceUnit::make_id(path, &raw.name),
                name: raw.name,
                kind: raw.kind,
                file: path.to_string(),
                line_span: LineSpan {
                    start: raw.start,
                    end: raw.end,
                },
                text: text[byte_start..byte_end].to_string(),
                doc: doc_block(&lines, raw.start),
                attributes: raw.attributes,
                references: Vec::new(),
                type_uses: Vec::new(),
            }
        })
        .collect();
    units.sort_by_key(|u| u.line_span.start);

    let known = KnownNames::from_units(&units);
    for unit in &mut units {
        let traced = trace_references(unit, &known);
        unit.references = traced.names;
        unit.type_uses = traced.type_uses;
    }
    Ok(units)
}

fn chunk(stmts: &[Statement]) -> Result<Vec<Raw>, FortranError> {
    let mut stack: Vec<Block> = Vec::new();
    let mut out = Vec::new();

    for stmt in stmts {
        let tokens = &stmt.tokens;
        let in_interface = stack
            .iter()
            .any(|b| matches!(b.kind, BlockKind::Interface));

        if let Some(end) = parse_end(tokens) {
            let EndTarget::Block(target) = end else { continue };
            let Some(block) = stack.pop() else {
                return Err(FortranError::UnbalancedBlock {
                    line: stmt.first_line,
                    detail: "`end` without an opening block".into(),
                });
            };
            if !end_matches(block.kind, target) {
                return Err(FortranError::UnbalancedBlock {
                    line: stmt.first_line,
                    detail: format!(
                        "`end {}` closes `{}` opened at line {}",
                        target.unwrap_or(""),
                        block.name,
                        block.header_line
                    ),
                });
            }
            close_block(block, stmt.last_line, &mut out);
            continue;
        }

        if in_interface {
            if let Some(h) = parse_proc_header(tokens) {
                stack.push(Block::new(BlockKind::InterfaceProc, h.name, stmt.first_line));
            } else if tokens.first().is_some_and(|t| t.is_ident("interface"))
                || (tokens.first().is_some_and(|t| t.is_ident("abstract"))
                    && tokens.get(1).is_some_and(|t| t.is_ident("interface")))
            {
                stack.push(Block::new(BlockKind::Interface, String::new(), stmt.first_line));
            }
            continue;
        }

        let first = tokens.first().and_then(Token::ident);

        if first == Some("contains") && tokens.len() == 1 {
            if let Some(top) = stack.last_mut() {
                top.contains_line.get_or_insert(stmt.first_line);
            }
            continue;
        }

        if first == Some("interface")
            || (first == Some("abstract") && tokens.get(1).is_some_and(|t| t.is_ident("interface")))
        {
            note_module_declaration(&mut stack);
            stack.push(Block::new(BlockKind::Interface, String::new(), stmt.first_line));
            continue;
        }

        if first == Some("module")
            && tokens.len() >= 2
            && !tokens[1].is_ident("procedure")
            && !tokens[1].is_ident("function")
            && !tokens[1].is_ident("subroutine")
        {
            if let Some(name) = tokens[1].ident() {
                stack.push(Block::new(BlockKind::Module, name.to_string(), stmt.first_line));
                continue;
            }
        }
        if first == Some("submodule") {
            if let Some(name) = tokens.iter().skip(1).skip_while(|t| !t.is_op(")")).nth(1).and_then(Token::ident) {
                stack.push(Block::new(BlockKind::Module, name.to_string(), stmt.first_line));
                continue;
            }
        }
        if first == Some("program") {
            let name = tokens.get(1).and_then(Token::ident).unwrap_or("main").to_string();
            stack.push(Block::new(BlockKind::Program, name, stmt.first_line));
            continue;
        }
        if first == Some("module")
            && tokens.get(1).is_some_and(|t| t.is_ident("procedure"))
            && stack.last().is_some_and(|b| b.contains_line.is_some())
        {
            if let Some(name) = tokens.get(2).and_then(Token::ident) {
                mark_nested(&mut stack, stmt.first_line);
                stack.push(Block::new(BlockKind::Subroutine, name.to_string(), stmt.first_line));
                continue;
            }
        }
        if let Some(h) = parse_proc_header(tokens) {
            mark_nested(&mut stack, stmt.first_line);
            let mut block = Block::new(h.kind, h.name, stmt.first_line);
            block.attributes = h.attributes;
            stack.push(block);
            continue;
        }
        if let Some(name) = parse_type_header(tokens) {
            let inside_type = stack.last().is_some_and(|b| b.kind == BlockKind::Type);
            if !inside_type {
                mark_nested(&mut stack, stmt.first_line);
                stack.push(Block::new(BlockKind::Type, name, stmt.first_line));
                continue;
            }
        }

        if !is_spec_only_statement(tokens) {
            note_module_declaration(&mut stack);
        }
    }

    if let Some(open) = stack.last() {
        return Err(FortranError::UnbalancedBlock {
            line: open.header_line,
            detail: format!("`{}` is never closed before end of file", open.name),
        });
    }
    Ok(out)
}

/// Record the start of a nested unit on the enclosing module.
fn mark_nested(stack: &mut [Block], line: usize) {
    if let Some(top) = stack.last_mut() {
        if top.kind == BlockKind::Module {
            top.first_nested.get_or_insert(line);
        }
    }
}

fn note_module_declaration(stack: &mut [Block]) {
    if let Some(top) = stack.last_mut() {
        if top.kind == BlockKind::Module && top.contains_line.is_none() && top.first_nested.is_none() {
            top.has_declarations = true;
        }
    }
}

fn close_block(block: Block, end_line: usize, out: &mut Vec<Raw>) {
    let unit_kind = match block.kind {
        BlockKind::Function => Some(UnitKind::Function),
        BlockKind::Subroutine => Some(UnitKind::Subroutine),
        BlockKind::Type => Some(UnitKind::DerivedType),
        BlockKind::Module => {
            if block.has_declarations {
                let stop = [block.contains_line, block.first_nested]
                    .into_iter()
                    .flatten()
                    .min()
                    .map_or(end_line, |l| l - 1);
                out.push(Raw {
                    name: block.name.clone(),
                    kind: UnitKind::ModuleVariableBlock,
                    start: block.header_line,
                    end: stop,
                    attributes: BTreeSet::new(),
                });
            }
            None
        }
        BlockKind::Program | BlockKind::Interface | BlockKind::InterfaceProc => None,
    };
    let Some(kind) = unit_kind else { return };
    // a container's text stops before `contains`; contained units follow
    let end = block.contains_line.map_or(end_line, |l| l - 1);
    out.push(Raw {
        name: block.name,
        kind,
        start: block.header_line,
        end,
        attributes: block.attributes,
    });
}
