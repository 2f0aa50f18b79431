//! A small Fortran to Python translator for the offline provider.
//!
//! Covers scalar functions and subroutines built from assignments,
//! parameters, block and one-line `if`, counted and `while` loops, `exit`,
//! `cycle`, `return`, `call` and common intrinsics, plus pFUnit test modules
//! using `@assertEqual`, `@assertTrue` and friends. Anything else is
//! reported as unsupported rather than guessed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::fortran::lexer::{self, skip_parens, skip_type_spec, Statement, Token};
use crate::fortran::{scan_sources, FortranError, SourceUnit, UnitKind};

#[derive(Debug, Error)]
pub enum TranspileError {
    #[error(transparent)]
    Fortran(#[from] FortranError),
    #[error("no translatable unit found")]
    NoUnit,
    #[error("line {line}: unsupported construct: {detail}")]
    Unsupported { line: usize, detail: String },
}

type Result<T> = std::result::Result<T, TranspileError>;

fn unsupported(line: usize, detail: impl Into<String>) -> TranspileError {
    TranspileError::Unsupported {
        line,
        detail: detail.into(),
    }
}

const INTRINSICS: &[(&str, &str)] = &[
    ("abs", "np.abs"),
    ("acos", "np.arccos"),
    ("asin", "np.arcsin"),
    ("atan", "np.arctan"),
    ("atan2", "np.arctan2"),
    ("cos", "np.cos"),
    ("cosh", "np.cosh"),
    ("dble", "np.float64"),
    ("exp", "np.exp"),
    ("floor", "np.floor"),
    ("log", "np.log"),
    ("log10", "np.log10"),
    ("max", "np.maximum"),
    ("min", "np.minimum"),
    ("mod", "np.fmod"),
    ("nint", "np.rint"),
    ("sign", "np.copysign"),
    ("sin", "np.sin"),
    ("sinh", "np.sinh"),
    ("sqrt", "np.sqrt"),
    ("sum", "np.sum"),
    ("tan", "np.tan"),
    ("tanh", "np.tanh"),
];

fn py_number(n: &str) -> String {
    let n = n.split('_').next().unwrap_or(n).to_ascii_lowercase().replace('d', "e");
    if n.ends_with('.') {
        format!("{n}0")
    } else {
        n
    }
}

fn is_operand_end(piece: &str) -> bool {
    piece
        .chars()
        .last()
        .is_some_and(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | ')' | ']' | '\'' | '"' | '.'))
}

/// Python text for a Fortran expression.
fn expr(tokens: &[Token], line: usize) -> Result<String> {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        let next_is_paren = tokens.get(i + 1).is_some_and(|n| n.is_op("("));
        let piece: String = match t {
            Token::Ident(name) => {
                match INTRINSICS.iter().find(|(f, _)| *f == name).filter(|_| next_is_paren) {
                    Some((_, py)) => py.to_string(),
                    None => name.clone(),
                }
            }
            Token::Num(n) => py_number(n),
            Token::Str(s) => s.clone(),
            Token::DotOp(d) => match d.as_str() {
                ".and." => " and ".into(),
                ".or." => " or ".into(),
                ".not." => "not ".into(),
                ".true." => "True".into(),
                ".false." => "False".into(),
                ".eqv." | ".eq." => " == ".into(),
                ".neqv." | ".ne." => " != ".into(),
                ".lt." => " < ".into(),
                ".le." => " <= ".into(),
                ".gt." => " > ".into(),
                ".ge." => " >= ".into(),
                other => return Err(unsupported(line, other)),
            },
            Token::Op(op) => match *op {
                "(" | ")" | "=" | ":" => op.to_string(),
                "(/" | "[" => "np.array([".into(),
                "/)" | "]" => "])".into(),
                "," => ", ".into(),
                "%" => ".".into(),
                "/=" => " != ".into(),
                "//" => " + ".into(),
                "+" | "-" if !is_operand_end(&out) => op.to_string(),
                "+" | "-" | "*" | "/" | "**" | "==" | "<" | ">" | "<=" | ">=" => format!(" {op} "),
                other => return Err(unsupported(line, format!("operator `{other}`"))),
            },
        };
        out.push_str(&piece);
    }
    Ok(out)
}

fn split_top<'a>(tokens: &'a [Token], sep: &str) -> Vec<&'a [Token]> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        match t {
            Token::Op("(" | "(/" | "[") => depth += 1,
            Token::Op(")" | "/)" | "]") => depth -= 1,
            Token::Op(o) if depth == 0 && *o == sep => {
                parts.push(&tokens[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if start < tokens.len() {
        parts.push(&tokens[start..]);
    }
    parts
}

fn top_level_eq(tokens: &[Token]) -> Option<usize> {
    let mut depth = 0i32;
    for (i, t) in tokens.iter().enumerate() {
        match t {
            Token::Op("(" | "(/" | "[") => depth += 1,
            Token::Op(")" | "/)" | "]") => depth -= 1,
            Token::Op("=") if depth == 0 => return Some(i),
            _ => {}
        }
    }
    None
}

/// Contents of the parenthesized group opening at `open`, and the index after it.
fn group(tokens: &[Token], open: usize) -> (&[Token], usize) {
    let end = skip_parens(tokens, open);
    (&tokens[open + 1..end.saturating_sub(1).max(open + 1)], end)
}

#[derive(Debug, Default)]
struct Decl {
    names: Vec<(String, Option<Vec<Token>>)>,
    intent: Option<String>,
    parameter: bool,
}

fn parse_decl(tokens: &[Token]) -> Option<Decl> {
    let mut i = skip_type_spec(tokens, 0)?;
    let mut decl = Decl::default();
    let entities_start = if let Some(colons) = tokens.iter().position(|t| t.is_op("::")) {
        while i < colons {
            if let Some(word) = tokens[i].ident() {
                if word == "parameter" {
                    decl.parameter = true;
                } else if word == "intent" && tokens.get(i + 1).is_some_and(|t| t.is_op("(")) {
                    let (inner, end) = group(tokens, i + 1);
                    decl.intent = inner.iter().filter_map(Token::ident).next().map(str::to_string);
                    if inner.len() > 1 {
                        decl.intent = Some("inout".into());
                    }
                    i = end;
                    continue;
                }
            }
            i += 1;
        }
        colons + 1
    } else {
        i
    };
    for entity in split_top(&tokens[entities_start..], ",") {
        let Some(name) = entity.first().and_then(Token::ident) else {
            continue;
        };
        let init = top_level_eq(entity).map(|eq| entity[eq + 1..].to_vec());
        decl.names.push((name.to_string(), init));
    }
    Some(decl)
}

struct Header {
    name: String,
    args: Vec<String>,
    result: Option<String>,
    is_function: bool,
}

fn parse_header(tokens: &[Token], line: usize) -> Result<Header> {
    let kw = tokens
        .iter()
        .position(|t| t.is_ident("function") || t.is_ident("subroutine"))
        .ok_or_else(|| unsupported(line, "expected a function or subroutine header"))?;
    let is_function = tokens[kw].is_ident("function");
    let name = tokens
        .get(kw + 1)
        .and_then(Token::ident)
        .ok_or_else(|| unsupported(line, "unnamed procedure"))?
        .to_string();
    let mut args = Vec::new();
    let mut i = kw + 2;
    if tokens.get(i).is_some_and(|t| t.is_op("(")) {
        let (inner, end) = group(tokens, i);
        args = inner.iter().filter_map(Token::ident).map(str::to_string).collect();
        i = end;
    }
    let mut result = None;
    if tokens.get(i).is_some_and(|t| t.is_ident("result")) && tokens.get(i + 1).is_some_and(|t| t.is_op("(")) {
        result = group(tokens, i + 1).0.first().and_then(Token::ident).map(str::to_string);
    }
    Ok(Header {
        name,
        args,
        result,
        is_function,
    })
}

struct Emitter {
    out: String,
    indent: usize,
    /// Lines emitted in each open block.
    counts: Vec<usize>,
}

impl Emitter {
    fn new(indent: usize) -> Self {
        Self {
            out: String::new(),
            indent,
            counts: vec![0],
        }
    }

    fn line(&mut self, text: &str) {
        let _ = writeln!(self.out, "{}{text}", "    ".repeat(self.indent));
        if let Some(c) = self.counts.last_mut() {
            *c += 1;
        }
    }

    fn open(&mut self, text: &str) {
        self.line(text);
        self.indent += 1;
        self.counts.push(0);
    }

    fn close(&mut self, line: usize) -> Result<()> {
        if self.counts.len() <= 1 {
            return Err(unsupported(line, "unbalanced block end"));
        }
        if self.counts.pop() == Some(0) {
            self.counts.push(0);
            self.line("pass");
            self.counts.pop();
        }
        self.indent -= 1;
        Ok(())
    }

    /// `else`/`elif`: close the current arm and open the next at the same depth.
    fn reopen(&mut self, text: &str, line: usize) -> Result<()> {
        self.close(line)?;
        self.open(text);
        Ok(())
    }
}

struct Procedure<'a> {
    returns: String,
    locals: &'a BTreeSet<String>,
}

fn statement(stmt: &[Token], line: usize, em: &mut Emitter, proc_: &Procedure<'_>) -> Result<()> {
    let Some(first) = stmt.first() else {
        return Ok(());
    };
    let word = first.ident().unwrap_or("");
    let second = stmt.get(1).and_then(Token::ident).unwrap_or("");
    match word {
        "end" if matches!(second, "if" | "do") => return em.close(line),
        "endif" | "enddo" => return em.close(line),
        "use" | "implicit" | "save" | "intrinsic" | "external" => return Ok(()),
        "exit" => {
            em.line("break");
            return Ok(());
        }
        "cycle" => {
            em.line("continue");
            return Ok(());
        }
        "return" => {
            em.line(&proc_.returns);
            return Ok(());
        }
        "if" if stmt.get(1).is_some_and(|t| t.is_op("(")) => {
            let (cond, end) = group(stmt, 1);
            let cond = expr(cond, line)?;
            let rest = &stmt[end..];
            if rest.len() == 1 && rest[0].is_ident("then") {
                em.open(&format!("if {cond}:"));
            } else {
                em.open(&format!("if {cond}:"));
                statement(rest, line, em, proc_)?;
                em.close(line)?;
            }
            return Ok(());
        }
        "else" | "elseif" => {
            let cond_at = if word == "elseif" {
                Some(1)
            } else if second == "if" {
                Some(2)
            } else {
                None
            };
            return match cond_at {
                None => em.reopen("else:", line),
                Some(at) if stmt.get(at).is_some_and(|t| t.is_op("(")) => {
                    let cond = expr(group(stmt, at).0, line)?;
                    em.reopen(&format!("elif {cond}:"), line)
                }
                Some(_) => Err(unsupported(line, "malformed else if")),
            };
        }
        "do" => {
            if stmt.len() == 1 {
                em.open("while True:");
            } else if second == "while" && stmt.get(2).is_some_and(|t| t.is_op("(")) {
                let cond = expr(group(stmt, 2).0, line)?;
                em.open(&format!("while {cond}:"));
            } else if stmt.get(2).is_some_and(|t| t.is_op("=")) {
                let bounds = split_top(&stmt[3..], ",");
                let b: Vec<String> = bounds.iter().map(|b| expr(b, line)).collect::<Result<_>>()?;
                let range = match b.as_slice() {
                    [lo, hi] => format!("range({lo}, {hi} + 1)"),
                    [lo, hi, step] => format!("range({lo}, {hi} + ({step} > 0) - ({step} < 0), {step})"),
                    _ => return Err(unsupported(line, "do loop bounds")),
                };
                em.open(&format!("for {second} in {range}:"));
            } else {
                return Err(unsupported(line, "do loop form"));
            }
            return Ok(());
        }
        "call" => {
            let name = stmt
                .get(1)
                .and_then(Token::ident)
                .ok_or_else(|| unsupported(line, "call without a name"))?;
            let args = if stmt.get(2).is_some_and(|t| t.is_op("(")) {
                split_top(group(stmt, 2).0, ",")
            } else {
                Vec::new()
            };
            let mut ins = Vec::new();
            let mut outs = Vec::new();
            for a in args {
                match a {
                    [Token::Ident(v)] if proc_.locals.contains(v) => outs.push(v.clone()),
                    _ => ins.push(expr(a, line)?),
                }
            }
            let call = format!("{name}({})", ins.join(", "));
            if outs.is_empty() {
                em.line(&call);
            } else {
                em.line(&format!("{} = {call}", outs.join(", ")));
            }
            return Ok(());
        }
        _ => {}
    }
    if first.is_op("@") {
        return assertion(stmt, line, em);
    }
    if let Some(decl) = parse_decl(stmt) {
        for (name, init) in decl.names {
            if let Some(init) = init {
                em.line(&format!("{name} = {}", expr(&init, line)?));
            }
        }
        return Ok(());
    }
    if let Some(eq) = top_level_eq(stmt) {
        let lhs = expr(&stmt[..eq], line)?;
        let rhs = expr(&stmt[eq + 1..], line)?;
        em.line(&format!("{lhs} = {rhs}"));
        return Ok(());
    }
    Err(unsupported(line, format!("statement starting with `{word}`")))
}

fn assertion(stmt: &[Token], line: usize, em: &mut Emitter) -> Result<()> {
    let name = stmt
        .get(1)
        .and_then(Token::ident)
        .ok_or_else(|| unsupported(line, "bare `@`"))?;
    if !stmt.get(2).is_some_and(|t| t.is_op("(")) {
        return Err(unsupported(line, format!("@{name} without arguments")));
    }
    let mut positional = Vec::new();
    let mut keywords = BTreeMap::new();
    for arg in split_top(group(stmt, 2).0, ",") {
        match arg {
            [Token::Ident(k), Token::Op("="), value @ ..] => {
                keywords.insert(k.clone(), expr(value, line)?);
            }
            _ => positional.push(expr(arg, line)?),
        }
    }
    let p = |i: usize| {
        positional
            .get(i)
            .cloned()
            .ok_or_else(|| unsupported(line, format!("@{name} needs {} arguments", i + 1)))
    };
    let text = match name {
        "assertequal" => match keywords.get("tolerance") {
            Some(tol) => format!(
                "assert np.all(np.abs(np.asarray({}) - np.asarray({})) <= {tol})",
                p(1)?,
                p(0)?
            ),
            None => format!("assert np.all(np.asarray({}) == np.asarray({}))", p(1)?, p(0)?),
        },
        "assertrelativelyequal" => {
            let tol = keywords.get("tolerance").cloned().unwrap_or_else(|| "1e-12".into());
            format!("assert np.allclose({}, {}, rtol={tol}, atol=0.0)", p(1)?, p(0)?)
        }
        "asserttrue" => format!("assert np.all({})", p(0)?),
        "assertfalse" => format!("assert not np.any({})", p(0)?),
        "assertlessthan" => format!("assert np.all(np.asarray({}) < np.asarray({}))", p(0)?, p(1)?),
        "assertgreaterthan" => format!("assert np.all(np.asarray({}) > np.asarray({}))", p(0)?, p(1)?),
        "assertisnan" => format!("assert np.all(np.isnan({}))", p(0)?),
        "assertisfinite" => format!("assert np.all(np.isfinite({}))", p(0)?),
        other => return Err(unsupported(line, format!("@{other}"))),
    };
    em.line(&text);
    Ok(())
}

fn is_end_of_unit(stmt: &[Token]) -> bool {
    match stmt.first().and_then(Token::ident) {
        Some("end") => stmt.len() == 1 || stmt.get(1).is_some_and(|t| t.is_ident("function") || t.is_ident("subroutine")),
        Some("endfunction" | "endsubroutine") => true,
        _ => false,
    }
}

fn translate_procedure(unit: &SourceUnit, out: &mut String) -> Result<()> {
    let offset = unit.line_span.start - 1;
    let stmts = lexer::statements(&unit.text);
    let header_stmt = stmts.first().ok_or(TranspileError::NoUnit)?;
    let header = parse_header(&header_stmt.tokens, offset + header_stmt.first_line)?;

    let mut intents: BTreeMap<String, String> = BTreeMap::new();
    let mut locals = BTreeSet::new();
    for stmt in &stmts[1..] {
        if let Some(decl) = parse_decl(&stmt.tokens) {
            for (name, _) in &decl.names {
                if let Some(intent) = &decl.intent {
                    intents.insert(name.clone(), intent.clone());
                } else if !header.args.contains(name) {
                    locals.insert(name.clone());
                }
            }
        }
    }
    let is_out = |a: &String| matches!(intents.get(a).map(String::as_str), Some("out" | "inout"));
    let params: Vec<&str> = header
        .args
        .iter()
        .filter(|a| intents.get(*a).is_none_or(|i| i != "out"))
        .map(String::as_str)
        .collect();
    let returns = if header.is_function {
        format!("return {}", header.result.as_deref().unwrap_or(&header.name))
    } else {
        let outs: Vec<&str> = header.args.iter().filter(|a| is_out(a)).map(String::as_str).collect();
        if outs.is_empty() {
            "return".to_string()
        } else {
            format!("return {}", outs.join(", "))
        }
    };

    let _ = writeln!(out, "def {}({}):", header.name, params.join(", "));
    if !unit.doc.trim().is_empty() {
        let doc: Vec<&str> = unit
            .doc
            .lines()
            .map(|l| l.trim().trim_start_matches('!').trim())
            .filter(|l| !l.is_empty())
            .collect();
        let _ = writeln!(out, "    \"\"\"{}\"\"\"", doc.join(" ").replace('\\', "\\\\").replace("\"\"\"", "'''"));
    }
    let mut em = Emitter::new(1);
    let proc_ = Procedure {
        returns,
        locals: &locals,
    };
    for stmt in &stmts[1..] {
        let line = offset + stmt.first_line;
        if is_end_of_unit(&stmt.tokens) {
            break;
        }
        if stmt.tokens.first().is_some_and(|t| t.is_ident("contains")) {
            return Err(unsupported(line, "internal procedures"));
        }
        statement(&stmt.tokens, line, &mut em, &proc_)?;
    }
    if em.counts.len() != 1 {
        return Err(unsupported(offset + unit.line_span.end - unit.line_span.start + 1, "unclosed block"));
    }
    em.line(&proc_.returns);
    out.push_str(&em.out);
    Ok(())
}

fn translate_variables(unit: &SourceUnit, out: &mut String) -> Result<()> {
    let offset = unit.line_span.start - 1;
    for stmt in lexer::statements(&unit.text) {
        if let Some(decl) = parse_decl(&stmt.tokens) {
            for (name, init) in decl.names {
                if let Some(init) = init {
                    let _ = writeln!(out, "{name} = {}", expr(&init, offset + stmt.first_line)?);
                }
            }
        }
    }
    Ok(())
}

/// Python module text for every procedure and module-variable block in `code`.
pub fn fortran_to_python(code: &str) -> Result<String> {
    let units = scan_sources(&[("unit.f90".to_string(), code.as_bytes().to_vec())])?;
    let mut out = String::from("import numpy as np\n");
    let mut any = false;
    for unit in &units {
        out.push_str("\n\n");
        match unit.kind {
            UnitKind::Function | UnitKind::Subroutine => translate_procedure(unit, &mut out)?,
            UnitKind::ModuleVariableBlock => translate_variables(unit, &mut out)?,
            UnitKind::DerivedType => {
                return Err(unsupported(unit.line_span.start, format!("derived type `{}`", unit.name)))
            }
        }
        any = true;
    }
    if any {
        Ok(out)
    } else {
        Err(TranspileError::NoUnit)
    }
}

/// Join physical lines while parentheses or brackets are open; pFUnit
/// macros are often split without `&`.
fn join_open_lines(text: &str) -> String {
    let mut out = String::new();
    let mut depth = 0i32;
    for line in text.lines() {
        let code = line.split('!').next().unwrap_or("");
        for c in code.chars() {
            match c {
                '(' | '[' => depth += 1,
                ')' | ']' => depth -= 1,
                _ => {}
            }
        }
        let code = code.trim_end().trim_end_matches('&');
        if depth > 0 {
            out.push_str(code);
            out.push(' ');
        } else {
            out.push_str(code);
            out.push('\n');
            depth = 0;
        }
    }
    out
}

/// pytest text for every pFUnit test module in `pf`.
pub fn funit_to_pytest(pf: &str) -> Result<String> {
    let joined = join_open_lines(pf);
    let stmts: Vec<Statement> = lexer::statements(&joined);
    let mut em = Emitter::new(0);
    em.line("import numpy as np");
    em.line("");
    let mut in_proc = false;
    let mut locals = BTreeSet::new();
    let mut tests = 0;
    let mut i = 0;
    while i < stmts.len() {
        let tokens = &stmts[i].tokens;
        let line = stmts[i].first_line;
        i += 1;
        let word = tokens.first().and_then(Token::ident).unwrap_or("");
        if !in_proc {
            match word {
                "module" | "use" | "implicit" | "save" | "contains" => {}
                "end" => {}
                "subroutine" => {
                    let header = parse_header(tokens, line)?;
                    em.line("");
                    em.open(&format!("def {}():", header.name));
                    in_proc = true;
                    locals.clear();
                    for stmt in &stmts[i..] {
                        if is_end_of_unit(&stmt.tokens) {
                            break;
                        }
                        if let Some(decl) = parse_decl(&stmt.tokens) {
                            locals.extend(decl.names.into_iter().filter(|(_, v)| v.is_none()).map(|(n, _)| n));
                        }
                    }
                    tests += usize::from(header.name.starts_with("test"));
                }
                _ if tokens.first().is_some_and(|t| t.is_op("@")) => {}
                _ => {
                    let proc_ = Procedure {
                        returns: String::new(),
                        locals: &locals,
                    };
                    statement(tokens, line, &mut em, &proc_)?;
                }
            }
            continue;
        }
        if is_end_of_unit(tokens) {
            em.close(line)?;
            in_proc = false;
            continue;
        }
        let proc_ = Procedure {
            returns: "return".into(),
            locals: &locals,
        };
        statement(tokens, line, &mut em, &proc_)?;
    }
    if tests == 0 {
        return Err(TranspileError::NoUnit);
    }
    Ok(em.out)
}

/// Re-spell tokens as Fortran source.
fn joined_fortran(tokens: &[Token]) -> String {
    tokens
        .iter()
        .map(|t| match t {
            Token::Ident(s) | Token::Str(s) | Token::Num(s) | Token::DotOp(s) => s.clone(),
            Token::Op(o) => o.to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// A pFUnit module per procedure that only checks the call evaluates, and
/// one per variable block checking initial values, for code with no tests
/// of its own.
pub fn smoke_funit(code: &str) -> Result<String> {
    let units = scan_sources(&[("unit.f90".to_string(), code.as_bytes().to_vec())])?;
    let mut out = String::new();
    for unit in units.iter().filter(|u| u.kind == UnitKind::ModuleVariableBlock) {
        let mut checks = Vec::new();
        for stmt in lexer::statements(&unit.text) {
            for (name, init) in parse_decl(&stmt.tokens).map(|d| d.names).unwrap_or_default() {
                let Some(init) = init.filter(|i| !i.iter().any(|t| matches!(t, Token::Str(_)))) else {
                    continue;
                };
                let text = joined_fortran(&init);
                checks.push(format!("    @assertEqual({text}, {name}, tolerance=0.0_r8)\n"));
            }
        }
        if checks.is_empty() {
            continue;
        }
        let name = &unit.name;
        let _ = writeln!(out, "module test_{name}");
        out.push_str("  use funit\n  use shr_kind_mod, only : r8 => shr_kind_r8\n  implicit none\ncontains\n  @Test\n");
        let _ = writeln!(out, "  subroutine test_{name}_values()");
        out.extend(checks);
        let _ = writeln!(out, "  end subroutine test_{name}_values");
        let _ = writeln!(out, "end module test_{name}\n");
    }
    for unit in units.iter().filter(|u| matches!(u.kind, UnitKind::Function | UnitKind::Subroutine)) {
        let stmts = lexer::statements(&unit.text);
        let header = parse_header(&stmts[0].tokens, unit.line_span.start)?;
        let mut outs = BTreeSet::new();
        for stmt in &stmts[1..] {
            if let Some(decl) = parse_decl(&stmt.tokens) {
                if decl.intent.as_deref() == Some("out") {
                    outs.extend(decl.names.into_iter().map(|(n, _)| n));
                }
            }
        }
        let args: Vec<String> = header
            .args
            .iter()
            .map(|a| if outs.contains(a) { format!("smoke_{a}") } else { "1.0_r8".into() })
            .collect();
        let name = &header.name;
        let _ = writeln!(out, "module test_{name}");
        out.push_str("  use funit\n  use shr_kind_mod, only : r8 => shr_kind_r8\n  implicit none\ncontains\n  @Test\n");
        let _ = writeln!(out, "  subroutine test_{name}_evaluates()");
        if header.is_function {
            let _ = writeln!(out, "    real(r8) :: smoke_result");
            let _ = writeln!(out, "    smoke_result = {name}({})", args.join(", "));
        } else {
            for o in &outs {
                let _ = writeln!(out, "    real(r8) :: smoke_{o}");
            }
            let _ = writeln!(out, "    call {name}({})", args.join(", "));
        }
        let _ = writeln!(out, "  end subroutine test_{name}_evaluates");
        let _ = writeln!(out, "end module test_{name}\n");
    }
    if out.is_empty() {
        return Err(TranspileError::NoUnit);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_drop_kind_and_d_exponent() {
        assert_eq!(py_number("1.0e6_r8"), "1.0e6");
        assert_eq!(py_number("1.d0"), "1.e0");
        assert_eq!(py_number("2."), "2.0");
        assert_eq!(py_number("40"), "40");
    }

    #[test]
    fn elemental_function() {
        let code = "elemental real(r8) function f(a, b)\n  real(r8), intent(in) :: a, b\n  f = max(a, 0.0_r8) * sqrt(b) - 1.0_r8\nend function f\n";
        assert_eq!(
            fortran_to_python(code).unwrap(),
            "import numpy as np\n\n\ndef f(a, b):\n    f = np.maximum(a, 0.0) * np.sqrt(b) - 1.0\n    return f\n"
        );
    }

    #[test]
    fn subroutine_returns_out_arguments() {
        let code = "subroutine s(x, y, z)\n  real(r8), intent(in) :: x\n  real(r8), intent(out) :: y\n  real(r8), intent(out) :: z\n  real(r8), parameter :: k = 2.0_r8\n  integer :: i\n  y = 0.0_r8\n  do i = 1, 3\n    if (y > 3.0_r8 .and. x /= 0.0_r8) exit\n    y = y + k * x\n  end do\n  if (y < 0.0_r8) then\n    z = -y\n  else if (y == 0.0_r8) then\n  else\n    z = y\n  end if\nend subroutine s\n";
        let py = fortran_to_python(code).unwrap();
        assert!(py.contains("def s(x):\n    k = 2.0\n    y = 0.0\n    for i in range(1, 3 + 1):\n        if y > 3.0 and x != 0.0:\n            break\n"), "{py}");
        assert!(py.contains("    elif y == 0.0:\n        pass\n    else:\n        z = y\n    return y, z\n"), "{py}");
    }

    #[test]
    fn unsupported_constructs_are_reported() {
        let code = "subroutine s()\n  select case (i)\n  end select\nend subroutine s\n";
        match fortran_to_python(code) {
            Err(TranspileError::Unsupported { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn funit_assertions_and_out_calls() {
        let pf = "module test_s\n  use funit\n  real(r8), parameter :: tol = 1.e-3_r8\ncontains\n  @Test\n  subroutine test_s_a()\n    real(r8) :: y, z\n    call s(1.0_r8, y, z)\n    @assertEqual([1.0_r8, 2.0_r8],\n        g([1.0_r8, 2.0_r8]),\n        tolerance=tol)\n    @assertTrue(y > 0.0_r8)\n  end subroutine test_s_a\nend module test_s\n";
        let py = funit_to_pytest(pf).unwrap();
        assert_eq!(
            py,
            "import numpy as np\n\ntol = 1.e-3\n\ndef test_s_a():\n    y, z = s(1.0)\n    assert np.all(np.abs(np.asarray(g(np.array([1.0, 2.0]))) - np.asarray(np.array([1.0, 2.0]))) <= tol)\n    assert np.all(y > 0.0)\n"
        );
    }

    #[test]
    fn variable_blocks_get_value_checks() {
        let code = "module consts\n  real(r8), parameter :: k = 2.0_r8\n  character(len=4) :: tag = 'abcd'\nend module consts\n";
        let pf = smoke_funit(code).unwrap();
        assert!(pf.contains("@assertEqual(2.0_r8, k, tolerance=0.0_r8)"), "{pf}");
        assert!(!pf.contains("tag"));
        let py = fortran_to_python(code).unwrap();
        assert!(py.contains("k = 2.0\ntag = 'abcd'\n"), "{py}");
        let tests = funit_to_pytest(&pf).unwrap();
        assert!(tests.contains("assert np.all(np.abs(np.asarray(k) - np.asarray(2.0)) <= 0.0)"), "{tests}");
    }

    #[test]
    fn smoke_tests_cover_each_procedure() {
        let code = "real(r8) function f(a)\n  real(r8), intent(in) :: a\n  f = a\nend function f\nsubroutine s(a, b)\n  real(r8), intent(in) :: a\n  real(r8), intent(out) :: b\n  b = a\nend subroutine s\n";
        let pf = smoke_funit(code).unwrap();
        assert!(pf.contains("smoke_result = f(1.0_r8)"));
        assert!(pf.contains("call s(1.0_r8, smoke_b)"));
        let py = funit_to_pytest(&pf).unwrap();
        assert!(py.contains("smoke_result = f(1.0)"));
        assert!(py.contains("smoke_b = s(1.0)"));
    }
}
