//! Free-form Fortran lexing: physical lines, logical statements and tokens.
//!
//! This is deliberately not a grammar. Comments and string literals are
//! recognized so identifiers inside them are never reported, `&` continuation
//! lines are joined, `;` splits statements, and preprocessor lines are passed
//! over untouched.

use std::ops::Range;

use super::FortranError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Token {
    /// Identifier or keyword, lowercased.
    Ident(String),
    /// String literal, verbatim including quotes.
    Str(String),
    /// Numeric literal including any kind suffix.
    Num(String),
    /// `.and.`, `.true.` and friends, lowercased with dots.
    DotOp(String),
    /// Punctuation and operators.
    Op(&'static str),
}

impl Token {
    pub fn ident(&self) -> Option<&str> {
        match self {
            Token::Ident(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_ident(&self, word: &str) -> bool {
        matches!(self, Token::Ident(s) if s == word)
    }

    pub fn is_op(&self, op: &str) -> bool {
        matches!(self, Token::Op(o) if *o == op)
    }
}

/// One logical statement, possibly spanning several physical lines.
#[derive(Clone, Debug, PartialEq)]
pub struct Statement {
    /// 1-based first physical line.
    pub first_line: usize,
    /// 1-based last physical line (inclusive).
    pub last_line: usize,
    pub tokens: Vec<Token>,
}

/// Byte range of every physical line, terminator included.
pub fn line_ranges(text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, b) in text.bytes().enumerate() {
        if b == b'\n' {
            out.push(start..i + 1);
            start = i + 1;
        }
    }
    if start < text.len() {
        out.push(start..text.len());
    }
    out
}

fn strip_eol(line: &str) -> &str {
    line.trim_end_matches(['\n', '\r'])
}

/// Reject sources that use fixed-form column conventions.
pub fn check_free_form(text: &str) -> Result<(), FortranError> {
    let mut prev_continued = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        let bytes = line.as_bytes();
        let lineno = idx + 1;
        if let Some(&first) = bytes.first() {
            let comment_col1 = first == b'*'
                || ((first == b'c' || first == b'C')
                    && bytes.get(1).is_none_or(|b| *b == b' ' || *b == b'\t')
                    && !line[1..].trim_start().starts_with(['=', '(', '%']));
            if comment_col1 {
                return Err(FortranError::FixedForm { line: lineno });
            }
        }
        // column-6 continuation marker on a line not announced by `&`
        if !prev_continued && bytes.len() > 6 && bytes[..5].iter().all(|b| *b == b' ') {
            let mark = bytes[5];
            if matches!(mark, b'$' | b'+' | b'&' | b'*') && bytes[6] != b'=' {
                return Err(FortranError::FixedForm { line: lineno });
            }
        }
        let code = code_part(line, &mut None);
        prev_continued = code.trim_end().ends_with('&');
    }
    Ok(())
}

/// The part of `line` before any comment. `open_quote` carries an unterminated
/// string across a continuation.
fn code_part<'a>(line: &'a str, open_quote: &mut Option<u8>) -> &'a str {
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match *open_quote {
            Some(q) => {
                if b == q {
                    if bytes.get(i + 1) == Some(&q) {
                        i += 1;
                    } else {
                        *open_quote = None;
                    }
                }
            }
            None => {
                if b == b'!' {
                    return &line[..i];
                }
                if b == b'\'' || b == b'"' {
                    *open_quote = Some(b);
                }
            }
        }
        i += 1;
    }
    line
}

fn is_preprocessor(line: &str) -> bool {
    line.trim_start().starts_with('#')
}

/// Split source into logical statements.
pub fn statements(text: &str) -> Vec<Statement> {
    let lines: Vec<&str> = line_ranges(text)
        .into_iter()
        .map(|r| strip_eol(&text[r]))
        .collect();
    let mut out = Vec::new();
    let mut buf = String::new();
    let mut first_line = 0;
    let mut open_quote: Option<u8> = None;
    let mut continuing = false;

    for (idx, line) in lines.iter().enumerate() {
        let lineno = idx + 1;
        if !continuing && is_preprocessor(line) {
            continue;
        }
        let mut code = code_part(line, &mut open_quote);
        if continuing {
            let trimmed = code.trim_start();
            if trimmed.is_empty() {
                // comment-only or blank line inside a continuation
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('&') {
                code = rest;
            }
        } else {
            if code.trim().is_empty() {
                continue;
            }
            first_line = lineno;
        }
        let body = code.trim_end();
        if let Some(stripped) = body.strip_suffix('&') {
            buf.push_str(stripped);
            if open_quote.is_none() {
                buf.push(' ');
            }
            continuing = true;
            continue;
        }
        buf.push_str(body);
        continuing = false;
        open_quote = None;
        for part in split_semicolons(&buf) {
            let tokens = tokenize(part);
            if !tokens.is_empty() {
                out.push(Statement {
                    first_line,
                    last_line: lineno,
                    tokens,
                });
            }
        }
        buf.clear();
    }
    if !buf.trim().is_empty() {
        let tokens = tokenize(&buf);
        if !tokens.is_empty() {
            out.push(Statement {
                first_line,
                last_line: lines.len(),
                tokens,
            });
        }
    }
    out
}

fn split_semicolons(code: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut quote: Option<u8> = None;
    let mut start = 0;
    for (i, b) in code.bytes().enumerate() {
        match quote {
            Some(q) if b == q => quote = None,
            Some(_) => {}
            None if b == b'\'' || b == b'"' => quote = Some(b),
            None if b == b';' => {
                parts.push(&code[start..i]);
                start = i + 1;
            }
            None => {}
        }
    }
    parts.push(&code[start..]);
    parts
}

const DOT_WORDS: &[&str] = &[
    "and", "or", "not", "eqv", "neqv", "eq", "ne", "lt", "le", "gt", "ge", "true", "false",
];

const OPS: &[&str] = &[
    "**", "//", "==", "/=", "<=", ">=", "=>", "::", "(/", "/)", "(", ")", ",", "=", "+", "-",
    "*", "/", "<", ">", "%", ":", "[", "]", "&", "@", "?", "$",
];

/// Tokenize one statement's code (comments already removed).
pub fn tokenize(code: &str) -> Vec<Token> {
    let bytes = code.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if b.is_ascii_alphabetic() || b == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            // kind-prefixed string such as `k_"abc"` is rare; treat the prefix as an identifier
            out.push(Token::Ident(code[start..i].to_ascii_lowercase()));
            continue;
        }
        if b.is_ascii_digit() || (b == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            i = scan_number(bytes, i);
            out.push(Token::Num(code[start..i].to_string()));
            continue;
        }
        if b == b'.' {
            let rest = &code[i + 1..];
            let word: String = rest
                .chars()
                .take_while(|c| c.is_ascii_alphabetic())
                .collect();
            if !word.is_empty() && rest[word.len()..].starts_with('.') {
                let lw = word.to_ascii_lowercase();
                if DOT_WORDS.contains(&lw.as_str()) {
                    out.push(Token::DotOp(format!(".{lw}.")));
                    i += word.len() + 2;
                    continue;
                }
            }
            out.push(Token::Op("."));
            i += 1;
            continue;
        }
        if b == b'\'' || b == b'"' {
            let start = i;
            i += 1;
            while i < bytes.len() {
                if bytes[i] == b {
                    if bytes.get(i + 1) == Some(&b) {
                        i += 2;
                        continue;
                    }
                    i += 1;
                    break;
                }
                i += 1;
            }
            out.push(Token::Str(code[start..i.min(bytes.len())].to_string()));
            continue;
        }
        if let Some(op) = OPS.iter().find(|op| code[i..].starts_with(**op)) {
            // `(/` only opens an array constructor when not followed by `)` or `=`
            if *op == "(/" && matches!(bytes.get(i + 2), Some(b')') | Some(b'=')) {
                out.push(Token::Op("("));
                i += 1;
                continue;
            }
            out.push(Token::Op(op));
            i += op.len();
            continue;
        }
        // anything else (non-ASCII in code, stray characters) is skipped
        i += code[i..].chars().next().map_or(1, char::len_utf8);
    }
    out
}

const TYPE_SPEC_WORDS: &[&str] = &[
    "integer",
    "real",
    "logical",
    "complex",
    "character",
    "doubleprecision",
    "doublecomplex",
];

/// Skip a balanced parenthesized group starting at `i` (which must be `(`).
pub fn skip_parens(tokens: &[Token], mut i: usize) -> usize {
    let mut depth = 0usize;
    while i < tokens.len() {
        if tokens[i].is_op("(") || tokens[i].is_op("(/") {
            depth += 1;
        } else if tokens[i].is_op(")") || tokens[i].is_op("/)") {
            depth = depth.saturating_sub(1);
            if depth == 0 {
                return i + 1;
            }
        }
        i += 1;
    }
    i
}

/// Skip one intrinsic or derived type-spec (`real(r8)`, `double precision`,
/// `type(foo)`, `character*8`). Returns the index after it, or `None`.
pub fn skip_type_spec(tokens: &[Token], i: usize) -> Option<usize> {
    let word = tokens.get(i)?.ident()?;
    let mut j = i + 1;
    if word == "double" {
        let next = tokens.get(j)?.ident()?;
        if next != "precision" && next != "complex" {
            return None;
        }
        j += 1;
    } else if word == "type" || word == "class" {
        if !tokens.get(j)?.is_op("(") {
            return None;
        }
        return Some(skip_parens(tokens, j));
    } else if !TYPE_SPEC_WORDS.contains(&word) {
        return None;
    }
    if tokens.get(j).is_some_and(|t| t.is_op("(")) {
        j = skip_parens(tokens, j);
    } else if tokens.get(j).is_some_and(|t| t.is_op("*")) {
        j += 1;
        if tokens.get(j).is_some_and(|t| t.is_op("(")) {
            j = skip_parens(tokens, j);
        } else {
            j += 1;
        }
    }
    Some(j)
}

fn scan_number(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        // not the start of a dot operator like `1.and.`
        let after = &bytes[i + 1..];
        let word_len = after.iter().take_while(|c| c.is_ascii_alphabetic()).count();
        let is_dot_op = word_len > 0 && after.get(word_len) == Some(&b'.') && {
            let w = std::str::from_utf8(&after[..word_len])
                .unwrap_or("")
                .to_ascii_lowercase();
            DOT_WORDS.contains(&w.as_str())
        };
        if !is_dot_op {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    if i < bytes.len() && matches!(bytes[i], b'e' | b'E' | b'd' | b'D') {
        let mut j = i + 1;
        if j < bytes.len() && matches!(bytes[j], b'+' | b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            i = j;
        }
    }
    if i < bytes.len() && bytes[i] == b'_' {
        i += 1;
        while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
            i += 1;
        }
    }
    i
}
