//! Lexical reference tracing over a unit's statements.

use std::collections::{BTreeMap, BTreeSet};

use super::lexer::{self, skip_parens, skip_type_spec, Token};
use super::scan::{SourceUnit, UnitKind};

/// Names that resolve to units. Module-level entities (parameters, module
/// variables) are aliases that resolve to their module variable block.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KnownNames {
    names: BTreeSet<String>,
    aliases: BTreeMap<String, String>,
}

impl KnownNames {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            names: names
                .into_iter()
                .map(|n| n.as_ref().to_ascii_lowercase())
                .collect(),
            aliases: BTreeMap::new(),
        }
    }

    /// Unit names plus the entities declared by every module variable block.
    pub fn from_units(units: &[SourceUnit]) -> Self {
        let mut known = Self::new(units.iter().map(|u| u.name.as_str()));
        for unit in units.iter().filter(|u| u.kind == UnitKind::ModuleVariableBlock) {
            for entity in declared_entities(&unit.text) {
                known.add_alias(&entity, &unit.name);
            }
        }
        known
    }

    /// Map `symbol` to `owner`. Real unit names always win over aliases.
    pub fn add_alias(&mut self, symbol: &str, owner: &str) {
        self.aliases
            .entry(symbol.to_ascii_lowercase())
            .or_insert_with(|| owner.to_ascii_lowercase());
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(name)
    }

    pub fn resolve(&self, ident: &str) -> Option<&str> {
        if let Some(n) = self.names.get(ident) {
            return Some(n);
        }
        self.aliases
            .get(ident)
            .map(String::as_str)
            .filter(|owner| self.names.contains(*owner))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Traced {
    /// Known names in first-occurrence order, self excluded.
    pub names: Vec<String>,
    /// Names used as a derived type in a declaration.
    pub type_uses: Vec<String>,
}

struct Collector<'a> {
    known: &'a KnownNames,
    own: &'a str,
    seen: BTreeSet<String>,
    typed: BTreeSet<String>,
    out: Traced,
}

impl Collector<'_> {
    fn add(&mut self, ident: &str, type_use: bool) {
        let Some(name) = self.known.resolve(ident) else { return };
        if name == self.own {
            return;
        }
        if self.seen.insert(name.to_string()) {
            self.out.names.push(name.to_string());
        }
        if type_use && self.typed.insert(name.to_string()) {
            self.out.type_uses.push(name.to_string());
        }
    }

    /// Every identifier in `tokens` except component names after `%` and
    /// keyword-argument names (`f(x, kind=k)`).
    fn expression(&mut self, tokens: &[Token]) {
        let mut depth = 0usize;
        for (i, tok) in tokens.iter().enumerate() {
            match tok {
                Token::Op("(" | "(/" | "[") => depth += 1,
                Token::Op(")" | "/)" | "]") => depth = depth.saturating_sub(1),
                Token::Ident(word) => {
                    let prev = i.checked_sub(1).map(|p| &tokens[p]);
                    if prev.is_some_and(|p| p.is_op("%")) {
                        continue;
                    }
                    let keyword_arg = depth > 0
                        && tokens.get(i + 1).is_some_and(|t| t.is_op("="))
                        && prev.is_some_and(|p| p.is_op("(") || p.is_op(","));
                    if !keyword_arg {
                        self.add(word, false);
                    }
                }
                _ => {}
            }
        }
    }
}

const ACCESS_WORDS: &[&str] = &[
    "private", "public", "protected", "implicit", "import", "contains", "format", "sequence",
    "include", "entry",
];

// attribute statements naming dummies or locals; only their bounds can refer
// to other units
const ATTRIBUTE_WORDS: &[&str] = &[
    "intent",
    "optional",
    "external",
    "intrinsic",
    "allocatable",
    "pointer",
    "target",
    "value",
    "volatile",
    "asynchronous",
    "dimension",
    "save",
    "common",
    "namelist",
    "equivalence",
];

/// Known names referenced by `unit`, excluding its header and itself.
pub fn trace_references(unit: &SourceUnit, known: &KnownNames) -> Traced {
    let mut c = Collector {
        known,
        own: &unit.name,
        seen: BTreeSet::new(),
        typed: BTreeSet::new(),
        out: Traced::default(),
    };
    let in_type = unit.kind == UnitKind::DerivedType;
    let mut interface_depth = 0usize;

    for stmt in lexer::statements(&unit.text).iter().skip(1) {
        let t = stmt.tokens.as_slice();
        let Some(first) = t.first().and_then(Token::ident) else {
            continue;
        };
        let second_is_assign = t.get(1).is_some_and(|x| x.is_op("=") || x.is_op("("));

        let opens_interface = first == "interface"
            || (first == "abstract" && t.get(1).is_some_and(|x| x.is_ident("interface")));
        if opens_interface && !second_is_assign {
            interface_depth += 1;
            continue;
        }
        if is_end_interface(t) {
            interface_depth = interface_depth.saturating_sub(1);
            continue;
        }
        if interface_depth > 0 || is_end(t) {
            continue;
        }
        if second_is_assign && !TYPE_WORDS.contains(&first) && first != "procedure" {
            c.expression(t);
            continue;
        }

        match first {
            "use" => use_statement(&mut c, t),
            w if ACCESS_WORDS.contains(&w) => {}
            w if ATTRIBUTE_WORDS.contains(&w) => {
                let mut i = 1;
                while i < t.len() {
                    if t[i].is_op("(") {
                        let end = skip_parens(t, i);
                        c.expression(&t[i..end]);
                        i = end;
                    } else {
                        i += 1;
                    }
                }
            }
            "procedure" => procedure_statement(&mut c, t, in_type),
            "parameter" | "data" => c.expression(&t[1..]),
            _ => match declaration_start(t) {
                Some(after_spec) => declaration(&mut c, t, after_spec),
                None => c.expression(t),
            },
        }
    }
    c.out
}

const TYPE_WORDS: &[&str] = &[
    "integer",
    "real",
    "logical",
    "complex",
    "character",
    "doubleprecision",
    "doublecomplex",
    "double",
    "type",
    "class",
];

fn is_end(t: &[Token]) -> bool {
    let Some(first) = t.first().and_then(Token::ident) else {
        return false;
    };
    first.starts_with("end") && !t.get(1).is_some_and(|x| x.is_op("=") || x.is_op("("))
        && (first == "end"
            || matches!(
                first,
                "endfunction" | "endsubroutine" | "endtype" | "endmodule" | "endprogram" | "endinterface"
            ))
}

fn is_end_interface(t: &[Token]) -> bool {
    match t.first().and_then(Token::ident) {
        Some("endinterface") => true,
        Some("end") => t.get(1).is_some_and(|x| x.is_ident("interface")),
        _ => false,
    }
}

/// Index just past the type-spec when `t` is an entity declaration.
fn declaration_start(t: &[Token]) -> Option<usize> {
    let j = skip_type_spec(t, 0)?;
    match t.get(j) {
        Some(Token::Op("," | "::")) | Some(Token::Ident(_)) => Some(j),
        _ => None,
    }
}

fn declaration(c: &mut Collector<'_>, t: &[Token], after_spec: usize) {
    // the type-spec: `type(foo)` / `class(foo)` name a derived type, other
    // identifiers there are kind or length parameters
    let head = &t[..after_spec];
    if head
        .first()
        .is_some_and(|w| w.is_ident("type") || w.is_ident("class"))
    {
        if let Some(name) = head.get(2).and_then(Token::ident) {
            c.add(name, true);
        }
        if head.len() > 3 {
            c.expression(&head[3..]);
        }
    } else {
        c.expression(&head[1..]);
    }

    let sep = t.iter().position(|x| x.is_op("::"));
    // attribute section such as `, dimension(n), intent(in)`
    if let Some(sep) = sep {
        if sep > after_spec {
            let attrs = &t[after_spec..sep];
            let mut i = 0;
            while i < attrs.len() {
                if attrs[i].is_op("(") {
                    let end = skip_parens(attrs, i);
                    c.expression(&attrs[i..end]);
                    i = end;
                } else {
                    i += 1;
                }
            }
        }
    }
    let entities = &t[sep.map_or(after_spec, |s| s + 1)..];
    for_each_entity(entities, |_name, rest| c.expression(rest));
}

/// Split an entity list at top-level commas and hand each entity's name and
/// the remaining tokens (bounds, length, initializer) to `f`.
fn for_each_entity<'t>(entities: &'t [Token], mut f: impl FnMut(&'t str, &'t [Token])) {
    let mut depth = 0usize;
    let mut start = 0;
    let mut emit = |part: &'t [Token]| {
        if let Some(name) = part.first().and_then(Token::ident) {
            f(name, &part[1..]);
        } else {
            f("", part);
        }
    };
    for (i, tok) in entities.iter().enumerate() {
        match tok {
            Token::Op("(" | "(/" | "[") => depth += 1,
            Token::Op(")" | "/)" | "]") => depth = depth.saturating_sub(1),
            Token::Op(",") if depth == 0 => {
                emit(&entities[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if start < entities.len() {
        emit(&entities[start..]);
    }
}

fn use_statement(c: &mut Collector<'_>, t: &[Token]) {
    for (i, tok) in t.iter().enumerate().skip(1) {
        let Some(word) = tok.ident() else { continue };
        let keyword = match word {
            "only" | "operator" | "assignment" => t.get(i + 1).is_some_and(|x| x.is_op(":") || x.is_op("(")),
            "intrinsic" | "non_intrinsic" => i == 2 || t.get(i + 1).is_some_and(|x| x.is_op("::")),
            _ => false,
        };
        if !keyword {
            c.add(word, false);
        }
    }
}

fn procedure_statement(c: &mut Collector<'_>, t: &[Token], in_type: bool) {
    let mut i = 1;
    if t.get(1).is_some_and(|x| x.is_op("(")) {
        let end = skip_parens(t, 1);
        c.expression(&t[2..end.saturating_sub(1)]);
        i = end;
    }
    let Some(sep) = t.iter().position(|x| x.is_op("::")) else {
        if in_type {
            for tok in &t[i..] {
                if let Some(w) = tok.ident() {
                    c.add(w, false);
                }
            }
        }
        return;
    };
    for_each_entity(&t[sep + 1..], |name, rest| {
        // `procedure :: area => circle_area` binds to the target; a bare
        // binding name is its own implementation
        if rest.first().is_some_and(|x| x.is_op("=>")) {
            c.expression(&rest[1..]);
        } else if in_type {
            c.add(name, false);
        }
    });
}

/// Names declared at the top level of a specification part.
pub fn declared_entities(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut interface_depth = 0usize;
    let mut type_depth = 0usize;
    for stmt in lexer::statements(text).iter().skip(1) {
        let t = stmt.tokens.as_slice();
        let first = t.first().and_then(Token::ident);
        if first == Some("interface") || first == Some("abstract") {
            interface_depth += 1;
            continue;
        }
        if is_end_interface(t) {
            interface_depth = interface_depth.saturating_sub(1);
            continue;
        }
        if interface_depth > 0 {
            continue;
        }
        if first == Some("type") && declaration_start(t).is_none() {
            type_depth += 1;
            continue;
        }
        if type_depth > 0 {
            if is_end(t) {
                type_depth -= 1;
            }
            continue;
        }
        if first == Some("parameter") && t.get(1).is_some_and(|x| x.is_op("(")) {
            let end = skip_parens(t, 1);
            for_each_entity(&t[2..end.saturating_sub(1)], |name, _| {
                if !name.is_empty() {
                    out.push(name.to_string());
                }
            });
            continue;
        }
        if let Some(after_spec) = declaration_start(t) {
            let sep = t.iter().position(|x| x.is_op("::"));
            let entities = &t[sep.map_or(after_spec, |s| s + 1)..];
            for_each_entity(entities, |name, _| {
                if !name.is_empty() {
                    out.push(name.to_string());
                }
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fortran::scan::{LineSpan, SourceUnit};

    fn unit(name: &str, kind: UnitKind, text: &str) -> SourceUnit {
        SourceUnit {
            id: SourceUnit::make_id("t.f90", name),
            name: name.into(),
            kind,
            file: "t.f90".into(),
            line_span: LineSpan {
                start: 1,
                end: text.lines().count().max(1),
            },
            text: text.into(),
            doc: String::new(),
            attributes: Default::default(),
            references: vec![],
            type_uses: vec![],
        }
    }

    fn trace(text: &str, known: &[&str]) -> Vec<String> {
        trace_references(&unit("u", UnitKind::Subroutine, text), &KnownNames::new(known)).names
    }

    #[test]
    fn header_and_self_are_excluded() {
        let src = "subroutine u(f, g)\n  call u(1)\nend subroutine u\n";
        assert!(trace(src, &["u", "f", "g"]).is_empty());
    }

    #[test]
    fn dummy_declarations_alone_do_not_count() {
        let src = "subroutine u(f, g)\n  real, intent(in) :: f\n  real :: g(3)\n  g = 1.0\nend subroutine\n";
        assert_eq!(trace(src, &["f", "g"]), ["g"]);
    }

    #[test]
    fn initializers_and_bounds_count() {
        let src = "subroutine u()\n  real :: x(n) = w\nend subroutine\n";
        assert_eq!(trace(src, &["n", "w", "x"]), ["n", "w"]);
    }

    #[test]
    fn use_renames_count_on_both_sides() {
        let src = "function u(x)\n  use shr_infnan_mod, nan => shr_infnan_nan, only_me => x\n  u = 1\nend function\n";
        assert_eq!(
            trace(src, &["nan", "shr_infnan_nan", "shr_infnan_mod"]),
            ["shr_infnan_mod", "nan", "shr_infnan_nan"]
        );
        let only = "function u(x)\n  use m, only : a, b => c\nend function\n";
        assert_eq!(trace(only, &["only", "a", "b", "c", "m"]), ["m", "a", "b", "c"]);
    }

    #[test]
    fn components_and_keyword_arguments_are_skipped() {
        let src = "subroutine u(s)\n  s%rate = real(s%n, kind=r8) + rate\nend subroutine\n";
        assert_eq!(trace(src, &["rate", "n", "kind", "r8"]), ["r8", "rate"]);
    }

    #[test]
    fn comments_strings_and_case() {
        let src = "subroutine u()\n  ! call helper\n  print *, 'helper', HELPER(1)\nend subroutine\n";
        assert_eq!(trace(src, &["helper"]), ["helper"]);
        let decoy = "subroutine u()\n  print *, \"helper\" ! helper\nend subroutine\n";
        assert!(trace(decoy, &["helper"]).is_empty());
    }

    #[test]
    fn interface_bodies_are_skipped() {
        let src = "subroutine u(f)\n  interface\n    real function f(x)\n      import :: kinds_t\n      type(kinds_t) :: x\n    end function\n  end interface\n  y = f(1.0)\nend subroutine\n";
        assert_eq!(trace(src, &["f", "kinds_t"]), ["f"]);
    }

    #[test]
    fn type_bindings_reference_targets() {
        let text = "type :: shape\n  type(point) :: origin\ncontains\n  procedure :: area => circle_area\n  procedure :: perimeter\nend type\n";
        let t = trace_references(
            &unit("shape", UnitKind::DerivedType, text),
            &KnownNames::new(["point", "circle_area", "perimeter", "area"]),
        );
        assert_eq!(t.names, ["point", "circle_area", "perimeter"]);
        assert_eq!(t.type_uses, ["point"]);
    }

    #[test]
    fn module_entities_resolve_to_their_block() {
        let block = unit(
            "consts",
            UnitKind::ModuleVariableBlock,
            "module consts\n  real, parameter :: g = 9.81, h = 2*g\n  integer :: n(3)\n  parameter (k = 4)\n",
        );
        assert_eq!(declared_entities(&block.text), ["g", "h", "n", "k"]);
        let user = unit("u", UnitKind::Function, "function u()\n  u = h * k\nend function\n");
        let known = KnownNames::from_units(&[block, user.clone()]);
        assert_eq!(trace_references(&user, &known).names, ["consts"]);
    }
}
