//! Unit dependency graph, cycle condensation and translation order.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::Write as _;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fortran::SourceUnit;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("unit name `{name}` is defined twice: {first} and {second}")]
    DuplicateUnitName {
        name: String,
        first: String,
        second: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Call,
    TypeUse,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub name: String,
    /// `file:line` of the header.
    pub location: String,
}

/// `from` depends on `to`; both are unit ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyGraph {
    /// Keyed by unit id.
    pub nodes: BTreeMap<String, Node>,
    pub edges: BTreeSet<Edge>,
    /// References per unit id that name no unit in the graph.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub external_symbols: BTreeMap<String, Vec<String>>,
}

impl DependencyGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn out_degree(&self, id: &str) -> usize {
        self.edges.iter().filter(|e| e.from == id).count()
    }

    /// Ids this unit depends on.
    pub fn dependencies<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .iter()
            .filter(move |e| e.from == id)
            .map(|e| e.to.as_str())
    }

    pub fn name_of<'a>(&'a self, id: &'a str) -> &'a str {
        self.nodes.get(id).map_or(id, |n| n.name.as_str())
    }

    pub fn id_of(&self, name: &str) -> Option<&str> {
        self.nodes
            .values()
            .find(|n| n.name == name)
            .map(|n| n.id.as_str())
    }
}

pub fn build_graph(units: &[SourceUnit]) -> Result<DependencyGraph, GraphError> {
    let mut by_name: BTreeMap<&str, &SourceUnit> = BTreeMap::new();
    for unit in units {
        if let Some(prev) = by_name.insert(&unit.name, unit) {
            return Err(GraphError::DuplicateUnitName {
                name: unit.name.clone(),
                first: format!("{}:{}", prev.file, prev.line_span.start),
                second: format!("{}:{}", unit.file, unit.line_span.start),
            });
        }
    }
    let mut graph = DependencyGraph::default();
    for unit in units {
        graph.nodes.insert(
            unit.id.clone(),
            Node {
                id: unit.id.clone(),
                name: unit.name.clone(),
                location: format!("{}:{}", unit.file, unit.line_span.start),
            },
        );
        for reference in &unit.references {
            match by_name.get(reference.as_str()) {
                Some(target) if target.id != unit.id => {
                    let kind = if unit.type_uses.contains(reference) {
                        EdgeKind::TypeUse
                    } else {
                        EdgeKind::Call
                    };
                    graph.edges.insert(Edge {
                        from: unit.id.clone(),
                        to: target.id.clone(),
                        kind,
                    });
                }
                Some(_) => {}
                None => graph
                    .external_symbols
                    .entry(unit.id.clone())
                    .or_default()
                    .push(reference.clone()),
            }
        }
    }
    Ok(graph)
}

/// Groups of unit ids, dependencies first. Multi-element groups are
/// strongly connected components; members are sorted by name.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationOrder {
    pub groups: Vec<Vec<String>>,
}

impl TranslationOrder {
    pub fn position(&self, id: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.iter().any(|m| m == id))
    }

    pub fn flatten(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().flatten().map(String::as_str)
    }
}

/// Kahn's algorithm over the SCC condensation, breaking ties by the smallest
/// member name of each ready group.
pub fn order_for_translation(graph: &DependencyGraph) -> TranslationOrder {
    let mut g: DiGraph<&str, ()> = DiGraph::new();
    let index: BTreeMap<&str, NodeIndex> = graph
        .nodes
        .keys()
        .map(|id| (id.as_str(), g.add_node(id.as_str())))
        .collect();
    for e in &graph.edges {
        if let (Some(&a), Some(&b)) = (index.get(e.from.as_str()), index.get(e.to.as_str())) {
            g.update_edge(a, b, ());
        }
    }

    let mut groups: Vec<Vec<String>> = tarjan_scc(&g)
        .into_iter()
        .map(|scc| {
            let mut members: Vec<String> = scc.iter().map(|&i| g[i].to_string()).collect();
            members.sort_by(|a, b| graph.name_of(a).cmp(graph.name_of(b)).then(a.cmp(b)));
            members
        })
        .collect();
    groups.sort_by(|a, b| graph.name_of(&a[0]).cmp(graph.name_of(&b[0])));

    let group_of: BTreeMap<&str, usize> = groups
        .iter()
        .enumerate()
        .flat_map(|(gi, members)| members.iter().map(move |m| (m.as_str(), gi)))
        .collect();
    // pending[g] = number of distinct groups g still waits on
    let mut waits_on: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); groups.len()];
    let mut dependents: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); groups.len()];
    for e in &graph.edges {
        let (Some(&from), Some(&to)) = (group_of.get(e.from.as_str()), group_of.get(e.to.as_str())) else {
            continue;
        };
        if from != to {
            waits_on[from].insert(to);
            dependents[to].insert(from);
        }
    }
    let mut pending: Vec<usize> = waits_on.iter().map(BTreeSet::len).collect();
    let key = |gi: usize| Reverse((graph.name_of(&groups[gi][0]).to_string(), gi));
    let mut ready: BinaryHeap<Reverse<(String, usize)>> =
        (0..groups.len()).filter(|&gi| pending[gi] == 0).map(key).collect();

    let mut order = Vec::with_capacity(groups.len());
    while let Some(Reverse((_, gi))) = ready.pop() {
        order.push(gi);
        for &d in &dependents[gi] {
            pending[d] -= 1;
            if pending[d] == 0 {
                ready.push(key(d));
            }
        }
    }
    TranslationOrder {
        groups: order.into_iter().map(|gi| groups[gi].clone()).collect(),
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz text with nodes and edges sorted by unit name.
pub fn to_dot(graph: &DependencyGraph) -> String {
    let mut names: Vec<&str> = graph.nodes.values().map(|n| n.name.as_str()).collect();
    names.sort_unstable();
    let mut edges: Vec<(&str, &str, EdgeKind)> = graph
        .edges
        .iter()
        .map(|e| (graph.name_of(&e.from), graph.name_of(&e.to), e.kind))
        .collect();
    edges.sort_unstable();

    let mut out = String::from("digraph deps {\n");
    for name in names {
        let _ = writeln!(out, "  {};", quote(name));
    }
    for (from, to, kind) in edges {
        match kind {
            EdgeKind::Call => {
                let _ = writeln!(out, "  {} -> {};", quote(from), quote(to));
            }
            EdgeKind::TypeUse => {
                let _ = writeln!(out, "  {} -> {} [style=dashed];", quote(from), quote(to));
            }
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fortran::{LineSpan, UnitKind};

    fn unit(name: &str, refs: &[&str]) -> SourceUnit {
        SourceUnit {
            id: SourceUnit::make_id("g.f90", name),
            name: name.into(),
            kind: UnitKind::Function,
            file: "g.f90".into(),
            line_span: LineSpan { start: 1, end: 1 },
            text: String::new(),
            doc: String::new(),
            attributes: Default::default(),
            references: refs.iter().map(|s| s.to_string()).collect(),
            type_uses: vec![],
        }
    }

    fn names(graph: &DependencyGraph, order: &TranslationOrder) -> Vec<Vec<String>> {
        order
            .groups
            .iter()
            .map(|g| g.iter().map(|id| graph.name_of(id).to_string()).collect())
            .collect()
    }

    #[test]
    fn single_unit() {
        let g = build_graph(&[unit("a", &[])]).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (1, 0));
    }

    #[test]
    fn chain_orders_dependencies_first() {
        let g = build_graph(&[unit("a", &["b"]), unit("b", &["c"]), unit("c", &[])]).unwrap();
        assert_eq!(names(&g, &order_for_translation(&g)), [["c"], ["b"], ["a"]]);
    }

    #[test]
    fn mutual_pair_is_condensed() {
        let g = build_graph(&[unit("p", &["q"]), unit("q", &["p"]), unit("r", &["p"])]).unwrap();
        assert_eq!(g.edge_count(), 3);
        assert_eq!(
            names(&g, &order_for_translation(&g)),
            vec![vec!["p", "q"], vec!["r"]]
        );
    }

    #[test]
    fn ties_break_by_name() {
        let g = build_graph(&[unit("z", &[]), unit("m", &[]), unit("a", &["z"])]).unwrap();
        assert_eq!(names(&g, &order_for_translation(&g)), [["m"], ["z"], ["a"]]);
    }

    #[test]
    fn duplicate_names_rejected_with_both_locations() {
        let mut other = unit("a", &[]);
        other.file = "h.f90".into();
        other.id = SourceUnit::make_id("h.f90", "a");
        let err = build_graph(&[unit("a", &[]), other]).unwrap_err();
        assert_eq!(
            err,
            GraphError::DuplicateUnitName {
                name: "a".into(),
                first: "g.f90:1".into(),
                second: "h.f90:1".into()
            }
        );
    }

    #[test]
    fn unknown_references_become_external_symbols() {
        let g = build_graph(&[unit("a", &["shr_const"])]).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.external_symbols["g.f90::a"], ["shr_const"]);
    }

    #[test]
    fn dot_output() {
        assert_eq!(to_dot(&DependencyGraph::default()), "digraph deps {\n}\n");
        let g = build_graph(&[unit("a", &["b"]), unit("b", &[])]).unwrap();
        assert_eq!(to_dot(&g), "digraph deps {\n  \"a\";\n  \"b\";\n  \"a\" -> \"b\";\n}\n");
    }

    #[test]
    fn type_use_edges_are_tagged() {
        let mut a = unit("a", &["t"]);
        a.type_uses = vec!["t".into()];
        let g = build_graph(&[a, unit("t", &[])]).unwrap();
        assert_eq!(g.edges.iter().next().unwrap().kind, EdgeKind::TypeUse);
        assert!(to_dot(&g).contains("\"a\" -> \"t\" [style=dashed];"));
    }
}
