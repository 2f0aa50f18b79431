use std::collections::{BTreeMap, BTreeSet};

use ftrans_core::corpus::default_root;
use ftrans_core::fortran::{scan_sources, scan_tree, LineSpan, ScanOptions, SourceUnit, UnitKind};
use ftrans_core::graph::{build_graph, order_for_translation, to_dot, DependencyGraph, TranslationOrder};
use proptest::prelude::*;

fn unit(name: &str, refs: Vec<String>) -> SourceUnit {
    SourceUnit {
        id: SourceUnit::make_id("p.f90", name),
        name: name.into(),
        kind: UnitKind::Subroutine,
        file: "p.f90".into(),
        line_span: LineSpan { start: 1, end: 1 },
        text: String::new(),
        doc: String::new(),
        attributes: Default::default(),
        references: refs,
        type_uses: vec![],
    }
}

fn graph_of(n: usize, edges: &[(usize, usize)]) -> DependencyGraph {
    let name = |i: usize| format!("n{i:02}");
    let units: Vec<SourceUnit> = (0..n)
        .map(|i| {
            let refs = edges.iter().filter(|(a, _)| *a == i).map(|(_, b)| name(*b)).collect();
            unit(&name(i), refs)
        })
        .collect();
    build_graph(&units).unwrap()
}

/// Members by name, per group.
fn named_groups(g: &DependencyGraph, order: &TranslationOrder) -> Vec<BTreeSet<String>> {
    order
        .groups
        .iter()
        .map(|grp| grp.iter().map(|id| g.name_of(id).to_string()).collect())
        .collect()
}

/// Components by mutual reachability (Floyd-Warshall closure).
fn brute_force_sccs(n: usize, edges: &[(usize, usize)]) -> BTreeSet<BTreeSet<String>> {
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        reach[i][i] = true;
    }
    for &(a, b) in edges {
        reach[a][b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                reach[i][j] |= reach[i][k] && reach[k][j];
            }
        }
    }
    (0..n)
        .map(|i| (0..n).filter(|&j| reach[i][j] && reach[j][i]).map(|j| format!("n{j:02}")).collect())
        .collect()
}

fn dag() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    // point every edge from the higher index to the lower one
    digraph().prop_map(|(n, edges)| {
        let edges = edges.into_iter().filter(|(a, b)| a != b).map(|(a, b)| (a.max(b), a.min(b))).collect();
        (n, edges)
    })
}

fn digraph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1usize..=12).prop_flat_map(|n| (Just(n), proptest::collection::vec((0..n, 0..n), 0..=n * 2)))
}

fn check_order(n: usize, edges: &[(usize, usize)]) -> Result<(), TestCaseError> {
    let g = graph_of(n, edges);
    let order = order_for_translation(&g);
    let groups = named_groups(&g, &order);
    let flat: Vec<&str> = order.flatten().collect();
    prop_assert_eq!(flat.len(), n);
    prop_assert_eq!(flat.iter().collect::<BTreeSet<_>>().len(), n);
    for e in &g.edges {
        let (from, to) = (order.position(&e.from).unwrap(), order.position(&e.to).unwrap());
        prop_assert!(to <= from, "{} -> {} out of order", e.from, e.to);
    }
    let found: BTreeSet<BTreeSet<String>> = groups.into_iter().collect();
    prop_assert_eq!(found, brute_force_sccs(n, edges));
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dag_orders_put_dependencies_first((n, edges) in dag()) {
        check_order(n, &edges)?;
        // acyclic input: every group is a single unit
        let g = graph_of(n, &edges);
        prop_assert!(order_for_translation(&g).groups.iter().all(|grp| grp.len() == 1));
    }

    #[test]
    fn condensation_matches_reachability((n, edges) in digraph()) {
        check_order(n, &edges)?;
    }

    #[test]
    fn order_ignores_unit_listing_order((n, edges) in digraph(), seed in any::<u64>()) {
        let g = graph_of(n, &edges);
        let name = |i: usize| format!("n{i:02}");
        let mut units: Vec<SourceUnit> = (0..n)
            .map(|i| unit(&name(i), edges.iter().filter(|(a, _)| *a == i).map(|(_, b)| name(*b)).collect()))
            .collect();
        units.rotate_left((seed as usize) % n);
        units.reverse();
        let shuffled = build_graph(&units).unwrap();
        prop_assert_eq!(order_for_translation(&shuffled), order_for_translation(&g));
        prop_assert_eq!(to_dot(&shuffled), to_dot(&g));
    }
}

fn hybrid_graph() -> DependencyGraph {
    let units = scan_tree(&default_root().join("hybrid"), &ScanOptions::default()).unwrap();
    build_graph(&units).unwrap()
}

#[test]
fn hybrid_fans_out_to_eight_helpers_and_comes_last() {
    let g = hybrid_graph();
    assert_eq!(g.node_count(), 9);
    let hybrid = g.id_of("hybrid").unwrap().to_string();
    assert_eq!(g.out_degree(&hybrid), 8);
    let order = order_for_translation(&g);
    assert_eq!(order.groups.len(), 9);
    assert_eq!(order.groups.last().unwrap(), &vec![hybrid]);
}

#[test]
fn hybrid_dot_snapshot() {
    let dot = to_dot(&hybrid_graph());
    let expected = "\
digraph deps {
  \"ci_residual\";
  \"effective_kc\";
  \"electron_rate\";
  \"hybrid\";
  \"medlyn_slope\";
  \"net_assimilation\";
  \"rubisco_rate\";
  \"secant_step\";
  \"stomatal_conductance\";
  \"ci_residual\" -> \"electron_rate\";
  \"ci_residual\" -> \"net_assimilation\";
  \"ci_residual\" -> \"rubisco_rate\";
  \"ci_residual\" -> \"stomatal_conductance\";
  \"hybrid\" -> \"ci_residual\";
  \"hybrid\" -> \"effective_kc\";
  \"hybrid\" -> \"electron_rate\";
  \"hybrid\" -> \"medlyn_slope\";
  \"hybrid\" -> \"net_assimilation\";
  \"hybrid\" -> \"rubisco_rate\";
  \"hybrid\" -> \"secant_step\";
  \"hybrid\" -> \"stomatal_conductance\";
}
";
    assert_eq!(dot, expected);
    assert_eq!(to_dot(&hybrid_graph()), dot);
}

#[test]
fn scanning_is_deterministic_across_file_order() {
    let root = default_root();
    let read = |e: &str| (format!("{e}.f90"), std::fs::read(root.join(e).join("src.f90")).unwrap());
    let forward = vec![read("daylength"), read("hybrid"), read("photosynthesis")];
    let mut backward = forward.clone();
    backward.reverse();
    let a = scan_sources(&forward).unwrap();
    let b = scan_sources(&backward).unwrap();
    let by_id = |units: Vec<SourceUnit>| units.into_iter().map(|u| (u.id.clone(), u)).collect::<BTreeMap<_, _>>();
    assert_eq!(by_id(a.clone()), by_id(b));
    assert_eq!(scan_sources(&forward).unwrap(), a);
    let ga = build_graph(&a).unwrap();
    assert_eq!(order_for_translation(&ga), order_for_translation(&build_graph(&scan_sources(&backward).unwrap()).unwrap()));
}
