//! Predicate co-occurrence clustering, used to pick the predicate
//! combinations that augmentation writes synthetic rules for.

use std::collections::{BTreeMap, BTreeSet};

use itertools::Itertools;

use crate::model::Instance;

/// Undirected graph over normalized predicates, with an edge between two
/// predicates that appear together in some instance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredicateGraph {
    adj: BTreeMap<String, BTreeSet<String>>,
}

impl PredicateGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, node: &str) {
        self.adj.entry(node.to_string()).or_default();
    }

    /// Adds both endpoints and the edge between them. Self-loops are ignored.
    pub fn add_edge(&mut self, a: &str, b: &str) {
        self.add_node(a);
        self.add_node(b);
        if a != b {
            self.adj.get_mut(a).unwrap().insert(b.to_string());
            self.adj.get_mut(b).unwrap().insert(a.to_string());
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.adj.keys().map(String::as_str)
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    /// Edges as `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(&str, &str)> {
        self.adj
            .iter()
            .flat_map(|(a, ns)| ns.iter().filter(move |b| a < *b).map(move |b| (a.as_str(), b.as_str())))
            .collect()
    }

    pub fn neighbors(&self, node: &str) -> Option<&BTreeSet<String>> {
        self.adj.get(node)
    }

    pub fn contains_edge(&self, a: &str, b: &str) -> bool {
        self.adj.get(a).is_some_and(|ns| ns.contains(b))
    }

    /// Connected components, ordered by their smallest predicate.
    pub fn components(&self) -> Vec<BTreeSet<String>> {
        let all: BTreeSet<String> = self.adj.keys().cloned().collect();
        self.components_within(&all)
    }

    /// Components of the subgraph induced by `within`.
    fn components_within(&self, within: &BTreeSet<String>) -> Vec<BTreeSet<String>> {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut out = Vec::new();
        for start in within {
            if seen.contains(start.as_str()) {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut stack = vec![start.as_str()];
            seen.insert(start);
            while let Some(n) = stack.pop() {
                comp.insert(n.to_string());
                for m in &self.adj[n] {
                    if within.contains(m) && seen.insert(m) {
                        stack.push(m);
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    fn degree_within(&self, node: &str, within: &BTreeSet<String>) -> usize {
        self.adj[node].iter().filter(|m| within.contains(*m)).count()
    }
}

/// Builds the co-occurrence graph of the normalized predicates in `instances`.
pub fn build_cooccurrence_graph(instances: &[Instance]) -> PredicateGraph {
    let mut g = PredicateGraph::new();
    for inst in instances {
        let preds: BTreeSet<&str> = inst.triples.iter().map(|t| t.normalized_pred()).collect();
        for p in &preds {
            g.add_node(p);
        }
        for (a, b) in preds.iter().tuple_combinations() {
            g.add_edge(a, b);
        }
    }
    g
}

/// Connected components with none larger than `cap`.
///
/// An oversized component loses one node, and is split again, until it
/// fits. The node removed is one adjacent to every other node of the
/// component if there is one, otherwise one of highest degree; ties go to
/// the lexicographically smallest predicate. Removed predicates are simply
/// absent from the result. Components come back ordered by their smallest
/// predicate.
pub fn components_capped(g: &PredicateGraph, cap: usize) -> Vec<BTreeSet<String>> {
    assert!(cap >= 2, "component cap must be at least 2");
    let mut work = g.components();
    let mut done = Vec::new();
    while let Some(mut comp) = work.pop() {
        if comp.len() <= cap {
            done.push(comp);
            continue;
        }
        let victim = pick_victim(g, &comp);
        comp.remove(&victim);
        work.extend(g.components_within(&comp));
    }
    done.sort_by(|a, b| a.first().cmp(&b.first()));
    done
}

fn pick_victim(g: &PredicateGraph, comp: &BTreeSet<String>) -> String {
    let mut best: Option<(&String, usize)> = None;
    // Iteration is in sorted order, so a strict `>` keeps the smallest name on
    // ties. A universal node has the maximum possible degree, so taking the
    // highest degree also prefers universal nodes.
    for n in comp {
        let d = g.degree_within(n, comp);
        if best.is_none_or(|(_, bd)| d > bd) {
            best = Some((n, d));
        }
    }
    best.expect("oversized component is non-empty").0.clone()
}

/// All 2-, 3- and 4-predicate subsets of `component`, each sorted, ordered
/// by size and then lexicographically; at most `cap` of them when given.
pub fn enumerate_predicate_combos(component: &BTreeSet<String>, cap: Option<usize>) -> Vec<Vec<String>> {
    let items: Vec<&String> = component.iter().collect();
    let limit = cap.unwrap_or(usize::MAX);
    (2..=4.min(items.len()))
        .flat_map(|k| items.iter().copied().combinations(k))
        .map(|c| c.into_iter().cloned().collect())
        .take(limit)
        .collect()
}
