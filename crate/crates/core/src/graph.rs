//! Variable-variable graph encoding of CNF formulas.
//!
//! Each variable contributes a positive and a negative literal node joined by
//! a special edge. Two literal nodes are joined by a co-occurrence edge when
//! the literals share a clause; the edge label has a 1 at every shared clause
//! index. A single output node is linked to every literal node so that its
//! state can summarize the whole graph.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{CnfFormula, Literal};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("formula has {clauses} clauses but the edge label width is {m_max}")]
    TooManyClauses { clauses: usize, m_max: usize },
    #[error("edge label width must be positive")]
    ZeroLabelWidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeKind {
    PositiveLiteral,
    NegativeLiteral,
    Output,
}

impl NodeKind {
    pub const LABEL_DIM: usize = 3;

    /// One-hot over {positive, negative, output}.
    pub fn label(self) -> [f64; 3] {
        let mut l = [0.0; 3];
        l[self as usize] = 1.0;
        l
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EdgeKind {
    ClauseCooccurrence,
    SpecialVariableLink,
    OutputLink,
}

impl EdgeKind {
    pub const COUNT: usize = 3;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub kind: NodeKind,
    #[serde(rename = "var")]
    pub var_index: Option<u32>,
}

/// Undirected edge stored once with `u < v`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub u: usize,
    pub v: usize,
    pub kind: EdgeKind,
    /// 0-based indices of the clauses both endpoints occur in.
    pub ones: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodeOptions {
    /// Edge label width: the largest clause count considered.
    pub m_max: usize,
    /// Replace the per-clause indicator vector by a single shared-clause count.
    pub compress_edge_labels: bool,
}

impl EncodeOptions {
    pub fn new(m_max: usize) -> Self {
        Self { m_max, compress_edge_labels: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarVarGraph {
    pub num_vars: usize,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    pub output_node: usize,
    #[serde(rename = "m")]
    pub edge_label_dim: usize,
    #[serde(default)]
    pub compress_edge_labels: bool,
}

impl VarVarGraph {
    pub fn literal_node(&self, lit: Literal) -> usize {
        literal_node(self.num_vars, lit)
    }

    /// Width of the dense edge label: clause part plus one flag per edge kind.
    pub fn label_width(&self) -> usize {
        self.clause_label_width() + EdgeKind::COUNT
    }

    fn clause_label_width(&self) -> usize {
        if self.compress_edge_labels {
            1
        } else {
            self.edge_label_dim
        }
    }

    /// Nonzero entries of an edge's label, in increasing index order.
    pub fn sparse_label(&self, edge: &GraphEdge) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = if self.compress_edge_labels {
            if edge.ones.is_empty() {
                vec![]
            } else {
                vec![(0, edge.ones.len() as f64)]
            }
        } else {
            edge.ones.iter().map(|&i| (i, 1.0)).collect()
        };
        out.push((self.clause_label_width() + edge.kind as usize, 1.0));
        out
    }

    pub fn dense_label(&self, edge: &GraphEdge) -> Vec<f64> {
        let mut out = vec![0.0; self.label_width()];
        for (i, x) in self.sparse_label(edge) {
            out[i] = x;
        }
        out
    }

    pub fn find_edge(&self, a: usize, b: usize, kind: EdgeKind) -> Option<&GraphEdge> {
        let (u, v) = (a.min(b), a.max(b));
        self.edges.iter().find(|e| e.u == u && e.v == v && e.kind == kind)
    }

    /// Debug dump: `{nodes, edges, output_node, m}`.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Dump<'a> {
            nodes: &'a [GraphNode],
            edges: &'a [GraphEdge],
            output_node: usize,
            m: usize,
        }
        serde_json::to_string(&Dump {
            nodes: &self.nodes,
            edges: &self.edges,
            output_node: self.output_node,
            m: self.edge_label_dim,
        })
        .expect("graph serializes")
    }
}

fn literal_node(num_vars: usize, lit: Literal) -> usize {
    lit.index() + if lit.negated { num_vars } else { 0 }
}

/// Builds the variable-variable graph of `formula`.
///
/// Node ids: positive literals of variables `1..=n` are `0..n`, negative
/// literals are `n..2n`, the output node is `2n`. Edges come in three runs:
/// special edges by variable, co-occurrence edges sorted by endpoints, then
/// output links by literal node.
pub fn encode_var_var(formula: &CnfFormula, options: EncodeOptions) -> Result<VarVarGraph, GraphError> {
    if options.m_max == 0 {
        return Err(GraphError::ZeroLabelWidth);
    }
    if formula.clauses.len() > options.m_max {
        return Err(GraphError::TooManyClauses { clauses: formula.clauses.len(), m_max: options.m_max });
    }
    let n = formula.num_vars;
    let output_node = 2 * n;

    let mut nodes = Vec::with_capacity(2 * n + 1);
    for negated in [false, true] {
        for var in 1..=n as u32 {
            let kind = if negated { NodeKind::NegativeLiteral } else { NodeKind::PositiveLiteral };
            nodes.push(GraphNode { id: nodes.len(), kind, var_index: Some(var) });
        }
    }
    nodes.push(GraphNode { id: output_node, kind: NodeKind::Output, var_index: None });

    let mut edges: Vec<GraphEdge> =
        (0..n).map(|v| GraphEdge { u: v, v: n + v, kind: EdgeKind::SpecialVariableLink, ones: vec![] }).collect();

    let mut shared: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (ci, clause) in formula.clauses.iter().enumerate() {
        let mut ids: Vec<usize> = clause.literals.iter().map(|&l| literal_node(n, l)).collect();
        ids.sort_unstable();
        ids.dedup();
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                shared.entry((a, b)).or_default().push(ci);
            }
        }
    }
    edges.extend(shared.into_iter().map(|((u, v), ones)| GraphEdge { u, v, kind: EdgeKind::ClauseCooccurrence, ones }));
    edges.extend((0..2 * n).map(|u| GraphEdge { u, v: output_node, kind: EdgeKind::OutputLink, ones: vec![] }));

    Ok(VarVarGraph {
        num_vars: n,
        nodes,
        edges,
        output_node,
        edge_label_dim: options.m_max,
        compress_edge_labels: options.compress_edge_labels,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub cooccurrence_edges: usize,
    /// `degree -> number of nodes with that degree`.
    pub degree_histogram: BTreeMap<usize, usize>,
    /// Largest degree of a literal node counting only literal-literal edges.
    pub max_literal_degree: usize,
}

pub fn graph_stats(graph: &VarVarGraph) -> GraphStats {
    let mut degree = vec![0usize; graph.nodes.len()];
    let mut literal_degree = vec![0usize; graph.nodes.len()];
    for e in &graph.edges {
        degree[e.u] += 1;
        degree[e.v] += 1;
        if e.kind != EdgeKind::OutputLink {
            literal_degree[e.u] += 1;
            literal_degree[e.v] += 1;
        }
    }
    let mut degree_histogram = BTreeMap::new();
    for d in degree {
        *degree_histogram.entry(d).or_insert(0) += 1;
    }
    GraphStats {
        nodes: graph.nodes.len(),
        edges: graph.edges.len(),
        cooccurrence_edges: graph.edges.iter().filter(|e| e.kind == EdgeKind::ClauseCooccurrence).count(),
        degree_histogram,
        max_literal_degree: literal_degree.into_iter().max().unwrap_or(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::fixtures::sample_formula;
    use crate::cnf::{generate_random_3sat, Clause};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn pos(v: u32) -> Literal {
        Literal::positive(v)
    }
    fn neg(v: u32) -> Literal {
        Literal::negative(v)
    }

    fn clause_part(g: &VarVarGraph, e: &GraphEdge) -> Vec<f64> {
        g.dense_label(e)[..g.edge_label_dim].to_vec()
    }

    #[test]
    fn sample_formula_graph() {
        let g = encode_var_var(&sample_formula(), EncodeOptions::new(3)).unwrap();
        assert_eq!(g.nodes.len(), 9);
        assert_eq!(g.output_node, 8);
        let cooc = |a, b| g.find_edge(g.literal_node(a), g.literal_node(b), EdgeKind::ClauseCooccurrence).unwrap();
        assert_eq!(clause_part(&g, cooc(pos(1), neg(2))), vec![1.0, 0.0, 0.0]);
        assert_eq!(clause_part(&g, cooc(pos(2), pos(3))), vec![0.0, 1.0, 0.0]);
        assert_eq!(clause_part(&g, cooc(neg(3), pos(4))), vec![0.0, 0.0, 1.0]);
        assert_eq!(clause_part(&g, cooc(pos(1), pos(4))), vec![1.0, 0.0, 0.0]);
        assert_eq!(clause_part(&g, cooc(neg(2), pos(4))), vec![1.0, 0.0, 0.0]);
        let specials: Vec<_> = g.edges.iter().filter(|e| e.kind == EdgeKind::SpecialVariableLink).collect();
        assert_eq!(specials.len(), 4);
        let stats = graph_stats(&g);
        assert_eq!(stats.nodes, 9);
        assert_eq!(stats.cooccurrence_edges, 5);
        assert_eq!(stats.edges, 4 + 5 + 8);
    }

    #[test]
    fn labels_carry_kind_flags() {
        let g = encode_var_var(&sample_formula(), EncodeOptions::new(3)).unwrap();
        let special = g.find_edge(0, 4, EdgeKind::SpecialVariableLink).unwrap();
        assert_eq!(g.dense_label(special), vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let link = g.find_edge(0, 8, EdgeKind::OutputLink).unwrap();
        assert_eq!(g.dense_label(link), vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let cooc = g.find_edge(0, 5, EdgeKind::ClauseCooccurrence).unwrap();
        assert_eq!(g.dense_label(cooc), vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_formula_graph() {
        let g = encode_var_var(&CnfFormula::new(2, vec![]), EncodeOptions::new(1)).unwrap();
        assert_eq!(g.nodes.len(), 5);
        assert_eq!(g.edges.iter().filter(|e| e.kind == EdgeKind::SpecialVariableLink).count(), 2);
        assert_eq!(g.edges.iter().filter(|e| e.kind == EdgeKind::OutputLink).count(), 4);
        assert_eq!(g.edges.len(), 6);
        let stats = graph_stats(&g);
        assert_eq!(stats.max_literal_degree, 1);
        assert_eq!(stats.degree_histogram.values().sum::<usize>(), 5);
    }

    #[test]
    fn shared_clauses_set_multiple_entries() {
        let f = CnfFormula::from_dimacs_clauses(4, &[&[1, 2, 3], &[-1, 4, 3], &[1, 2, -4], &[-2, -3, 4]]);
        let g = encode_var_var(&f, EncodeOptions::new(4)).unwrap();
        let e = g.find_edge(g.literal_node(pos(1)), g.literal_node(pos(2)), EdgeKind::ClauseCooccurrence).unwrap();
        assert_eq!(clause_part(&g, e), vec![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn compressed_labels_count_shared_clauses() {
        let f = CnfFormula::from_dimacs_clauses(3, &[&[1, 2, 3], &[1, 2, -3]]);
        let g = encode_var_var(&f, EncodeOptions { m_max: 2, compress_edge_labels: true }).unwrap();
        assert_eq!(g.label_width(), 4);
        let e = g.find_edge(0, 1, EdgeKind::ClauseCooccurrence).unwrap();
        assert_eq!(g.dense_label(e), vec![2.0, 1.0, 0.0, 0.0]);
        let s = g.find_edge(0, 3, EdgeKind::SpecialVariableLink).unwrap();
        assert_eq!(g.dense_label(s), vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn clause_count_limit() {
        assert_eq!(
            encode_var_var(&sample_formula(), EncodeOptions::new(2)),
            Err(GraphError::TooManyClauses { clauses: 3, m_max: 2 })
        );
        assert_eq!(encode_var_var(&sample_formula(), EncodeOptions::new(0)), Err(GraphError::ZeroLabelWidth));
    }

    #[test]
    fn dump_has_expected_fields() {
        let g = encode_var_var(&sample_formula(), EncodeOptions::new(3)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
        assert_eq!(v["m"], 3);
        assert_eq!(v["output_node"], 8);
        assert_eq!(v["nodes"][0]["kind"], "POSITIVE_LITERAL");
        assert_eq!(v["nodes"][0]["var"], 1);
        assert!(v["nodes"][8]["var"].is_null());
        assert_eq!(v["edges"][0]["kind"], "SPECIAL_VARIABLE_LINK");
        assert!(v["edges"].as_array().unwrap().iter().any(|e| e["ones"] == serde_json::json!([0])));
    }

    /// Literal-node pairs and their shared clauses, straight from the clauses.
    fn reference_pairs(f: &CnfFormula) -> BTreeMap<(usize, usize), BTreeSet<usize>> {
        let mut out: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
        for (ci, c) in f.clauses.iter().enumerate() {
            for a in &c.literals {
                for b in &c.literals {
                    let (x, y) = (literal_node(f.num_vars, *a), literal_node(f.num_vars, *b));
                    if x < y {
                        out.entry((x, y)).or_default().insert(ci);
                    }
                }
            }
        }
        out
    }

    fn cooccurrence_map(g: &VarVarGraph) -> BTreeMap<(usize, usize), BTreeSet<usize>> {
        g.edges
            .iter()
            .filter(|e| e.kind == EdgeKind::ClauseCooccurrence)
            .map(|e| ((e.u, e.v), e.ones.iter().copied().collect()))
            .collect()
    }

    proptest! {
        #[test]
        fn invariants_hold(n in 3usize..12, m in 0usize..40, seed in any::<u64>()) {
            let f = generate_random_3sat(n, m, seed).unwrap();
            let g = encode_var_var(&f, EncodeOptions::new(m.max(1))).unwrap();
            prop_assert_eq!(g.nodes.len(), 2 * n + 1);
            for v in 0..n {
                let specials = g.edges.iter()
                    .filter(|e| e.kind == EdgeKind::SpecialVariableLink && e.u == v && e.v == n + v)
                    .count();
                prop_assert_eq!(specials, 1);
            }
            for e in &g.edges {
                prop_assert!(e.u < e.v);
                if e.kind == EdgeKind::ClauseCooccurrence {
                    prop_assert!(!e.ones.is_empty());
                }
            }
            prop_assert_eq!(cooccurrence_map(&g), reference_pairs(&f));
            let stats = graph_stats(&g);
            prop_assert_eq!(stats.degree_histogram.values().sum::<usize>(), stats.nodes);
        }

        #[test]
        fn clause_order_only_moves_label_entries(n in 3usize..10, m in 1usize..30, seed in any::<u64>(), rot in 0usize..30) {
            let f = generate_random_3sat(n, m, seed).unwrap();
            let mut clauses = f.clauses.clone();
            clauses.rotate_left(rot % m);
            let h = CnfFormula::new(n, clauses);
            let gf = encode_var_var(&f, EncodeOptions::new(m)).unwrap();
            let gh = encode_var_var(&h, EncodeOptions::new(m)).unwrap();
            let edges = |g: &VarVarGraph| g.edges.iter().map(|e| (e.u, e.v, e.kind, e.ones.len())).collect::<Vec<_>>();
            prop_assert_eq!(edges(&gf), edges(&gh));
        }

        #[test]
        fn renaming_variables_gives_isomorphic_graph(n in 3usize..10, m in 1usize..30, seed in any::<u64>(), shift in 1usize..10) {
            let f = generate_random_3sat(n, m, seed).unwrap();
            let rename = |v: u32| ((v as usize - 1 + shift) % n) as u32 + 1;
            let h = CnfFormula::new(n, f.clauses.iter().map(|c| Clause::new(
                c.literals.iter().map(|l| Literal { var: rename(l.var), negated: l.negated }).collect()
            )).collect());
            let gf = encode_var_var(&f, EncodeOptions::new(m)).unwrap();
            let gh = encode_var_var(&h, EncodeOptions::new(m)).unwrap();
            let map_node = |id: usize| if id == 2 * n { id } else {
                let (base, v) = (id / n * n, id % n);
                base + (v + shift) % n
            };
            let canon = |g: &VarVarGraph, map: &dyn Fn(usize) -> usize| {
                let mut s: Vec<_> = g.edges.iter().map(|e| {
                    let (a, b) = (map(e.u), map(e.v));
                    (a.min(b), a.max(b), e.kind, e.ones.clone())
                }).collect();
                s.sort();
                s
            };
            prop_assert_eq!(canon(&gf, &map_node), canon(&gh, &|x| x));
        }

        #[test]
        fn different_cooccurrences_give_different_graphs(n in 3usize..8, seed in any::<u64>()) {
            let f = generate_random_3sat(n, 6, seed).unwrap();
            let g = generate_random_3sat(n, 6, seed.wrapping_add(1)).unwrap();
            let ef = encode_var_var(&f, EncodeOptions::new(6)).unwrap();
            let eg = encode_var_var(&g, EncodeOptions::new(6)).unwrap();
            if reference_pairs(&f) != reference_pairs(&g) {
                prop_assert_ne!(ef, eg);
            }
        }
    }
}
