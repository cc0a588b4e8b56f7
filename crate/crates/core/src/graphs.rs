//! Graph post-processing: moralization, Markov-equivalence testing,
//! edge-accuracy evaluation against a ground truth, and DOT export.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::Dag;

/// An undirected graph with canonically stored (low, high) edge pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    p: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl UndirectedGraph {
    pub fn new(p: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= p {
                return Err(Error::NodeOutOfRange { index: a, p });
            }
            if b >= p {
                return Err(Error::NodeOutOfRange { index: b, p });
            }
            if a == b {
                return Err(Error::InvalidParam("self-loops are not allowed".into()));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Self { p, edges: set })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in ascending canonical order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }
}

/// Skeleton and estimated-vs-truth counts on unordered adjacencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeAccuracy {
    pub correct: usize,
    pub spurious: usize,
    pub missing: usize,
}

/// Undirected skeleton: every directed edge with its orientation dropped.
pub fn skeleton(dag: &Dag) -> UndirectedGraph {
    UndirectedGraph::new(dag.p(), dag.edges()).expect("dag edges are valid")
}

/// Moral graph: the skeleton plus an edge between every pair of nodes
/// sharing a child.
pub fn moralize(dag: &Dag) -> UndirectedGraph {
    let mut edges: Vec<(usize, usize)> = dag.edges().collect();
    for parents in dag.parent_sets() {
        for i in 0..parents.len() {
            for j in (i + 1)..parents.len() {
                edges.push((parents[i], parents[j]));
            }
        }
    }
    UndirectedGraph::new(dag.p(), edges).expect("dag edges are valid")
}

/// Unshielded colliders a→c←b with a, b nonadjacent,
/// reported as (a, b, c) with a < b.
fn v_structures(dag: &Dag) -> BTreeSet<(usize, usize, usize)> {
    let skel = skeleton(dag);
    let mut out = BTreeSet::new();
    for (c, parents) in dag.parent_sets().iter().enumerate() {
        for i in 0..parents.len() {
            for j in (i + 1)..parents.len() {
                let (a, b) = (parents[i], parents[j]);
                if !skel.has_edge(a, b) {
                    out.insert((a, b, c));
                }
            }
        }
    }
    out
}

/// True iff the two DAGs share skeleton and v-structures, i.e. encode the
/// same conditional-independence statements.
pub fn markov_equivalent(a: &Dag, b: &Dag) -> Result<bool> {
    if a.p() != b.p() {
        return Err(Error::Dimension(format!(
            "graphs have {} and {} nodes",
            a.p(),
            b.p()
        )));
    }
    Ok(skeleton(a) == skeleton(b) && v_structures(a) == v_structures(b))
}

/// Skeleton comparison of an estimate against the truth: orientations are
/// deliberately ignored.
pub fn edge_accuracy(estimated: &Dag, truth: &Dag) -> Result<EdgeAccuracy> {
    if estimated.p() != truth.p() {
        return Err(Error::Dimension(format!(
            "graphs have {} and {} nodes",
            estimated.p(),
            truth.p()
        )));
    }
    let est = skeleton(estimated);
    let tru = skeleton(truth);
    let correct = est.edges().filter(|&(a, b)| tru.has_edge(a, b)).count();
    Ok(EdgeAccuracy {
        correct,
        spurious: est.edge_count() - correct,
        missing: tru.edge_count() - correct,
    })
}

/// Directed-edge comparison, for sensitivity analysis.
pub fn edge_accuracy_directed(estimated: &Dag, truth: &Dag) -> Result<EdgeAccuracy> {
    if estimated.p() != truth.p() {
        return Err(Error::Dimension(format!(
            "graphs have {} and {} nodes",
            estimated.p(),
            truth.p()
        )));
    }
    let correct = estimated
        .edges()
        .filter(|&(u, v)| truth.has_edge(u, v))
        .count();
    Ok(EdgeAccuracy {
        correct,
        spurious: estimated.edge_count() - correct,
        missing: truth.edge_count() - correct,
    })
}

/// Quotes a name unless it is a valid bare DOT identifier.
fn dot_id(name: &str) -> String {
    let bare_word = !name.is_empty()
        && !name.chars().next().unwrap().is_ascii_digit()
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && ![
            "graph", "digraph", "node", "edge", "subgraph", "strict",
        ]
        .contains(&name.to_ascii_lowercase().as_str());
    let numeral = !name.is_empty() && name.chars().all(|c| c.is_ascii_digit());
    if bare_word || numeral {
        name.to_string()
    } else {
        let escaped = name.replace('\\', "\\\\").replace('"', "\\\"");
        format!("\"{escaped}\"")
    }
}

fn dot_body(
    names: &[String],
    p: usize,
    keyword: &str,
    connector: &str,
    edges: impl Iterator<Item = (usize, usize)>,
) -> Result<String> {
    if names.len() != p {
        return Err(Error::Dimension(format!(
            "{} names for {} nodes",
            names.len(),
            p
        )));
    }
    let mut out = String::new();
    let _ = writeln!(out, "{keyword} {{");
    for name in names {
        let _ = writeln!(out, "  {};", dot_id(name));
    }
    for (u, v) in edges {
        let _ = writeln!(out, "  {} {} {};", dot_id(&names[u]), connector, dot_id(&names[v]));
    }
    out.push_str("}\n");
    Ok(out)
}

/// DOT source for a DAG: a `digraph` with one `->` line per edge, nodes and
/// edges in ascending order.
pub fn dag_to_dot(dag: &Dag, names: &[String]) -> Result<String> {
    dot_body(names, dag.p(), "digraph", "->", dag.edges())
}

/// DOT source for an undirected graph: a `graph` with `--` edge lines.
pub fn undirected_to_dot(graph: &UndirectedGraph, names: &[String]) -> Result<String> {
    dot_body(names, graph.p(), "graph", "--", graph.edges())
}
