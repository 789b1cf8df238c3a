//! AMR graphs: PENMAN parsing, depth-first linearization and graph statistics.

mod linearize;
mod penman;
mod stats;

use std::collections::{HashSet, VecDeque};
use std::fmt;

use thiserror::Error;

pub use linearize::{linearize, LinearizedAmr};
pub use penman::parse_penman;
pub use stats::{diameter_histogram, graph_diameter, token_distance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AmrError {
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("graph is not connected")]
    Disconnected,
    #[error("token `{0}` does not occur in the linearization")]
    TokenAbsent(String),
    #[error("empty corpus")]
    EmptyCorpus,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    /// Variable name, or a generated `#k` id for constants.
    pub id: String,
    /// Concept label as written (`describe-01`), or the literal for constants.
    pub concept: String,
    pub constant: bool,
}

impl Node {
    /// Lowercased surface form used for linearization and copying: quotes and
    /// sense suffixes (`-01`) removed.
    pub fn surface(&self) -> String {
        surface_form(&self.concept, self.constant)
    }
}

pub(crate) fn surface_form(concept: &str, constant: bool) -> String {
    let s = concept.trim_matches('"');
    let s = if constant { s } else { strip_sense(s) };
    s.to_lowercase()
}

fn strip_sense(concept: &str) -> &str {
    match concept.rfind('-') {
        Some(i) if i > 0 && i + 1 < concept.len() && concept[i + 1..].bytes().all(|b| b.is_ascii_digit()) => {
            &concept[..i]
        }
        _ => concept,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub label: String,
}

/// An edge as a `(source index, target index, label)` triple.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EdgeTriple {
    pub source: usize,
    pub target: usize,
    pub label: String,
}

/// A rooted, labelled, directed graph. Nodes and edges keep declaration order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AmrGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    root: usize,
}

impl AmrGraph {
    /// Checks id uniqueness, edge endpoints and self-loops. Connectivity is a
    /// separate check, see [`AmrGraph::is_connected`].
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>, root: usize) -> Result<Self, AmrError> {
        if root >= nodes.len() {
            return Err(AmrError::Invalid(format!("root {} out of range", root)));
        }
        let mut seen = HashSet::new();
        for n in &nodes {
            if !seen.insert(n.id.as_str()) {
                return Err(AmrError::Invalid(format!("duplicate node id `{}`", n.id)));
            }
        }
        for e in &edges {
            if e.source >= nodes.len() || e.target >= nodes.len() {
                return Err(AmrError::Invalid(format!(
                    "edge {} -> {} references a missing node",
                    e.source, e.target
                )));
            }
            if e.source == e.target {
                return Err(AmrError::Invalid(format!(
                    "self-loop on `{}` via :{}",
                    nodes[e.source].id, e.label
                )));
            }
        }
        Ok(AmrGraph { nodes, edges, root })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn outgoing(&self, node: usize) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges.iter().enumerate().filter(move |(_, e)| e.source == node)
    }

    /// One triple per edge, in declaration order.
    pub fn edge_list(&self) -> Vec<EdgeTriple> {
        self.edges
            .iter()
            .map(|e| EdgeTriple {
                source: e.source,
                target: e.target,
                label: e.label.clone(),
            })
            .collect()
    }

    pub(crate) fn undirected_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.source].push(e.target);
            adj[e.target].push(e.source);
        }
        adj
    }

    /// Undirected BFS distances from `start`; `None` for unreachable nodes.
    pub(crate) fn distances_from(&self, start: usize, adj: &[Vec<usize>]) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.nodes.len()];
        dist[start] = Some(0);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap();
            for &v in &adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Every node reachable from the root, ignoring edge direction.
    pub fn is_connected(&self) -> bool {
        let adj = self.undirected_adjacency();
        self.distances_from(self.root, &adj).iter().all(Option::is_some)
    }
}

impl fmt::Display for AmrGraph {
    /// PENMAN rendering; re-entrant nodes appear as variable references.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(g: &AmrGraph, j: usize, seen: &mut [bool], f: &mut fmt::Formatter<'_>) -> fmt::Result {
            seen[j] = true;
            let n = &g.nodes[j];
            write!(f, "({} / {}", n.id, n.concept)?;
            for (_, e) in g.outgoing(j) {
                write!(f, " :{} ", e.label)?;
                let t = &g.nodes[e.target];
                if t.constant {
                    write!(f, "{}", t.concept)?;
                } else if seen[e.target] {
                    write!(f, "{}", t.id)?;
                } else {
                    go(g, e.target, seen, f)?;
                }
            }
            write!(f, ")")
        }
        let mut seen = vec![false; self.nodes.len()];
        go(self, self.root, &mut seen, f)
    }
}
