use std::fmt;

use super::AmrGraph;

/// Token sequence produced by [`linearize`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearizedAmr {
    pub tokens: Vec<String>,
    /// For each token, the node it names, if it is a concept token.
    pub node_of_token: Vec<Option<usize>>,
}

impl LinearizedAmr {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl fmt::Display for LinearizedAmr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

/// Depth-first serialization from the root.
///
/// Children follow edge-declaration order. A non-root node with outgoing
/// edges is wrapped in `( … )`; leaves and revisited (re-entrant) nodes are
/// a bare concept token.
pub fn linearize(g: &AmrGraph) -> LinearizedAmr {
    let mut out = LinearizedAmr {
        tokens: Vec::new(),
        node_of_token: Vec::new(),
    };
    let mut visited = vec![false; g.node_count()];
    emit(g, g.root(), true, &mut visited, &mut out);
    out
}

fn emit(g: &AmrGraph, j: usize, is_root: bool, visited: &mut [bool], out: &mut LinearizedAmr) {
    visited[j] = true;
    let bracket = !is_root && g.outgoing(j).next().is_some();
    if bracket {
        push(out, "(".into(), None);
    }
    push(out, g.nodes()[j].surface(), Some(j));
    for (_, e) in g.outgoing(j) {
        push(out, format!(":{}", e.label.to_lowercase()), None);
        if visited[e.target] {
            push(out, g.nodes()[e.target].surface(), Some(e.target));
        } else {
            emit(g, e.target, false, visited, out);
        }
    }
    if bracket {
        push(out, ")".into(), None);
    }
}

fn push(out: &mut LinearizedAmr, token: String, node: Option<usize>) {
    out.tokens.push(token);
    out.node_of_token.push(node);
}
