use std::collections::BTreeMap;

use super::{AmrError, AmrGraph, LinearizedAmr};

/// Longest undirected shortest-path distance between two nodes.
pub fn graph_diameter(g: &AmrGraph) -> Result<usize, AmrError> {
    let adj = g.undirected_adjacency();
    let mut best = 0;
    for start in 0..g.node_count() {
        for d in g.distances_from(start, &adj) {
            best = best.max(d.ok_or(AmrError::Disconnected)?);
        }
    }
    Ok(best)
}

/// Smallest index gap between an occurrence of `a` and an occurrence of `b`.
pub fn token_distance(lin: &LinearizedAmr, a: &str, b: &str) -> Result<usize, AmrError> {
    let positions = |t: &str| -> Result<Vec<usize>, AmrError> {
        let p: Vec<usize> = lin
            .tokens
            .iter()
            .enumerate()
            .filter(|(_, tok)| tok.as_str() == t)
            .map(|(i, _)| i)
            .collect();
        if p.is_empty() {
            Err(AmrError::TokenAbsent(t.to_string()))
        } else {
            Ok(p)
        }
    };
    let (pa, pb) = (positions(a)?, positions(b)?);
    Ok(pa
        .iter()
        .flat_map(|&i| pb.iter().map(move |&j| i.abs_diff(j)))
        .min()
        .expect("both nonempty"))
}

/// Cumulative distribution of diameters: `(d, fraction of graphs with
/// diameter ≤ d)` for every diameter that occurs, ascending.
pub fn diameter_histogram(corpus: &[AmrGraph]) -> Result<Vec<(usize, f64)>, AmrError> {
    if corpus.is_empty() {
        return Err(AmrError::EmptyCorpus);
    }
    let mut counts = BTreeMap::new();
    for g in corpus {
        *counts.entry(graph_diameter(g)?).or_insert(0usize) += 1;
    }
    let total = corpus.len() as f64;
    let mut running = 0;
    Ok(counts
        .into_iter()
        .map(|(d, c)| {
            running += c;
            (d, running as f64 / total)
        })
        .collect())
}
