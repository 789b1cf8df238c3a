//! Graph-state LSTM encoder.
//!
//! Every node keeps a hidden/cell pair. One transition step updates all nodes
//! at once from the previous state of their neighbours and the
//! representations of their incident edges. Step `t` reads only `g_{t-1}`, so
//! after `T` steps a node has seen exactly the nodes within undirected
//! distance `T`.

use std::sync::Arc;

use amrgen_autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use rand::Rng;

use crate::amr::AmrGraph;
use crate::config::GraphDirection;
use crate::error::Result;
use crate::lstm::glorot;

/// Per-node neighbour lists, each capped to the first `cap` edges in
/// declaration order. The edge and node lists of a direction use the same
/// edge subset.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighborhoods {
    pub in_edges: Arc<Vec<Vec<usize>>>,
    pub in_nodes: Arc<Vec<Vec<usize>>>,
    pub out_edges: Arc<Vec<Vec<usize>>>,
    pub out_nodes: Arc<Vec<Vec<usize>>>,
}

impl Neighborhoods {
    /// `edges` are `(source, target)` pairs over `nodes` nodes.
    pub fn new(nodes: usize, edges: &[(usize, usize)], cap: usize) -> Self {
        let mut in_edges = vec![Vec::new(); nodes];
        let mut in_nodes = vec![Vec::new(); nodes];
        let mut out_edges = vec![Vec::new(); nodes];
        let mut out_nodes = vec![Vec::new(); nodes];
        for (k, &(s, t)) in edges.iter().enumerate() {
            if in_edges[t].len() < cap {
                in_edges[t].push(k);
                in_nodes[t].push(s);
            }
            if out_edges[s].len() < cap {
                out_edges[s].push(k);
                out_nodes[s].push(t);
            }
        }
        Neighborhoods {
            in_edges: Arc::new(in_edges),
            in_nodes: Arc::new(in_nodes),
            out_edges: Arc::new(out_edges),
            out_nodes: Arc::new(out_nodes),
        }
    }

    pub fn from_graph(g: &AmrGraph, cap: usize) -> Self {
        let edges: Vec<(usize, usize)> = g.edges().iter().map(|e| (e.source, e.target)).collect();
        Self::new(g.node_count(), &edges, cap)
    }

    pub fn node_count(&self) -> usize {
        self.in_edges.len()
    }
}

/// Everything the encoder needs about one graph, as ids.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphInput {
    pub concepts: Vec<usize>,
    pub chars: Vec<Vec<usize>>,
    pub edge_labels: Vec<usize>,
    pub edge_sources: Vec<usize>,
    pub neighborhoods: Neighborhoods,
}

/// `{h_t^j}` and `{c_t^j}` as `N × H` matrices.
#[derive(Clone, Copy, Debug)]
pub struct GraphState {
    pub h: Var,
    pub c: Var,
    pub step: usize,
}

#[derive(Clone, Debug)]
pub struct GraphEncoder {
    pub label_embed: ParamId,
    /// `W4`, `b4`.
    pub edge_w: ParamId,
    pub edge_b: ParamId,
    /// Gate blocks laid out `[i | o | f | u]`.
    pub w_in: ParamId,
    pub w_out: ParamId,
    pub u_in: ParamId,
    pub u_out: ParamId,
    pub b: ParamId,
    pub h0: ParamId,
    pub hidden: usize,
    pub edge_dim: usize,
    pub direction: GraphDirection,
}

impl GraphEncoder {
    /// `source_dim` is the width of the source-node features `[e_i (; h_i^c)]`.
    pub fn new(
        store: &mut ParamStore,
        labels: usize,
        label_dim: usize,
        source_dim: usize,
        hidden: usize,
        direction: GraphDirection,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let edge_dim = hidden;
        Ok(GraphEncoder {
            label_embed: store.add("graph.label_embed", glorot(rng, labels, label_dim))?,
            edge_w: store.add("graph.edge.w", glorot(rng, label_dim + source_dim, edge_dim))?,
            edge_b: store.add("graph.edge.b", Tensor::zeros(1, edge_dim))?,
            w_in: store.add("graph.w_in", glorot(rng, edge_dim, 4 * hidden))?,
            w_out: store.add("graph.w_out", glorot(rng, edge_dim, 4 * hidden))?,
            u_in: store.add("graph.u_in", glorot(rng, hidden, 4 * hidden))?,
            u_out: store.add("graph.u_out", glorot(rng, hidden, 4 * hidden))?,
            b: store.add("graph.b", Tensor::zeros(1, 4 * hidden))?,
            h0: store.add("graph.h0", Tensor::zeros(1, hidden))?,
            hidden,
            edge_dim,
            direction,
        })
    }

    fn uses_in(&self) -> bool {
        self.direction != GraphDirection::OutgoingOnly
    }

    fn uses_out(&self) -> bool {
        self.direction != GraphDirection::IncomingOnly
    }

    /// `x_{i,j}^l = W4 [e_l; e_i (; h_i^c)] + b4`, one row per edge, or `None`
    /// for an edgeless graph. `node_features` holds `[e_i (; h_i^c)]` per node.
    pub fn edge_reprs(&self, tape: &mut Tape, input: &GraphInput, node_features: Var) -> Result<Option<Var>> {
        if input.edge_labels.is_empty() {
            return Ok(None);
        }
        let table = tape.param(self.label_embed);
        let labels = tape.gather_rows(table, input.edge_labels.clone())?;
        let sources = tape.gather_rows(node_features, input.edge_sources.clone())?;
        let cat = tape.concat_cols(&[labels, sources])?;
        let (w, b) = (tape.param(self.edge_w), tape.param(self.edge_b));
        let x = tape.affine(cat, w, b)?;
        Ok(Some(tape.dropout(x)))
    }

    /// Initial state: every `h` equals the shared `h0`, every `c` is zero.
    pub fn initial_state(&self, tape: &mut Tape, nodes: usize) -> Result<GraphState> {
        let h0 = tape.param(self.h0);
        let h = tape.gather_rows(h0, vec![0; nodes])?;
        let c = tape.constant(Tensor::zeros(nodes, self.hidden));
        Ok(GraphState { h, c, step: 0 })
    }

    /// Edge-input part of every gate pre-activation plus the bias; constant
    /// across steps, so computed once.
    fn edge_preactivation(&self, tape: &mut Tape, nb: &Neighborhoods, edges: Option<Var>) -> Result<Var> {
        let n = nb.node_count();
        let b = tape.param(self.b);
        let Some(edges) = edges else {
            let zero = tape.constant(Tensor::zeros(n, 4 * self.hidden));
            return Ok(tape.add(zero, b)?);
        };
        let mut terms = Vec::new();
        if self.uses_in() {
            let xi = tape.gather_sum(edges, nb.in_edges.clone())?;
            let w = tape.param(self.w_in);
            terms.push(tape.matmul(xi, w)?);
        }
        if self.uses_out() {
            let xo = tape.gather_sum(edges, nb.out_edges.clone())?;
            let w = tape.param(self.w_out);
            terms.push(tape.matmul(xo, w)?);
        }
        let sum = tape.sum_list(&terms)?;
        Ok(tape.add(sum, b)?)
    }

    /// One synchronous update of every node from `prev`.
    pub fn transition_step(
        &self,
        tape: &mut Tape,
        nb: &Neighborhoods,
        pre: Var,
        prev: GraphState,
    ) -> Result<GraphState> {
        let n = self.hidden;
        let mut terms = vec![pre];
        if self.uses_in() {
            let hi = tape.gather_sum(prev.h, nb.in_nodes.clone())?;
            let u = tape.param(self.u_in);
            terms.push(tape.matmul(hi, u)?);
        }
        if self.uses_out() {
            let ho = tape.gather_sum(prev.h, nb.out_nodes.clone())?;
            let u = tape.param(self.u_out);
            terms.push(tape.matmul(ho, u)?);
        }
        let z = tape.sum_list(&terms)?;
        let gates = tape.sigmoid(z);
        let i = tape.slice_cols(gates, 0, n)?;
        let o = tape.slice_cols(gates, n, n)?;
        let f = tape.slice_cols(gates, 2 * n, n)?;
        let u = tape.slice_cols(gates, 3 * n, n)?;
        let keep = tape.mul(f, prev.c)?;
        let write = tape.mul(i, u)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        Ok(GraphState {
            h,
            c,
            step: prev.step + 1,
        })
    }

    /// `steps` transitions from the initial state over precomputed edge
    /// representations.
    pub fn transitions(
        &self,
        tape: &mut Tape,
        nb: &Neighborhoods,
        edges: Option<Var>,
        steps: usize,
    ) -> Result<GraphState> {
        let mut state = self.initial_state(tape, nb.node_count())?;
        if steps == 0 {
            return Ok(state);
        }
        let pre = self.edge_preactivation(tape, nb, edges)?;
        for _ in 0..steps {
            state = self.transition_step(tape, nb, pre, state)?;
        }
        Ok(state)
    }

    pub fn encode(&self, tape: &mut Tape, input: &GraphInput, node_features: Var, steps: usize) -> Result<GraphState> {
        let edges = self.edge_reprs(tape, input, node_features)?;
        self.transitions(tape, &input.neighborhoods, edges, steps)
    }
}

/// `a_j = [h_T^j; x_j]`.
pub fn graph_attention_memory(tape: &mut Tape, state: &GraphState, x: Var) -> Result<Var> {
    Ok(tape.concat_cols(&[state.h, x])?)
}
