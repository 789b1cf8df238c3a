use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels;
use crate::param::{Gradients, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Smallest argument `log` sees; keeps the loss finite when a probability
/// underflows.
const LOG_FLOOR: f64 = 1e-300;

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulScalar(Var, Var),
    Scale(Var, f64),
    Neg(Var),
    Sigmoid(Var),
    Tanh(Var),
    Log(Var),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Arc<Vec<usize>>),
    GatherSum(Var, Arc<Vec<Vec<usize>>>),
    SumList(Vec<Var>),
    SumAll(Var),
    MeanRows(Var),
    MeanAll(Var),
    Transpose(Var),
    Pick(Var, usize, usize),
    Mask(Var, Tensor),
    CopyScatter(Var, Arc<Vec<Option<usize>>>),
    Interp(Var, Var, Var),
}

struct Node {
    value: Value,
    op: Op,
    needs_grad: bool,
}

struct DropoutState {
    rate: f64,
    rng: ChaCha8Rng,
}

/// Records one forward computation so that vector-Jacobian products can be
/// replayed in reverse.
///
/// Parameters are borrowed from the store rather than copied. A tape is
/// single-use: build it, run the forward pass, call [`Tape::backward`] as
/// often as needed, then drop it.
pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
    dropout: Option<DropoutState>,
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

impl<'s> Tape<'s> {
    /// A tape in evaluation mode: [`Tape::dropout`] is the identity.
    pub fn new(store: &'s ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            dropout: None,
        }
    }

    /// A tape in training mode with inverted dropout at `rate`.
    pub fn with_dropout(store: &'s ParamStore, rate: f64, seed: u64) -> Self {
        let mut tape = Tape::new(store);
        if rate > 0.0 {
            tape.dropout = Some(DropoutState {
                rate,
                rng: ChaCha8Rng::seed_from_u64(seed),
            });
        }
        tape
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn is_training(&self) -> bool {
        self.dropout.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.store.value(*id),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// The recorded node for a stored parameter; repeated calls return the
    /// same handle so gradients accumulate in one place.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let frozen = self.store.get(id).frozen;
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param(id),
            needs_grad: !frozen,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(shape_err("matmul", format!("{:?} x {:?}", sa, sb)));
        }
        let out = kernels::matmul(self.value(a), self.value(b));
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// Elementwise sum. `b` may also be a single row, broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let ng = self.needs(a) || self.needs(b);
        if sa == sb {
            let mut out = self.value(a).clone();
            out.add_assign(self.value(b));
            Ok(self.push(out, Op::Add(a, b), ng))
        } else if sb.0 == 1 && sa.1 == sb.1 {
            let mut out = self.value(a).clone();
            let brow = self.value(b).data().to_vec();
            for r in 0..sa.0 {
                for (o, v) in out.row_slice_mut(r).iter_mut().zip(&brow) {
                    *o += v;
                }
            }
            Ok(self.push(out, Op::AddRow(a, b), ng))
        } else {
            Err(shape_err("add", format!("{:?} + {:?}", sa, sb)))
        }
    }

    /// `x · w + b` with `b` broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add(xw, b)
    }

    /// Elementwise product. `b` may also be `1 × 1`, scaling all of `a`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let ng = self.needs(a) || self.needs(b);
        if sa == sb {
            let bv = self.value(b);
            let data = self.value(a).data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
            let out = Tensor::from_vec(sa.0, sa.1, data)?;
            Ok(self.push(out, Op::Mul(a, b), ng))
        } else if sb == (1, 1) {
            let s = self.value(b).data()[0];
            let out = self.value(a).map(|x| x * s);
            Ok(self.push(out, Op::MulScalar(a, b), ng))
        } else {
            Err(shape_err("mul", format!("{:?} * {:?}", sa, sb)))
        }
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        let ng = self.needs(a);
        self.push(out, Op::Scale(a, c), ng)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| -x);
        let ng = self.needs(a);
        self.push(out, Op::Neg(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let ng = self.needs(a);
        self.push(out, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let ng = self.needs(a);
        self.push(out, Op::Tanh(a), ng)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(LOG_FLOOR).ln());
        let ng = self.needs(a);
        self.push(out, Op::Log(a), ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let (r, c) = src.shape();
        let mut out = src.clone();
        for i in 0..r {
            softmax_in_place(out.row_slice_mut(i));
        }
        debug_assert_eq!(out.cols(), c);
        let ng = self.needs(a);
        self.push(out, Op::SoftmaxRows(a), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(&p) => self.shape(p).0,
            None => return Err(shape_err("concat_cols", "no inputs".into())),
        };
        if let Some(&bad) = parts.iter().find(|&&p| self.shape(p).0 != rows) {
            return Err(shape_err(
                "concat_cols",
                format!("row count {} vs {:?}", rows, self.shape(bad)),
            ));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row_slice(r);
                out.row_slice_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = match parts.first() {
            Some(&p) => self.shape(p).1,
            None => return Err(shape_err("concat_rows", "no inputs".into())),
        };
        if let Some(&bad) = parts.iter().find(|&&p| self.shape(p).1 != cols) {
            return Err(shape_err(
                "concat_rows",
                format!("column count {} vs {:?}", cols, self.shape(bad)),
            ));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let rows = data.len() / cols.max(1);
        let out = Tensor::from_vec(rows, cols, data)?;
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), ng))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start + len > c {
            return Err(shape_err(
                "slice_cols",
                format!("[{}, {}) of {:?}", start, start + len, (r, c)),
            ));
        }
        let mut out = Tensor::zeros(r, len);
        for i in 0..r {
            out.row_slice_mut(i)
                .copy_from_slice(&self.value(a).row_slice(i)[start..start + len]);
        }
        let ng = self.needs(a);
        Ok(self.push(out, Op::SliceCols(a, start), ng))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start + len > r {
            return Err(shape_err(
                "slice_rows",
                format!("[{}, {}) of {:?}", start, start + len, (r, c)),
            ));
        }
        let data = self.value(a).data()[start * c..(start + len) * c].to_vec();
        let out = Tensor::from_vec(len, c, data)?;
        let ng = self.needs(a);
        Ok(self.push(out, Op::SliceRows(a, start), ng))
    }

    /// Row lookup, e.g. embedding rows for a token sequence.
    pub fn gather_rows(&mut self, a: Var, indices: Vec<usize>) -> Result<Var> {
        let (r, c) = self.shape(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
            return Err(Error::Index {
                op: "gather_rows",
                index: bad,
                bound: r,
            });
        }
        let src = self.value(a);
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in &indices {
            data.extend_from_slice(src.row_slice(i));
        }
        let out = Tensor::from_vec(indices.len(), c, data)?;
        let ng = self.needs(a);
        Ok(self.push(out, Op::GatherRows(a, Arc::new(indices)), ng))
    }

    /// Output row `j` sums the rows of `a` listed in `groups[j]`; an empty
    /// group yields a zero row.
    pub fn gather_sum(&mut self, a: Var, groups: Arc<Vec<Vec<usize>>>) -> Result<Var> {
        let r = self.shape(a).0;
        for g in groups.iter() {
            if let Some(&bad) = g.iter().find(|&&i| i >= r) {
                return Err(Error::Index {
                    op: "gather_sum",
                    index: bad,
                    bound: r,
                });
            }
        }
        let out = kernels::gather_sum(self.value(a), &groups);
        let ng = self.needs(a);
        Ok(self.push(out, Op::GatherSum(a, groups), ng))
    }

    pub fn sum_list(&mut self, parts: &[Var]) -> Result<Var> {
        let shape = match parts.first() {
            Some(&p) => self.shape(p),
            None => return Err(shape_err("sum_list", "no inputs".into())),
        };
        let mut out = Tensor::zeros(shape.0, shape.1);
        for &p in parts {
            if self.shape(p) != shape {
                return Err(shape_err("sum_list", format!("{:?} vs {:?}", shape, self.shape(p))));
            }
            out.add_assign(self.value(p));
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(out, Op::SumList(parts.to_vec()), ng))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let ng = self.needs(a);
        self.push(out, Op::SumAll(a), ng)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor::scalar(t.sum() / t.len().max(1) as f64);
        let ng = self.needs(a);
        self.push(out, Op::MeanAll(a), ng)
    }

    /// Column-wise mean: `m × n → 1 × n`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if r == 0 {
            return Err(shape_err("mean_rows", "zero rows".into()));
        }
        let src = self.value(a);
        let mut out = Tensor::zeros(1, c);
        for i in 0..r {
            for (o, v) in out.data_mut().iter_mut().zip(src.row_slice(i)) {
                *o += v;
            }
        }
        out.data_mut().iter_mut().for_each(|v| *v /= r as f64);
        let ng = self.needs(a);
        Ok(self.push(out, Op::MeanRows(a), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let ng = self.needs(a);
        self.push(out, Op::Transpose(a), ng)
    }

    /// The `1 × 1` entry at `(row, col)`.
    pub fn pick(&mut self, a: Var, row: usize, col: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if row >= r || col >= c {
            return Err(Error::Index {
                op: "pick",
                index: row * c + col,
                bound: r * c,
            });
        }
        let out = Tensor::scalar(self.value(a).get(row, col));
        let ng = self.needs(a);
        Ok(self.push(out, Op::Pick(a, row, col), ng))
    }

    /// Inverted dropout: zeroes each entry with the tape's rate and scales
    /// survivors by `1 / (1 - rate)`. Identity on an evaluation tape.
    pub fn dropout(&mut self, a: Var) -> Var {
        let Some(state) = self.dropout.as_mut() else {
            return a;
        };
        let (r, c) = match &self.nodes[a.0].value {
            Value::Owned(t) => t.shape(),
            Value::Param(id) => self.store.value(*id).shape(),
        };
        let keep = 1.0 - state.rate;
        let data = (0..r * c)
            .map(|_| if state.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mask = Tensor::from_vec(r, c, data).expect("mask shape");
        self.apply_mask(a, mask).expect("mask matches input")
    }

    /// Multiplies `a` elementwise by a fixed mask that receives no gradient.
    pub fn apply_mask(&mut self, a: Var, mask: Tensor) -> Result<Var> {
        if mask.shape() != self.shape(a) {
            return Err(shape_err(
                "dropout",
                format!("mask {:?} vs {:?}", mask.shape(), self.shape(a)),
            ));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(mask.data())
            .map(|(x, m)| x * m)
            .collect();
        let (r, c) = mask.shape();
        let out = Tensor::from_vec(r, c, data)?;
        let ng = self.needs(a);
        Ok(self.push(out, Op::Mask(a, mask), ng))
    }

    /// Pools a `1 × n` attention row into a distribution over `width` output
    /// slots. Position `i` contributes to slot `map[i]`; unmapped positions are
    /// dropped and the remaining mass is renormalised to sum to one.
    pub fn copy_scatter(&mut self, alpha: Var, map: Arc<Vec<Option<usize>>>, width: usize) -> Result<Var> {
        let (r, n) = self.shape(alpha);
        if r != 1 || n != map.len() {
            return Err(shape_err(
                "copy_scatter",
                format!("attention {:?} vs map of {}", (r, n), map.len()),
            ));
        }
        if let Some(&Some(bad)) = map.iter().find(|m| matches!(m, Some(k) if *k >= width)) {
            return Err(Error::Index {
                op: "copy_scatter",
                index: bad,
                bound: width,
            });
        }
        let a = self.value(alpha).data();
        let z: f64 = map.iter().zip(a).filter(|(m, _)| m.is_some()).map(|(_, v)| v).sum();
        if z <= 0.0 {
            return Err(shape_err("copy_scatter", "no mapped attention mass".into()));
        }
        let mut out = Tensor::zeros(1, width);
        for (m, v) in map.iter().zip(a) {
            if let Some(k) = m {
                out.data_mut()[*k] += v / z;
            }
        }
        let ng = self.needs(alpha);
        Ok(self.push(out, Op::CopyScatter(alpha, map), ng))
    }

    /// `θ · p + (1 − θ) · q` with `θ` a `1 × 1` switch; `p` is zero-padded on
    /// the right to the width of `q`.
    pub fn interpolate(&mut self, theta: Var, p: Var, q: Var) -> Result<Var> {
        let (st, sp, sq) = (self.shape(theta), self.shape(p), self.shape(q));
        if st != (1, 1) || sp.0 != 1 || sq.0 != 1 || sp.1 > sq.1 {
            return Err(shape_err(
                "interpolate",
                format!("theta {:?}, p {:?}, q {:?}", st, sp, sq),
            ));
        }
        let th = self.value(theta).data()[0];
        let pv = self.value(p).data();
        let mut out: Vec<f64> = self.value(q).data().iter().map(|v| (1.0 - th) * v).collect();
        for (o, v) in out.iter_mut().zip(pv) {
            *o += th * v;
        }
        let out = Tensor::row(out);
        let ng = self.needs(theta) || self.needs(p) || self.needs(q);
        Ok(self.push(out, Op::Interp(theta, p, q), ng))
    }

    /// Reverse pass from a `1 × 1` loss. Gradients of every non-frozen
    /// parameter reached are added into `grads`, so repeated calls accumulate.
    pub fn backward(&self, loss: Var, grads: &mut Gradients) -> Result<()> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(Error::NonScalarLoss { rows: r, cols: c });
        }
        if !self.needs(loss) {
            return Ok(());
        }
        let mut adj: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        adj.resize_with(loss.0 + 1, || None);
        adj[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            let out = match &node.value {
                Value::Owned(t) => t,
                Value::Param(id) => self.store.value(*id),
            };
            self.backprop_node(&node.op, out, g, &mut adj, grads);
        }
        Ok(())
    }

    fn accum(&self, adj: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.needs(v) {
            return;
        }
        match &mut adj[v.0] {
            Some(t) => t.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop_node(&self, op: &Op, out: &Tensor, g: Tensor, adj: &mut [Option<Tensor>], grads: &mut Gradients) {
        match op {
            Op::Leaf => {}
            Op::Param(id) => {
                let (r, c) = g.shape();
                grads.slot(*id, r, c).add_assign(&g);
            }
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    let ga = kernels::matmul_a_bt(&g, self.value(*b));
                    self.accum(adj, *a, ga);
                }
                if self.needs(*b) {
                    let gb = kernels::matmul_at_b(self.value(*a), &g);
                    self.accum(adj, *b, gb);
                }
            }
            Op::Add(a, b) => {
                self.accum(adj, *b, g.clone());
                self.accum(adj, *a, g);
            }
            Op::AddRow(a, b) => {
                if self.needs(*b) {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in gb.data_mut().iter_mut().zip(g.row_slice(r)) {
                            *o += v;
                        }
                    }
                    self.accum(adj, *b, gb);
                }
                self.accum(adj, *a, g);
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let ga = zip_map(&g, self.value(*b), |x, y| x * y);
                    self.accum(adj, *a, ga);
                }
                if self.needs(*b) {
                    let gb = zip_map(&g, self.value(*a), |x, y| x * y);
                    self.accum(adj, *b, gb);
                }
            }
            Op::MulScalar(a, s) => {
                if self.needs(*s) {
                    let d: f64 = g.data().iter().zip(self.value(*a).data()).map(|(x, y)| x * y).sum();
                    self.accum(adj, *s, Tensor::scalar(d));
                }
                if self.needs(*a) {
                    let sv = self.value(*s).data()[0];
                    self.accum(adj, *a, g.map(|x| x * sv));
                }
            }
            Op::Scale(a, c) => self.accum(adj, *a, g.map(|x| x * c)),
            Op::Neg(a) => self.accum(adj, *a, g.map(|x| -x)),
            Op::Sigmoid(a) => self.accum(adj, *a, zip_map(&g, out, |gv, y| gv * y * (1.0 - y))),
            Op::Tanh(a) => self.accum(adj, *a, zip_map(&g, out, |gv, y| gv * (1.0 - y * y))),
            Op::Log(a) => {
                let ga = zip_map(&g, self.value(*a), |gv, x| gv / x.max(LOG_FLOOR));
                self.accum(adj, *a, ga);
            }
            Op::SoftmaxRows(a) => {
                let mut ga = Tensor::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let (gr, yr) = (g.row_slice(r), out.row_slice(r));
                    let dot: f64 = gr.iter().zip(yr).map(|(x, y)| x * y).sum();
                    for ((o, gv), y) in ga.row_slice_mut(r).iter_mut().zip(gr).zip(yr) {
                        *o = y * (gv - dot);
                    }
                }
                self.accum(adj, *a, ga);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (pr, pc) = self.shape(p);
                    if self.needs(p) {
                        let mut gp = Tensor::zeros(pr, pc);
                        for r in 0..pr {
                            gp.row_slice_mut(r).copy_from_slice(&g.row_slice(r)[off..off + pc]);
                        }
                        self.accum(adj, p, gp);
                    }
                    off += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (pr, pc) = self.shape(p);
                    if self.needs(p) {
                        let data = g.data()[off * pc..(off + pr) * pc].to_vec();
                        self.accum(adj, p, Tensor::from_vec(pr, pc, data).expect("slice"));
                    }
                    off += pr;
                }
            }
            Op::SliceCols(a, start) => {
                let (r, c) = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                for i in 0..r {
                    ga.row_slice_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row_slice(i));
                }
                self.accum(adj, *a, ga);
            }
            Op::SliceRows(a, start) => {
                let (r, c) = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                ga.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                self.accum(adj, *a, ga);
            }
            Op::GatherRows(a, idx) => {
                let (r, c) = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                for (k, &i) in idx.iter().enumerate() {
                    for (o, v) in ga.row_slice_mut(i).iter_mut().zip(g.row_slice(k)) {
                        *o += v;
                    }
                }
                self.accum(adj, *a, ga);
            }
            Op::GatherSum(a, groups) => {
                let (r, c) = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                for (j, grp) in groups.iter().enumerate() {
                    for &s in grp {
                        for (o, v) in ga.row_slice_mut(s).iter_mut().zip(g.row_slice(j)) {
                            *o += v;
                        }
                    }
                }
                self.accum(adj, *a, ga);
            }
            Op::SumList(parts) => {
                for &p in parts {
                    self.accum(adj, p, g.clone());
                }
            }
            Op::SumAll(a) => {
                let (r, c) = self.shape(*a);
                self.accum(adj, *a, Tensor::filled(r, c, g.data()[0]));
            }
            Op::MeanAll(a) => {
                let (r, c) = self.shape(*a);
                let n = (r * c).max(1) as f64;
                self.accum(adj, *a, Tensor::filled(r, c, g.data()[0] / n));
            }
            Op::MeanRows(a) => {
                let (r, c) = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                for i in 0..r {
                    for (o, v) in ga.row_slice_mut(i).iter_mut().zip(g.data()) {
                        *o = v / r as f64;
                    }
                }
                self.accum(adj, *a, ga);
            }
            Op::Transpose(a) => self.accum(adj, *a, g.transpose()),
            Op::Pick(a, row, col) => {
                let (r, c) = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                ga.set(*row, *col, g.data()[0]);
                self.accum(adj, *a, ga);
            }
            Op::Mask(a, mask) => self.accum(adj, *a, zip_map(&g, mask, |x, m| x * m)),
            Op::CopyScatter(alpha, map) => {
                let a = self.value(*alpha).data();
                let z: f64 = map.iter().zip(a).filter(|(m, _)| m.is_some()).map(|(_, v)| v).sum();
                let dot: f64 = g.data().iter().zip(out.data()).map(|(x, y)| x * y).sum();
                let ga = map
                    .iter()
                    .map(|m| match m {
                        Some(k) => (g.data()[*k] - dot) / z,
                        None => 0.0,
                    })
                    .collect();
                self.accum(adj, *alpha, Tensor::row(ga));
            }
            Op::Interp(theta, p, q) => {
                let th = self.value(*theta).data()[0];
                let pv = self.value(*p).data();
                let qv = self.value(*q).data();
                if self.needs(*theta) {
                    let d: f64 = g
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(k, gv)| gv * (pv.get(k).copied().unwrap_or(0.0) - qv[k]))
                        .sum();
                    self.accum(adj, *theta, Tensor::scalar(d));
                }
                if self.needs(*p) {
                    let gp = g.data()[..pv.len()].iter().map(|x| th * x).collect();
                    self.accum(adj, *p, Tensor::row(gp));
                }
                if self.needs(*q) {
                    self.accum(adj, *q, g.map(|x| (1.0 - th) * x));
                }
            }
        }
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("zip_map shapes")
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable exp-normalise of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
