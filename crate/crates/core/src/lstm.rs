//! Standard LSTM cell used by the character encoder, the BiLSTM baseline and
//! the decoder.

use amrgen_autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use rand::Rng;

use crate::error::Result;

/// Uniform Glorot initialisation.
pub(crate) fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rng, rows, cols, bound)
}

pub(crate) fn uniform(rng: &mut impl Rng, rows: usize, cols: usize, bound: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::from_vec(rows, cols, data).expect("sized by construction")
}

/// Gates are laid out `[i | f | o | g]` along the columns of `wx`, `wh`, `b`.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        let wx = store.add(format!("{prefix}.wx"), glorot(rng, input, 4 * hidden))?;
        let wh = store.add(format!("{prefix}.wh"), glorot(rng, hidden, 4 * hidden))?;
        let mut bias = Tensor::zeros(1, 4 * hidden);
        for k in hidden..2 * hidden {
            bias.data_mut()[k] = 1.0;
        }
        let b = store.add(format!("{prefix}.b"), bias)?;
        Ok(Lstm {
            wx,
            wh,
            b,
            input,
            hidden,
        })
    }

    /// `xs · Wx + b` for every row at once.
    pub fn project_inputs(&self, tape: &mut Tape, xs: Var) -> Result<Var> {
        let (wx, b) = (tape.param(self.wx), tape.param(self.b));
        Ok(tape.affine(xs, wx, b)?)
    }

    pub fn zero_state(&self, tape: &mut Tape) -> (Var, Var) {
        let h = tape.constant(Tensor::zeros(1, self.hidden));
        let c = tape.constant(Tensor::zeros(1, self.hidden));
        (h, c)
    }

    /// One update from a precomputed input projection `pre` (`1 × 4H`).
    pub fn cell(&self, tape: &mut Tape, pre: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let n = self.hidden;
        let wh = tape.param(self.wh);
        let rec = tape.matmul(h, wh)?;
        let z = tape.add(pre, rec)?;
        let ifo = tape.slice_cols(z, 0, 3 * n)?;
        let ifo = tape.sigmoid(ifo);
        let g = tape.slice_cols(z, 3 * n, n)?;
        let g = tape.tanh(g);
        let i = tape.slice_cols(ifo, 0, n)?;
        let f = tape.slice_cols(ifo, n, n)?;
        let o = tape.slice_cols(ifo, 2 * n, n)?;
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        Ok((h, c))
    }

    pub fn step(&self, tape: &mut Tape, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let pre = self.project_inputs(tape, x)?;
        self.cell(tape, pre, h, c)
    }

    /// Hidden states over the rows of `xs` from a zero state, returned in
    /// row order. With `reverse` the recurrence runs from the last row.
    pub fn run(&self, tape: &mut Tape, xs: Var, reverse: bool) -> Result<Vec<Var>> {
        let n = tape.shape(xs).0;
        let pre = self.project_inputs(tape, xs)?;
        let (mut h, mut c) = self.zero_state(tape);
        let mut out = vec![h; n];
        let order: Vec<usize> = if reverse {
            (0..n).rev().collect()
        } else {
            (0..n).collect()
        };
        for j in order {
            let p = tape.slice_rows(pre, j, 1)?;
            (h, c) = self.cell(tape, p, h, c)?;
            out[j] = h;
        }
        Ok(out)
    }
}
