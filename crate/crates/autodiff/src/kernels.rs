//! Row-parallel dense kernels.
//!
//! Each output row is produced by exactly one task with a fixed summation
//! order, so the result is bit-identical whatever the size of the rayon
//! pool the caller runs in.

use rayon::prelude::*;

use crate::tensor::Tensor;

/// Below this many multiply-adds a kernel stays on the calling thread.
const PAR_WORK: usize = 1 << 16;

fn for_each_row(out: &mut [f64], cols: usize, work: usize, f: impl Fn(usize, &mut [f64]) + Sync) {
    if cols == 0 {
        return;
    }
    if work >= PAR_WORK && out.len() > cols {
        out.par_chunks_mut(cols).enumerate().for_each(|(r, row)| f(r, row));
    } else {
        out.chunks_mut(cols).enumerate().for_each(|(r, row)| f(r, row));
    }
}

/// `a · b`
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = a.shape();
    let n = b.cols();
    let mut out = Tensor::zeros(m, n);
    let (ad, bd) = (a.data(), b.data());
    for_each_row(out.data_mut(), n, m * k * n, |i, row| {
        let arow = &ad[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    });
    out
}

/// `aᵀ · g`, shaped like the right operand of a forward `matmul`.
pub fn matmul_at_b(a: &Tensor, g: &Tensor) -> Tensor {
    let (m, k) = a.shape();
    let n = g.cols();
    let mut out = Tensor::zeros(k, n);
    let (ad, gd) = (a.data(), g.data());
    for_each_row(out.data_mut(), n, m * k * n, |p, row| {
        for i in 0..m {
            let av = ad[i * k + p];
            let grow = &gd[i * n..(i + 1) * n];
            for (o, &gv) in row.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    });
    out
}

/// `g · bᵀ`, shaped like the left operand of a forward `matmul`.
pub fn matmul_a_bt(g: &Tensor, b: &Tensor) -> Tensor {
    let (m, n) = g.shape();
    let k = b.rows();
    let mut out = Tensor::zeros(m, k);
    let (gd, bd) = (g.data(), b.data());
    for_each_row(out.data_mut(), k, m * k * n, |i, row| {
        let grow = &gd[i * n..(i + 1) * n];
        for (p, o) in row.iter_mut().enumerate() {
            let brow = &bd[p * n..(p + 1) * n];
            *o = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    });
    out
}

/// Row `j` of the output is the sum of the source rows listed in `groups[j]`,
/// added in list order.
pub fn gather_sum(src: &Tensor, groups: &[Vec<usize>]) -> Tensor {
    let cols = src.cols();
    let mut out = Tensor::zeros(groups.len(), cols);
    let sd = src.data();
    let work = groups.iter().map(Vec::len).sum::<usize>() * cols * 8;
    for_each_row(out.data_mut(), cols, work, |j, row| {
        for &s in &groups[j] {
            for (o, &v) in row.iter_mut().zip(&sd[s * cols..(s + 1) * cols]) {
                *o += v;
            }
        }
    });
    out
}
