//! Forward kernels shared by tape recording and tape replay.

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub(super) fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub(super) fn require_2d(op: &'static str, a: &Tensor) -> Result<(usize, usize)> {
    match a.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(Error::shape(op, format!("need 2-D, got {:?}", s))),
    }
}

pub(super) fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shapes checked by caller")
}

pub(super) fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, k) = require_2d("matmul", a)?;
    let (k2, m) = require_2d("matmul", b)?;
    if k != k2 {
        return Err(Error::shape(
            "matmul",
            format!("{:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = ad[i * k + p];
            let brow = &bd[p * m..(p + 1) * m];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::matrix(n, m, out)
}

pub(super) fn softmax_rows(a: &Tensor) -> Result<Tensor> {
    let (r, c) = require_2d("softmax_rows", a)?;
    let mut out = a.data().to_vec();
    for i in 0..r {
        softmax_in_place(&mut out[i * c..(i + 1) * c]);
    }
    Tensor::matrix(r, c, out)
}

pub(super) fn softmax_cols(a: &Tensor) -> Result<Tensor> {
    let t = a.transposed()?;
    softmax_rows(&t)?.transposed()
}

fn softmax_in_place(row: &mut [f64]) {
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

pub(super) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Reduces a 1-D tensor over axis 0 or a 2-D tensor over either axis.
pub(super) fn reduce_axis(a: &Tensor, axis: usize, mean: bool) -> Result<Tensor> {
    match (a.shape(), axis) {
        ([n], 0) => {
            let s: f64 = a.data().iter().sum();
            Ok(Tensor::scalar(if mean { s / *n as f64 } else { s }))
        }
        ([r, c], 0) => {
            let mut out = vec![0.0; *c];
            for i in 0..*r {
                for (o, v) in out.iter_mut().zip(a.row(i)) {
                    *o += v;
                }
            }
            if mean {
                out.iter_mut().for_each(|v| *v /= *r as f64);
            }
            Ok(Tensor::vector(out))
        }
        ([r, c], 1) => {
            let out = (0..*r)
                .map(|i| {
                    let s: f64 = a.row(i).iter().sum();
                    if mean {
                        s / *c as f64
                    } else {
                        s
                    }
                })
                .collect();
            Ok(Tensor::vector(out))
        }
        (s, ax) => Err(Error::shape("reduce_axis", format!("axis {} of {:?}", ax, s))),
    }
}

/// Max or min over an axis of a 2-D tensor; returns values and the winning index
/// along the reduced axis (first occurrence on ties).
pub(super) fn extremum_axis(a: &Tensor, axis: usize, max: bool) -> Result<(Tensor, Vec<usize>)> {
    let (r, c) = require_2d("extremum_axis", a)?;
    let better = |cand: f64, cur: f64| if max { cand > cur } else { cand < cur };
    match axis {
        0 => {
            let mut idx = vec![0usize; c];
            let mut val = a.row(0).to_vec();
            for i in 1..r {
                for j in 0..c {
                    let v = a.at(i, j);
                    if better(v, val[j]) {
                        val[j] = v;
                        idx[j] = i;
                    }
                }
            }
            Ok((Tensor::vector(val), idx))
        }
        1 => {
            let mut idx = vec![0usize; r];
            let mut val = vec![0.0; r];
            for i in 0..r {
                let row = a.row(i);
                let mut best = row[0];
                let mut bi = 0;
                for (j, &v) in row.iter().enumerate().skip(1) {
                    if better(v, best) {
                        best = v;
                        bi = j;
                    }
                }
                val[i] = best;
                idx[i] = bi;
            }
            Ok((Tensor::vector(val), idx))
        }
        _ => Err(Error::shape("extremum_axis", format!("axis {}", axis))),
    }
}

/// Stable ascending sort of a 1-D tensor, or of every column of a 2-D tensor.
///
/// The permutation is stored column by column: `perm[j * rows + i]` is the
/// source row of sorted position `i` in column `j`.
pub(super) fn sort_axis0(a: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (r, c) = match a.shape() {
        [n] => (*n, 1),
        [r, c] => (*r, *c),
        s => return Err(Error::shape("sort", format!("need 1-D or 2-D, got {:?}", s))),
    };
    let data = a.data();
    let mut perm = Vec::with_capacity(r * c);
    let mut out = vec![0.0; r * c];
    let mut col_idx: Vec<usize> = (0..r).collect();
    for j in 0..c {
        col_idx.iter_mut().enumerate().for_each(|(i, v)| *v = i);
        col_idx.sort_by(|&p, &q| data[p * c + j].total_cmp(&data[q * c + j]));
        for (i, &src) in col_idx.iter().enumerate() {
            out[i * c + j] = data[src * c + j];
        }
        perm.extend_from_slice(&col_idx);
    }
    Ok((Tensor::new(a.shape().to_vec(), out)?, perm))
}

/// Row gather along axis 0: output row `i` is input row `index[i]`.
pub(super) fn gather_rows(a: &Tensor, index: &[usize]) -> Result<Tensor> {
    let (r, c) = match a.shape() {
        [n] => (*n, 1),
        [r, c] => (*r, *c),
        s => return Err(Error::shape("gather", format!("need 1-D or 2-D, got {:?}", s))),
    };
    if let Some(&bad) = index.iter().find(|&&i| i >= r) {
        return Err(Error::invalid(format!("gather index {} out of range {}", bad, r)));
    }
    let mut out = Vec::with_capacity(index.len() * c);
    for &i in index {
        out.extend_from_slice(&a.data()[i * c..(i + 1) * c]);
    }
    let shape = if a.ndim() == 1 {
        vec![index.len()]
    } else {
        vec![index.len(), c]
    };
    Tensor::new(shape, out)
}

pub(super) fn add_row(a: &Tensor, row: &Tensor) -> Result<Tensor> {
    let (r, c) = require_2d("add_row", a)?;
    if row.shape() != [c] {
        return Err(Error::shape(
            "add_row",
            format!("{:?} + row {:?}", a.shape(), row.shape()),
        ));
    }
    let mut out = a.data().to_vec();
    for i in 0..r {
        for (o, b) in out[i * c..(i + 1) * c].iter_mut().zip(row.data()) {
            *o += b;
        }
    }
    Tensor::matrix(r, c, out)
}

pub(super) fn pairwise_sq_dist(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, d) = require_2d("pairwise_sq_dist", a)?;
    let (m, d2) = require_2d("pairwise_sq_dist", b)?;
    if d != d2 {
        return Err(Error::shape(
            "pairwise_sq_dist",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let ai = a.row(i);
        for j in 0..m {
            out[i * m + j] = ai
                .iter()
                .zip(b.row(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
        }
    }
    Tensor::matrix(n, m, out)
}
