//! Shape broadcasting for elementwise binary operations. A dimension of
//! extent 1 stretches to match the other operand.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub(crate) fn broadcast_shape(a: Shape, b: Shape) -> Result<Shape> {
    let mut out = [0; 4];
    for d in 0..4 {
        out[d] = match (a[d], b[d]) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(Error::sizing(format!("cannot broadcast shapes {a:?} and {b:?}"))),
        };
    }
    Ok(out)
}

/// Row-major strides of `shape`, with zero stride on broadcast dimensions.
fn strides(shape: Shape) -> [usize; 4] {
    let full = [shape[1] * shape[2] * shape[3], shape[2] * shape[3], shape[3], 1];
    let mut s = [0; 4];
    for d in 0..4 {
        s[d] = if shape[d] == 1 { 0 } else { full[d] };
    }
    s
}

/// Calls `f(out_index, a_index, b_index)` for every element of `out`.
fn for_each_index(out: Shape, a: Shape, b: Shape, mut f: impl FnMut(usize, usize, usize)) {
    let (sa, sb) = (strides(a), strides(b));
    let mut k = 0;
    for n in 0..out[0] {
        for c in 0..out[1] {
            for i in 0..out[2] {
                let ra = n * sa[0] + c * sa[1] + i * sa[2];
                let rb = n * sb[0] + c * sb[1] + i * sb[2];
                for j in 0..out[3] {
                    f(k, ra + j * sa[3], rb + j * sb[3]);
                    k += 1;
                }
            }
        }
    }
}

pub(crate) fn binary(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let shape = broadcast_shape(a.shape(), b.shape())?;
    let mut out = Tensor::zeros(shape);
    let (da, db) = (a.data(), b.data());
    let o = out.data_mut();
    for_each_index(shape, a.shape(), b.shape(), |k, ia, ib| o[k] = f(da[ia], db[ib]));
    Ok(out)
}

/// Sums `g` down to `shape`, the adjoint of broadcasting `shape` up to `g`'s.
pub(crate) fn reduce_to(g: &Tensor, shape: Shape) -> Tensor {
    if g.shape() == shape {
        return g.clone();
    }
    let mut out = Tensor::zeros(shape);
    let o = out.data_mut();
    let d = g.data();
    for_each_index(g.shape(), shape, g.shape(), |k, io, _| o[io] += d[k]);
    out
}

/// `reduce_to(g ⊙ broadcast(other), shape)` without materialising the product.
pub(crate) fn reduce_product(g: &Tensor, other: &Tensor, shape: Shape) -> Tensor {
    if g.shape() == shape && other.shape() == shape {
        return g.zip_map(other, |x, y| x * y).expect("same shape");
    }
    let mut out = Tensor::zeros(shape);
    let o = out.data_mut();
    let (d, e) = (g.data(), other.data());
    for_each_index(g.shape(), shape, other.shape(), |k, io, ie| o[io] += d[k] * e[ie]);
    out
}
