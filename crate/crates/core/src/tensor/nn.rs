//! Multi-channel layer kernels: strided zero-padded convolution, pooling and
//! their adjoints. Shared by the perceptual metric and the autodiff tape.

use super::{Shape, Tensor};
use crate::error::{Error, Result};

/// Output extent of a "same"-padded convolution with the given stride.
pub fn strided_extent(len: usize, stride: usize) -> usize {
    len.div_ceil(stride)
}

/// Valid source range `[lo, hi)` of output indices `o` such that
/// `o * stride + offset` lands inside `[0, len)`.
fn valid_range(out_len: usize, stride: usize, offset: isize, len: usize) -> (usize, usize) {
    let s = stride as isize;
    // smallest o with o*s + offset >= 0
    let lo = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
    // largest o with o*s + offset <= len - 1
    let last = len as isize - 1 - offset;
    let hi = if last < 0 { 0 } else { last / s + 1 };
    (lo.max(0) as usize, (hi as usize).min(out_len))
}

pub fn conv_output_shape(x: Shape, w: Shape, stride: usize) -> Result<Shape> {
    let [n, c, h, wd] = x;
    let [co, ci, kh, kw] = w;
    if ci != c {
        return Err(Error::sizing(format!("conv weight expects {ci} input channels, input has {c}")));
    }
    if stride == 0 {
        return Err(Error::argument("conv stride must be >= 1"));
    }
    if kh > h || kw > wd {
        return Err(Error::sizing(format!("kernel {kh}x{kw} larger than input {h}x{wd}")));
    }
    Ok([n, co, strided_extent(h, stride), strided_extent(wd, stride)])
}

/// `y[n,o,i,j] = Σ_c Σ_ab w[o,c,a,b] · x[n,c, i·s + ch - a, j·s + cw - b]`
/// with zero padding and `ch = (kh-1)/2`, `cw = (kw-1)/2`.
pub fn conv2d_forward(x: &Tensor, w: &Tensor, stride: usize) -> Result<Tensor> {
    let out_shape = conv_output_shape(x.shape(), w.shape(), stride)?;
    let [n, c, h, wd] = x.shape();
    let [co, _, kh, kw] = w.shape();
    let [_, _, oh, ow] = out_shape;
    let (ch, cw) = ((kh as isize - 1) / 2, (kw as isize - 1) / 2);
    let mut y = Tensor::zeros(out_shape);
    let wdata = w.data();
    for b in 0..n {
        for o in 0..co {
            let out = y.plane_mut(b * co + o);
            for ci in 0..c {
                let src = x.plane(b * c + ci);
                for a in 0..kh {
                    let di = ch - a as isize;
                    let (i0, i1) = valid_range(oh, stride, di, h);
                    for bb in 0..kw {
                        let dj = cw - bb as isize;
                        let kv = wdata[((o * c + ci) * kh + a) * kw + bb];
                        let (j0, j1) = valid_range(ow, stride, dj, wd);
                        for i in i0..i1 {
                            let si = (i * stride) as isize + di;
                            let srow = &src[si as usize * wd..(si as usize + 1) * wd];
                            let drow = &mut out[i * ow..(i + 1) * ow];
                            if stride == 1 {
                                let off = (j0 as isize + dj) as usize;
                                let len = j1.saturating_sub(j0);
                                for (d, s) in drow[j0..j1].iter_mut().zip(&srow[off..off + len]) {
                                    *d += kv * s;
                                }
                            } else {
                                for j in j0..j1 {
                                    drow[j] += kv * srow[((j * stride) as isize + dj) as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Adjoint of [`conv2d_forward`] with respect to the input.
pub fn conv2d_backward_input(dy: &Tensor, w: &Tensor, x_shape: Shape, stride: usize) -> Tensor {
    let [n, c, h, wd] = x_shape;
    let [co, _, kh, kw] = w.shape();
    let [_, _, oh, ow] = dy.shape();
    let (ch, cw) = ((kh as isize - 1) / 2, (kw as isize - 1) / 2);
    let mut dx = Tensor::zeros(x_shape);
    let wdata = w.data();
    for b in 0..n {
        for ci in 0..c {
            let dst = dx.plane_mut(b * c + ci);
            for o in 0..co {
                let g = dy.plane(b * co + o);
                for a in 0..kh {
                    let di = ch - a as isize;
                    let (i0, i1) = valid_range(oh, stride, di, h);
                    for bb in 0..kw {
                        let dj = cw - bb as isize;
                        let kv = wdata[((o * c + ci) * kh + a) * kw + bb];
                        let (j0, j1) = valid_range(ow, stride, dj, wd);
                        for i in i0..i1 {
                            let si = ((i * stride) as isize + di) as usize;
                            let grow = &g[i * ow..(i + 1) * ow];
                            let drow = &mut dst[si * wd..(si + 1) * wd];
                            if stride == 1 {
                                let off = (j0 as isize + dj) as usize;
                                let len = j1.saturating_sub(j0);
                                for (d, s) in drow[off..off + len].iter_mut().zip(&grow[j0..j1]) {
                                    *d += kv * s;
                                }
                            } else {
                                for j in j0..j1 {
                                    drow[((j * stride) as isize + dj) as usize] += kv * grow[j];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Gradient of [`conv2d_forward`] with respect to the weights.
pub fn conv2d_backward_weight(dy: &Tensor, x: &Tensor, w_shape: Shape, stride: usize) -> Tensor {
    let [n, c, h, wd] = x.shape();
    let [co, _, kh, kw] = w_shape;
    let [_, _, oh, ow] = dy.shape();
    let (ch, cw) = ((kh as isize - 1) / 2, (kw as isize - 1) / 2);
    let mut dw = Tensor::zeros(w_shape);
    for b in 0..n {
        for o in 0..co {
            let g = dy.plane(b * co + o);
            for ci in 0..c {
                let src = x.plane(b * c + ci);
                for a in 0..kh {
                    let di = ch - a as isize;
                    let (i0, i1) = valid_range(oh, stride, di, h);
                    for bb in 0..kw {
                        let dj = cw - bb as isize;
                        let (j0, j1) = valid_range(ow, stride, dj, wd);
                        let mut acc = 0.0;
                        for i in i0..i1 {
                            let si = ((i * stride) as isize + di) as usize;
                            let grow = &g[i * ow..(i + 1) * ow];
                            let srow = &src[si * wd..(si + 1) * wd];
                            if stride == 1 {
                                let off = (j0 as isize + dj) as usize;
                                let len = j1.saturating_sub(j0);
                                acc += grow[j0..j1].iter().zip(&srow[off..off + len]).map(|(p, q)| p * q).sum::<f64>();
                            } else {
                                for j in j0..j1 {
                                    acc += grow[j] * srow[((j * stride) as isize + dj) as usize];
                                }
                            }
                        }
                        dw.data_mut()[((o * c + ci) * kh + a) * kw + bb] += acc;
                    }
                }
            }
        }
    }
    dw
}

/// Non-overlapping 2×2 mean pooling (extents must be even).
pub fn avg_pool2(x: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::sizing(format!("2x2 pooling needs even extents, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Tensor::zeros([n, c, oh, ow]);
    for p in 0..x.planes() {
        let src = x.plane(p);
        let dst = y.plane_mut(p);
        for i in 0..oh {
            for j in 0..ow {
                let r0 = 2 * i * w + 2 * j;
                let r1 = r0 + w;
                dst[i * ow + j] = 0.25 * (src[r0] + src[r0 + 1] + src[r1] + src[r1 + 1]);
            }
        }
    }
    Ok(y)
}

pub fn avg_pool2_backward(dy: &Tensor, x_shape: Shape) -> Tensor {
    let [_, _, _, w] = x_shape;
    let [_, _, oh, ow] = dy.shape();
    let mut dx = Tensor::zeros(x_shape);
    for p in 0..dy.planes() {
        let g = dy.plane(p);
        let dst = dx.plane_mut(p);
        for i in 0..oh {
            for j in 0..ow {
                let v = 0.25 * g[i * ow + j];
                let r0 = 2 * i * w + 2 * j;
                dst[r0] += v;
                dst[r0 + 1] += v;
                dst[r0 + w] += v;
                dst[r0 + w + 1] += v;
            }
        }
    }
    dx
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}
