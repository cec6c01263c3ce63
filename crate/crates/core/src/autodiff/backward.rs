//! Vector–Jacobian products of every primitive.

use rustfft::num_complex::Complex64;

use super::broadcast::{reduce_product, reduce_to};
use super::ops::{extract, place};
use super::{Op, Tape, Value, Var};
use crate::error::Result;
use crate::tensor::{self, nn, upsample_taps, ComplexTensor, Shape, Tensor};

fn real(g: &Value) -> &Tensor {
    match g {
        Value::Real(t) => t,
        Value::Complex(_) => unreachable!("real node with complex adjoint"),
    }
}

fn complex(g: &Value) -> &ComplexTensor {
    match g {
        Value::Complex(z) => z,
        Value::Real(_) => unreachable!("complex node with real adjoint"),
    }
}

fn upsample_adjoint(g: &Tensor, x_shape: Shape, factor: usize) -> Tensor {
    if factor == 1 {
        return g.clone();
    }
    let [_, _, h, w] = x_shape;
    let rows = upsample_taps(h, factor);
    let cols = upsample_taps(w, factor);
    let ow = w * factor;
    let mut dx = Tensor::zeros(x_shape);
    for p in 0..g.planes() {
        let src = g.plane(p);
        let dst = dx.plane_mut(p);
        for (i, r) in rows.iter().enumerate() {
            for (j, t) in cols.iter().enumerate() {
                let v = src[i * ow + j];
                let (top, bot) = (v * (1.0 - r.frac), v * r.frac);
                dst[r.lo * w + t.lo] += top * (1.0 - t.frac);
                dst[r.lo * w + t.hi] += top * t.frac;
                dst[r.hi * w + t.lo] += bot * (1.0 - t.frac);
                dst[r.hi * w + t.hi] += bot * t.frac;
            }
        }
    }
    dx
}

impl Tape {
    /// Contributions of the adjoint `g` of node `idx` to its parents.
    pub(super) fn vjp(&self, idx: usize, g: &Value) -> Result<Vec<(Var, Value)>> {
        let node = &self.nodes[idx];
        let r = |t: Tensor| Value::Real(t);
        let c = |z: ComplexTensor| Value::Complex(z);
        Ok(match &node.op {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) => {
                let g = real(g);
                vec![(*a, r(reduce_to(g, self.shape(*a)))), (*b, r(reduce_to(g, self.shape(*b))))]
            }
            Op::Sub(a, b) => {
                let g = real(g);
                vec![(*a, r(reduce_to(g, self.shape(*a)))), (*b, r(reduce_to(g, self.shape(*b)).scale(-1.0)))]
            }
            Op::Mul(a, b) => {
                let g = real(g);
                let (at, bt) = (self.tensor(*a), self.tensor(*b));
                vec![(*a, r(reduce_product(g, bt, at.shape()))), (*b, r(reduce_product(g, at, bt.shape())))]
            }
            Op::ScalarMul(x, s) => vec![(*x, r(real(g).scale(*s)))],
            Op::AddScalar(x) => vec![(*x, g.clone())],
            Op::Conv2d { x, w, stride } => {
                let g = real(g);
                let (xt, wt) = (self.tensor(*x), self.tensor(*w));
                let mut out = Vec::with_capacity(2);
                if self.requires_grad(*x) {
                    out.push((*x, r(nn::conv2d_backward_input(g, wt, xt.shape(), *stride))));
                }
                if self.requires_grad(*w) {
                    out.push((*w, r(nn::conv2d_backward_weight(g, xt, wt.shape(), *stride))));
                }
                out
            }
            Op::Pointwise { x, w } => {
                let g = real(g);
                let (xt, wt) = (self.tensor(*x), self.tensor(*w));
                let [n, ch, h, wd] = xt.shape();
                let co = wt.shape()[0];
                let hw = h * wd;
                let mut dx = Tensor::zeros(xt.shape());
                let mut dw = Tensor::zeros(wt.shape());
                for b in 0..n {
                    for o in 0..co {
                        let go = &g.data()[(b * co + o) * hw..(b * co + o + 1) * hw];
                        for k in 0..ch {
                            let xs = &xt.data()[(b * ch + k) * hw..(b * ch + k + 1) * hw];
                            dw.data_mut()[o * ch + k] += go.iter().zip(xs).map(|(u, v)| u * v).sum::<f64>();
                            let coef = wt.data()[o * ch + k];
                            let dst = &mut dx.data_mut()[(b * ch + k) * hw..(b * ch + k + 1) * hw];
                            for (d, s) in dst.iter_mut().zip(go) {
                                *d += coef * s;
                            }
                        }
                    }
                }
                vec![(*x, r(dx)), (*w, r(dw))]
            }
            Op::GlobalAvgPool(x) => {
                let g = real(g);
                let mut dx = Tensor::zeros(self.shape(*x));
                let scale = 1.0 / dx.plane_len() as f64;
                for p in 0..dx.planes() {
                    let v = g.data()[p] * scale;
                    dx.plane_mut(p).iter_mut().for_each(|d| *d = v);
                }
                vec![(*x, r(dx))]
            }
            Op::AvgPool2(x) => vec![(*x, r(nn::avg_pool2_backward(real(g), self.shape(*x))))],
            Op::Upsample { x, factor } => {
                vec![(*x, r(upsample_adjoint(real(g), self.shape(*x), *factor)))]
            }
            Op::Concat(a, b) => {
                let g = real(g);
                let ([n, ca, h, w], cb) = (self.shape(*a), self.shape(*b)[1]);
                let (la, lb) = (ca * h * w, cb * h * w);
                let mut da = Vec::with_capacity(n * la);
                let mut db = Vec::with_capacity(n * lb);
                for i in 0..n {
                    let base = i * (la + lb);
                    da.extend_from_slice(&g.data()[base..base + la]);
                    db.extend_from_slice(&g.data()[base + la..base + la + lb]);
                }
                vec![(*a, r(Tensor::from_vec(self.shape(*a), da)?)), (*b, r(Tensor::from_vec(self.shape(*b), db)?))]
            }
            Op::Pad { x, top, left } => vec![(*x, r(extract(real(g), self.shape(*x), *top, *left)))],
            Op::Crop { x, top, left } => vec![(*x, r(place(real(g), self.shape(*x), *top, *left)))],
            Op::Reshape(x) => vec![(*x, r(real(g).clone().reshape(self.shape(*x))?))],
            Op::Sigmoid(x) => {
                let y = real(&node.value);
                vec![(*x, r(real(g).zip_map(y, |gv, yv| gv * yv * (1.0 - yv))?))]
            }
            Op::Relu(x) => {
                let xt = self.tensor(*x);
                vec![(*x, r(real(g).zip_map(xt, |gv, xv| if xv > 0.0 { gv } else { 0.0 })?))]
            }
            Op::Exp(x) => vec![(*x, r(real(g).zip_map(real(&node.value), |gv, yv| gv * yv)?))],
            Op::Reciprocal(x) => {
                vec![(*x, r(real(g).zip_map(real(&node.value), |gv, yv| -gv * yv * yv)?))]
            }
            Op::SoftmaxSpatial(x) => {
                let (g, y) = (real(g), real(&node.value));
                let mut dx = Tensor::zeros(y.shape());
                for p in 0..y.planes() {
                    let (gp, yp) = (g.plane(p), y.plane(p));
                    let inner: f64 = gp.iter().zip(yp).map(|(u, v)| u * v).sum();
                    for ((d, gv), yv) in dx.plane_mut(p).iter_mut().zip(gp).zip(yp) {
                        *d = yv * (gv - inner);
                    }
                }
                vec![(*x, r(dx))]
            }
            Op::Sum(x) => vec![(*x, r(Tensor::full(self.shape(*x), real(g).data()[0])))],
            Op::Mean(x) => {
                let shape = self.shape(*x);
                let n: usize = shape.iter().product();
                vec![(*x, r(Tensor::full(shape, real(g).data()[0] / n as f64)))]
            }
            Op::Mse(a, b) => {
                let (at, bt) = (self.tensor(*a), self.tensor(*b));
                let k = 2.0 * real(g).data()[0] / at.len() as f64;
                let da = at.zip_map(bt, |u, v| k * (u - v))?;
                let db = da.scale(-1.0);
                vec![(*a, r(da)), (*b, r(db))]
            }
            Op::Ssim { a, b, grad_a, grad_b } => {
                let s = real(g).data()[0];
                vec![(*a, r(grad_a.scale(s))), (*b, r(grad_b.scale(s)))]
            }
            Op::Fft2(x) => {
                // F^H g = N · ifft(g); the input is real so only Re survives.
                let g = complex(g);
                let n = g.plane_len() as f64;
                vec![(*x, r(tensor::ifft2(g)?.real().scale(n)))]
            }
            Op::Ifft2(z) => {
                let g = complex(g);
                let n = g.plane_len() as f64;
                let mut dz = tensor::fft2_complex(g)?;
                dz.data_mut().iter_mut().for_each(|v| *v /= n);
                vec![(*z, c(dz))]
            }
            Op::ComplexMul(a, b) => {
                let g = complex(g);
                let (az, bz) = (self.complex(*a), self.complex(*b));
                vec![(*a, c(g.mul(&bz.conj())?)), (*b, c(g.mul(&az.conj())?))]
            }
            Op::ComplexConj(z) => vec![(*z, c(complex(g).conj()))],
            Op::MagnitudeSq(z) => {
                let g = real(g);
                let zt = self.complex(*z);
                let data = zt.data().iter().zip(g.data()).map(|(v, gv)| v * (2.0 * gv)).collect();
                vec![(*z, c(ComplexTensor::from_vec(zt.shape(), data)?))]
            }
            Op::RealPart(z) => {
                let data = real(g).data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
                vec![(*z, c(ComplexTensor::from_vec(self.shape(*z), data)?))]
            }
            Op::ComplexScale(z, s) => {
                let g = complex(g);
                let (zt, st) = (self.complex(*z), self.tensor(*s));
                let dz = g.data().iter().zip(st.data()).map(|(gv, sv)| gv * sv).collect();
                let ds = g.data().iter().zip(zt.data()).map(|(gv, zv)| gv.re * zv.re + gv.im * zv.im).collect();
                vec![(*z, c(ComplexTensor::from_vec(zt.shape(), dz)?)), (*s, r(Tensor::from_vec(st.shape(), ds)?))]
            }
        })
    }
}
