//! Forward evaluation and recording of every primitive.

use rustfft::num_complex::Complex64;

use super::broadcast::{binary, broadcast_shape};
use super::{Op, Tape, Value, Var};
use crate::error::{Error, Result};
use crate::metrics::ssim_eval;
use crate::tensor::{self, nn, ComplexTensor, Shape, Tensor};

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    fn record(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let needs = parents.iter().any(|p| self.requires_grad(*p));
        self.push(Value::Real(value), op, needs)
    }

    fn record_complex(&mut self, value: ComplexTensor, op: Op, parents: &[Var]) -> Var {
        let needs = parents.iter().any(|p| self.requires_grad(*p));
        self.push(Value::Complex(value), op, needs)
    }

    fn unary(&mut self, x: Var, what: &str, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let y = self.real_of(x, what)?.map(f);
        Ok(self.record(y, op, &[x]))
    }

    /// Elementwise sum with broadcasting over unit dimensions.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = binary(self.real_of(a, "add")?, self.real_of(b, "add")?, |x, y| x + y)?;
        Ok(self.record(y, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = binary(self.real_of(a, "sub")?, self.real_of(b, "sub")?, |x, y| x - y)?;
        Ok(self.record(y, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise (Hadamard) product with broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = binary(self.real_of(a, "mul")?, self.real_of(b, "mul")?, |x, y| x * y)?;
        Ok(self.record(y, Op::Mul(a, b), &[a, b]))
    }

    pub fn scalar_mul(&mut self, x: Var, s: f64) -> Result<Var> {
        self.unary(x, "scalar_mul", |v| s * v, Op::ScalarMul(x, s))
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Result<Var> {
        self.unary(x, "add_scalar", |v| v + s, Op::AddScalar(x))
    }

    /// Zero-padded "same" convolution (see [`nn::conv2d_forward`]) with
    /// weights `Cout×Cin×kh×kw` and stride 1 or 2.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize) -> Result<Var> {
        let y = nn::conv2d_forward(self.real_of(x, "conv2d")?, self.real_of(w, "conv2d")?, stride)?;
        Ok(self.record(y, Op::Conv2d { x, w, stride }, &[x, w]))
    }

    /// Channel mixing `y[n,o] = Σ_c w[o,c] · x[n,c]` with weights `Cout×Cin×1×1`.
    pub fn pointwise_conv(&mut self, x: Var, w: Var) -> Result<Var> {
        let xt = self.real_of(x, "pointwise_conv")?;
        let wt = self.real_of(w, "pointwise_conv")?;
        let [n, c, h, wd] = xt.shape();
        let [co, ci, kh, kw] = wt.shape();
        if ci != c || kh != 1 || kw != 1 {
            return Err(Error::sizing(format!(
                "pointwise weight {:?} does not fit input {:?}",
                wt.shape(),
                xt.shape()
            )));
        }
        let hw = h * wd;
        let mut y = Tensor::zeros([n, co, h, wd]);
        let (xd, wd_) = (xt.data(), wt.data());
        let yd = y.data_mut();
        for b in 0..n {
            for o in 0..co {
                let dst = &mut yd[(b * co + o) * hw..(b * co + o + 1) * hw];
                for k in 0..c {
                    let coef = wd_[o * c + k];
                    let src = &xd[(b * c + k) * hw..(b * c + k + 1) * hw];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += coef * s;
                    }
                }
            }
        }
        Ok(self.record(y, Op::Pointwise { x, w }, &[x, w]))
    }

    /// Spatial mean of each plane, giving `N×C×1×1`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let xt = self.real_of(x, "global_avg_pool")?;
        let [n, c, _, _] = xt.shape();
        let data = (0..xt.planes()).map(|p| xt.plane(p).iter().sum::<f64>() / xt.plane_len() as f64).collect();
        let y = Tensor::from_vec([n, c, 1, 1], data)?;
        Ok(self.record(y, Op::GlobalAvgPool(x), &[x]))
    }

    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let y = nn::avg_pool2(self.real_of(x, "avg_pool2")?)?;
        Ok(self.record(y, Op::AvgPool2(x), &[x]))
    }

    pub fn bilinear_upsample(&mut self, x: Var, factor: usize) -> Result<Var> {
        let y = tensor::bilinear_upsample(self.real_of(x, "bilinear_upsample")?, factor)?;
        Ok(self.record(y, Op::Upsample { x, factor }, &[x]))
    }

    /// Stacks `a` and `b` along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (at, bt) = (self.real_of(a, "concat")?, self.real_of(b, "concat")?);
        let ([n, ca, h, w], [nb, cb, hb, wb]) = (at.shape(), bt.shape());
        if (n, h, w) != (nb, hb, wb) {
            return Err(Error::sizing(format!("cannot concatenate {:?} and {:?}", at.shape(), bt.shape())));
        }
        let (la, lb) = (ca * h * w, cb * h * w);
        let mut data = Vec::with_capacity(n * (la + lb));
        for i in 0..n {
            data.extend_from_slice(&at.data()[i * la..(i + 1) * la]);
            data.extend_from_slice(&bt.data()[i * lb..(i + 1) * lb]);
        }
        let y = Tensor::from_vec([n, ca + cb, h, w], data)?;
        Ok(self.record(y, Op::Concat(a, b), &[a, b]))
    }

    /// Zero-pads to `height × width`, centering the input (the extra row or
    /// column of an odd margin goes to the bottom/right).
    pub fn zero_pad_spatial(&mut self, x: Var, height: usize, width: usize) -> Result<Var> {
        let xt = self.real_of(x, "zero_pad_spatial")?;
        let [n, c, h, w] = xt.shape();
        if height < h || width < w {
            return Err(Error::sizing(format!("cannot pad {h}x{w} to smaller {height}x{width}")));
        }
        let (top, left) = ((height - h) / 2, (width - w) / 2);
        let y = place(xt, [n, c, height, width], top, left);
        Ok(self.record(y, Op::Pad { x, top, left }, &[x]))
    }

    /// Spatial window `[top, top+height) × [left, left+width)`.
    pub fn crop(&mut self, x: Var, top: usize, left: usize, height: usize, width: usize) -> Result<Var> {
        let xt = self.real_of(x, "crop")?;
        let [n, c, h, w] = xt.shape();
        if top + height > h || left + width > w || height == 0 || width == 0 {
            return Err(Error::sizing(format!("crop window {height}x{width} at ({top},{left}) exceeds {h}x{w}")));
        }
        let y = extract(xt, [n, c, height, width], top, left);
        Ok(self.record(y, Op::Crop { x, top, left }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: Shape) -> Result<Var> {
        let y = self.real_of(x, "reshape")?.clone().reshape(shape)?;
        Ok(self.record(y, Op::Reshape(x), &[x]))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "sigmoid", sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "relu", |v| v.max(0.0), Op::Relu(x))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "exp", f64::exp, Op::Exp(x))
    }

    /// Elementwise `1/x`; any zero entry is a domain error.
    pub fn reciprocal(&mut self, x: Var) -> Result<Var> {
        if self.real_of(x, "reciprocal")?.data().contains(&0.0) {
            return Err(Error::Domain("reciprocal of zero".into()));
        }
        self.unary(x, "reciprocal", |v| 1.0 / v, Op::Reciprocal(x))
    }

    /// Softmax over the `H×W` entries of each plane.
    pub fn softmax_spatial(&mut self, x: Var) -> Result<Var> {
        let mut y = self.real_of(x, "softmax_spatial")?.clone();
        for p in 0..y.planes() {
            let plane = y.plane_mut(p);
            let m = plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in plane.iter_mut() {
                *v = (*v - m).exp();
                total += *v;
            }
            plane.iter_mut().for_each(|v| *v /= total);
        }
        Ok(self.record(y, Op::SoftmaxSpatial(x), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.real_of(x, "sum")?.sum();
        Ok(self.record(Tensor::scalar(s), Op::Sum(x), &[x]))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let s = self.real_of(x, "mean")?.mean();
        Ok(self.record(Tensor::scalar(s), Op::Mean(x), &[x]))
    }

    /// Mean squared difference, a scalar.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (at, bt) = (self.real_of(a, "mse")?, self.real_of(b, "mse")?);
        at.ensure_same_shape(bt)?;
        let m = at.data().iter().zip(bt.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / at.len() as f64;
        Ok(self.record(Tensor::scalar(m), Op::Mse(a, b), &[a, b]))
    }

    /// Mean SSIM over all planes and valid windows, a scalar.
    pub fn ssim(&mut self, a: Var, b: Var, value_range: f64) -> Result<Var> {
        let want = self.requires_grad(a) || self.requires_grad(b);
        let eval = ssim_eval(self.real_of(a, "ssim")?, self.real_of(b, "ssim")?, value_range, want)?;
        let shape = self.shape(a);
        let op = Op::Ssim {
            a,
            b,
            grad_a: eval.grad_a.unwrap_or_else(|| Tensor::zeros(shape)),
            grad_b: eval.grad_b.unwrap_or_else(|| Tensor::zeros(shape)),
        };
        Ok(self.record(Tensor::scalar(eval.value), op, &[a, b]))
    }

    /// Unnormalized 2-D DFT of a real tensor.
    pub fn fft2(&mut self, x: Var) -> Result<Var> {
        let z = tensor::fft2(self.real_of(x, "fft2")?)?;
        Ok(self.record_complex(z, Op::Fft2(x), &[x]))
    }

    /// Inverse 2-D DFT with 1/(H·W) normalization.
    pub fn ifft2(&mut self, z: Var) -> Result<Var> {
        let y = tensor::ifft2(self.complex_of(z, "ifft2")?)?;
        Ok(self.record_complex(y, Op::Ifft2(z), &[z]))
    }

    pub fn complex_mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (az, bz) = (self.complex_of(a, "complex_mul")?, self.complex_of(b, "complex_mul")?);
        if az.shape() != bz.shape() {
            return Err(Error::sizing(format!("complex_mul shape mismatch: {:?} vs {:?}", az.shape(), bz.shape())));
        }
        let y = az.mul(bz)?;
        Ok(self.record_complex(y, Op::ComplexMul(a, b), &[a, b]))
    }

    pub fn complex_conj(&mut self, z: Var) -> Result<Var> {
        let y = self.complex_of(z, "complex_conj")?.conj();
        Ok(self.record_complex(y, Op::ComplexConj(z), &[z]))
    }

    /// `|z|²`, a real tensor.
    pub fn magnitude_sq(&mut self, z: Var) -> Result<Var> {
        let zt = self.complex_of(z, "magnitude_sq")?;
        let y = Tensor::from_vec(zt.shape(), zt.data().iter().map(|v| v.norm_sqr()).collect())?;
        Ok(self.record(y, Op::MagnitudeSq(z), &[z]))
    }

    pub fn real_part(&mut self, z: Var) -> Result<Var> {
        let y = self.complex_of(z, "real_part")?.real();
        Ok(self.record(y, Op::RealPart(z), &[z]))
    }

    /// Complex tensor scaled elementwise by a real tensor of the same shape.
    pub fn complex_scale(&mut self, z: Var, s: Var) -> Result<Var> {
        let (zt, st) = (self.complex_of(z, "complex_scale")?, self.real_of(s, "complex_scale")?);
        if zt.shape() != st.shape() {
            return Err(Error::sizing(format!("complex_scale shape mismatch: {:?} vs {:?}", zt.shape(), st.shape())));
        }
        let data: Vec<Complex64> = zt.data().iter().zip(st.data()).map(|(a, b)| a * b).collect();
        let y = ComplexTensor::from_vec(zt.shape(), data)?;
        Ok(self.record_complex(y, Op::ComplexScale(z, s), &[z, s]))
    }

    /// Shape check helper for callers composing broadcast operations.
    pub fn broadcast_shape(&self, a: Var, b: Var) -> Result<Shape> {
        broadcast_shape(self.shape(a), self.shape(b))
    }
}

/// Writes `x` into a zero tensor of `shape` at spatial offset `(top, left)`.
pub(crate) fn place(x: &Tensor, shape: Shape, top: usize, left: usize) -> Tensor {
    let [_, _, h, w] = x.shape();
    let ow = shape[3];
    let mut y = Tensor::zeros(shape);
    for p in 0..x.planes() {
        let src = x.plane(p);
        let dst = y.plane_mut(p);
        for i in 0..h {
            dst[(top + i) * ow + left..(top + i) * ow + left + w].copy_from_slice(&src[i * w..(i + 1) * w]);
        }
    }
    y
}

/// Reads the `shape`-sized spatial window of `x` at `(top, left)`.
pub(crate) fn extract(x: &Tensor, shape: Shape, top: usize, left: usize) -> Tensor {
    let w = x.width();
    let [_, _, oh, ow] = shape;
    let mut y = Tensor::zeros(shape);
    for p in 0..x.planes() {
        let src = x.plane(p);
        let dst = y.plane_mut(p);
        for i in 0..oh {
            dst[i * ow..(i + 1) * ow].copy_from_slice(&src[(top + i) * w + left..(top + i) * w + left + ow]);
        }
    }
    y
}
