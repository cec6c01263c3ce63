//! Dense N×C×H×W tensors in double precision, plus the FFT, convolution and
//! resampling primitives every other module builds on.

mod conv;
mod fft;
pub mod nn;
mod resample;

pub use conv::{conv2d, correlate2d, ConvMode};
pub use fft::{fft2, fft2_complex, ifft2, is_pow2};
pub use resample::{bilinear_upsample, crop, pad_to_pow2, upsample_taps, UpsampleTap};

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

/// Extents in (batch, channels, height, width) order.
pub type Shape = [usize; 4];

/// Scenes and measurements are plain tensors; the alias documents intent.
pub type ImagePlane = Tensor;

fn check_shape(shape: Shape) -> Result<usize> {
    if shape.contains(&0) {
        return Err(Error::sizing(format!("all extents must be >= 1, got {shape:?}")));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| Error::sizing(format!("extents overflow: {shape:?}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != data.len() {
            return Err(Error::sizing(format!("shape {shape:?} needs {len} elements, got {}", data.len())));
        }
        Ok(Self { shape, data })
    }

    /// Single H×W plane.
    pub fn from_plane(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_vec([1, 1, height, width], data)
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        let len = check_shape(shape).expect("invalid tensor shape");
        Self { shape, data: vec![value; len] }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: [1, 1, 1, 1], data: vec![value] }
    }

    /// Unit impulse at `(i, j)` in every plane.
    pub fn impulse(shape: Shape, i: usize, j: usize) -> Self {
        let mut t = Self::zeros(shape);
        for p in 0..t.planes() {
            t.plane_mut(p)[i * shape[3] + j] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of H×W planes (N·C).
    pub fn planes(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, p: usize) -> &[f64] {
        let len = self.plane_len();
        &self.data[p * len..(p + 1) * len]
    }

    pub fn plane_mut(&mut self, p: usize) -> &mut [f64] {
        let len = self.plane_len();
        &mut self.data[p * len..(p + 1) * len]
    }

    fn offset(&self, n: usize, c: usize, i: usize, j: usize) -> usize {
        let [_, cs, hs, ws] = self.shape;
        ((n * cs + c) * hs + i) * ws + j
    }

    pub fn get(&self, n: usize, c: usize, i: usize, j: usize) -> f64 {
        self.data[self.offset(n, c, i, j)]
    }

    pub fn set(&mut self, n: usize, c: usize, i: usize, j: usize, value: f64) {
        let o = self.offset(n, c, i, j);
        self.data[o] = value;
    }

    /// Same data, new extents with equal element count.
    pub fn reshape(self, shape: Shape) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    /// Copies out batch item `n` as a 1×C×H×W tensor.
    pub fn item(&self, n: usize) -> Tensor {
        let [_, c, h, w] = self.shape;
        let len = c * h * w;
        Tensor { shape: [1, c, h, w], data: self.data[n * len..(n + 1) * len].to_vec() }
    }

    /// Stacks equally shaped tensors along the batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items.first().ok_or_else(|| Error::argument("cannot stack zero tensors"))?;
        let [_, c, h, w] = first.shape;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape[1..] != first.shape[1..] {
                return Err(Error::sizing(format!("stack shape mismatch: {:?} vs {:?}", t.shape, first.shape)));
            }
            data.extend_from_slice(&t.data);
        }
        let n: usize = items.iter().map(|t| t.shape[0]).sum();
        Tensor::from_vec([n, c, h, w], data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.ensure_same_shape(other)?;
        Ok(Tensor { shape: self.shape, data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() })
    }

    pub fn ensure_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::sizing(format!("shape mismatch: {:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, alpha: f64) -> Tensor {
        self.map(|v| alpha * v)
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) -> Result<()> {
        self.ensure_same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn clamp_min(&self, lo: f64) -> Tensor {
        self.map(|v| v.max(lo))
    }

    /// Circular shift of every plane by (`di`, `dj`).
    pub fn roll(&self, di: isize, dj: isize) -> Tensor {
        let (h, w) = (self.height(), self.width());
        let mut out = Tensor::zeros(self.shape);
        for p in 0..self.planes() {
            let src = self.plane(p);
            let dst = out.plane_mut(p);
            for i in 0..h {
                let ti = (i as isize + di).rem_euclid(h as isize) as usize;
                for j in 0..w {
                    let tj = (j as isize + dj).rem_euclid(w as isize) as usize;
                    dst[ti * w + tj] = src[i * w + j];
                }
            }
        }
        out
    }

    /// Reflection about the origin with wrap-around: `out[i,j] = x[-i mod H, -j mod W]`.
    pub fn circular_flip(&self) -> Tensor {
        let (h, w) = (self.height(), self.width());
        let mut out = Tensor::zeros(self.shape);
        for p in 0..self.planes() {
            let src = self.plane(p);
            let dst = out.plane_mut(p);
            for i in 0..h {
                for j in 0..w {
                    dst[((h - i) % h) * w + (w - j) % w] = src[i * w + j];
                }
            }
        }
        out
    }

    pub fn rot90(&self) -> Tensor {
        let (h, w) = (self.height(), self.width());
        let mut out = Tensor::zeros([self.shape[0], self.shape[1], w, h]);
        for p in 0..self.planes() {
            let src = self.plane(p);
            let dst = out.plane_mut(p);
            for i in 0..h {
                for j in 0..w {
                    // counter-clockwise
                    dst[(w - 1 - j) * h + i] = src[i * w + j];
                }
            }
        }
        out
    }

    pub fn flip_horizontal(&self) -> Tensor {
        let (h, w) = (self.height(), self.width());
        let mut out = self.clone();
        for p in 0..self.planes() {
            let src = self.plane(p);
            let dst = &mut out.data[p * h * w..(p + 1) * h * w];
            for i in 0..h {
                for j in 0..w {
                    dst[i * w + j] = src[i * w + (w - 1 - j)];
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    shape: Shape,
    data: Vec<Complex64>,
}

impl ComplexTensor {
    pub fn from_vec(shape: Shape, data: Vec<Complex64>) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != data.len() {
            return Err(Error::sizing(format!("shape {shape:?} needs {len} elements, got {}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        let len = check_shape(shape).expect("invalid tensor shape");
        Self { shape, data: vec![Complex64::new(0.0, 0.0); len] }
    }

    pub fn from_real(t: &Tensor) -> Self {
        Self { shape: t.shape, data: t.data.iter().map(|&v| Complex64::new(v, 0.0)).collect() }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn planes(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn plane(&self, p: usize) -> &[Complex64] {
        let len = self.plane_len();
        &self.data[p * len..(p + 1) * len]
    }

    pub fn plane_mut(&mut self, p: usize) -> &mut [Complex64] {
        let len = self.plane_len();
        &mut self.data[p * len..(p + 1) * len]
    }

    pub fn conj(&self) -> ComplexTensor {
        ComplexTensor { shape: self.shape, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn real(&self) -> Tensor {
        Tensor { shape: self.shape, data: self.data.iter().map(|z| z.re).collect() }
    }

    pub fn imag(&self) -> Tensor {
        Tensor { shape: self.shape, data: self.data.iter().map(|z| z.im).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Elementwise product; `other` may be a single plane broadcast over all planes.
    pub fn mul(&self, other: &ComplexTensor) -> Result<ComplexTensor> {
        let len = self.plane_len();
        if self.shape[2..] != other.shape[2..] || !(other.planes() == 1 || other.shape == self.shape) {
            return Err(Error::sizing(format!(
                "complex product shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = self.clone();
        for p in 0..self.planes() {
            let rhs = if other.planes() == 1 { other.plane(0) } else { other.plane(p) };
            for (z, &r) in out.data[p * len..(p + 1) * len].iter_mut().zip(rhs) {
                *z *= r;
            }
        }
        Ok(out)
    }
}
