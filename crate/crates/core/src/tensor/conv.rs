use super::{fft2, ifft2, ComplexTensor, Tensor};
use crate::error::{Error, Result};

/// Boundary convention for [`conv2d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvMode {
    /// Cyclic convolution; the kernel is zero-padded at the origin to the
    /// image extents. Used by the optical forward model.
    Circular,
    /// Zero-padded "same" convolution with the kernel anchored at
    /// `((kh-1)/2, (kw-1)/2)`. Used by network layers.
    ZeroSame,
}

/// Kernels are a single plane applied to every image plane, or one plane per
/// image plane.
fn kernel_plane(k: &Tensor, p: usize) -> &[f64] {
    if k.planes() == 1 {
        k.plane(0)
    } else {
        k.plane(p)
    }
}

fn check_kernel(x: &Tensor, k: &Tensor) -> Result<()> {
    if k.planes() != 1 && k.planes() != x.planes() {
        return Err(Error::sizing(format!(
            "kernel {:?} must have one plane or one per image plane of {:?}",
            k.shape(),
            x.shape()
        )));
    }
    if k.height() > x.height() || k.width() > x.width() {
        return Err(Error::sizing(format!(
            "kernel {}x{} larger than image {}x{}",
            k.height(),
            k.width(),
            x.height(),
            x.width()
        )));
    }
    Ok(())
}

/// Zero-pads every kernel plane at the origin up to the image extents.
fn pad_kernel(k: &Tensor, h: usize, w: usize) -> Tensor {
    let mut out = Tensor::zeros([1, k.planes(), h, w]);
    let (kh, kw) = (k.height(), k.width());
    for p in 0..k.planes() {
        let src = k.plane(p);
        let dst = out.plane_mut(p);
        for a in 0..kh {
            dst[a * w..a * w + kw].copy_from_slice(&src[a * kw..(a + 1) * kw]);
        }
    }
    out
}

fn spectral_product(x: &Tensor, k: &Tensor, conjugate: bool) -> Result<Tensor> {
    check_kernel(x, k)?;
    let kf = fft2(&pad_kernel(k, x.height(), x.width()))?;
    let kf = if conjugate { kf.conj() } else { kf };
    let xf = fft2(x)?;
    let mut prod = ComplexTensor::zeros(x.shape());
    for p in 0..x.planes() {
        let kp = if kf.planes() == 1 { kf.plane(0) } else { kf.plane(p) };
        for ((o, &a), &b) in prod.plane_mut(p).iter_mut().zip(xf.plane(p)).zip(kp) {
            *o = a * b;
        }
    }
    Ok(ifft2(&prod)?.real())
}

pub fn conv2d(x: &Tensor, k: &Tensor, mode: ConvMode) -> Result<Tensor> {
    match mode {
        ConvMode::Circular => spectral_product(x, k, false),
        ConvMode::ZeroSame => {
            check_kernel(x, k)?;
            Ok(conv_zero_same(x, k))
        }
    }
}

/// Circular cross-correlation, the adjoint of circular [`conv2d`]:
/// `<conv2d(x, k), y> == <x, correlate2d(y, k)>`.
pub fn correlate2d(x: &Tensor, k: &Tensor) -> Result<Tensor> {
    spectral_product(x, k, true)
}

fn conv_zero_same(x: &Tensor, k: &Tensor) -> Tensor {
    let (h, w) = (x.height(), x.width());
    let (kh, kw) = (k.height(), k.width());
    let (ch, cw) = ((kh as isize - 1) / 2, (kw as isize - 1) / 2);
    let mut out = Tensor::zeros(x.shape());
    for p in 0..x.planes() {
        let src = x.plane(p);
        let kern = kernel_plane(k, p);
        let dst = out.plane_mut(p);
        for a in 0..kh {
            // y[i, j] += k[a, b] * x[i + ch - a, j + cw - b]
            let di = ch - a as isize;
            for b in 0..kw {
                let dj = cw - b as isize;
                let kv = kern[a * kw + b];
                if kv == 0.0 {
                    continue;
                }
                let j0 = (-dj).max(0) as usize;
                let j1 = (w as isize - dj).min(w as isize).max(0) as usize;
                for i in 0..h {
                    let si = i as isize + di;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    let srow = &src[si as usize * w..(si as usize + 1) * w];
                    let drow = &mut dst[i * w..(i + 1) * w];
                    for j in j0..j1 {
                        drow[j] += kv * srow[(j as isize + dj) as usize];
                    }
                }
            }
        }
    }
    out
}
