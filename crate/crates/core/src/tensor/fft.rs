use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use super::{ComplexTensor, Shape, Tensor};
use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

pub fn is_pow2(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

fn check_pow2(shape: Shape) -> Result<()> {
    let (h, w) = (shape[2], shape[3]);
    if !is_pow2(h) || !is_pow2(w) {
        return Err(Error::sizing(format!("FFT extents must be powers of two, got {h}x{w} (pad first)")));
    }
    Ok(())
}

fn transform_planes(x: &mut ComplexTensor, direction: FftDirection) {
    let [_, _, h, w] = x.shape();
    let row = plan(w, direction);
    let col = plan(h, direction);
    let mut scratch = vec![Complex64::new(0.0, 0.0); row.get_inplace_scratch_len().max(col.get_inplace_scratch_len())];
    let mut column = vec![Complex64::new(0.0, 0.0); h];
    for p in 0..x.planes() {
        let plane = x.plane_mut(p);
        row.process_with_scratch(plane, &mut scratch);
        for j in 0..w {
            for i in 0..h {
                column[i] = plane[i * w + j];
            }
            col.process_with_scratch(&mut column, &mut scratch);
            for i in 0..h {
                plane[i * w + j] = column[i];
            }
        }
    }
}

/// Unnormalized forward 2-D DFT of every (n, c) plane.
pub fn fft2(x: &Tensor) -> Result<ComplexTensor> {
    fft2_complex(&ComplexTensor::from_real(x))
}

pub fn fft2_complex(x: &ComplexTensor) -> Result<ComplexTensor> {
    check_pow2(x.shape())?;
    let mut out = x.clone();
    transform_planes(&mut out, FftDirection::Forward);
    Ok(out)
}

/// Inverse 2-D DFT normalized by 1/(H·W), so `ifft2(fft2(x)) == x`.
pub fn ifft2(x: &ComplexTensor) -> Result<ComplexTensor> {
    check_pow2(x.shape())?;
    let mut out = x.clone();
    transform_planes(&mut out, FftDirection::Inverse);
    let scale = 1.0 / out.plane_len() as f64;
    for z in out.data_mut() {
        *z *= scale;
    }
    Ok(out)
}
