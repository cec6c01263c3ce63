//! Constant-regularizer Wiener deconvolution.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::PointSpreadFunction;
use crate::tensor::{fft2, ifft2, ComplexTensor, ImagePlane};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WienerConfig {
    pub delta: f64,
}

impl Default for WienerConfig {
    fn default() -> Self {
        Self { delta: 1e-2 }
    }
}

impl WienerConfig {
    pub fn new(delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Ok(Self { delta })
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::argument(format!("Wiener delta must be > 0, got {delta}")));
    }
    Ok(())
}

/// `conj(P) / (|P|² + δ)` for a single bin.
pub fn wiener_gain(p: Complex64, delta: f64) -> Complex64 {
    p.conj() / (p.norm_sqr() + delta)
}

pub fn wiener_transfer(psf_freq: &ComplexTensor, delta: f64) -> Result<ComplexTensor> {
    check_delta(delta)?;
    let data = psf_freq.data().iter().map(|&p| wiener_gain(p, delta)).collect();
    ComplexTensor::from_vec(psf_freq.shape(), data)
}

/// Restores every plane of `measurement` with the PSF's cached spectrum.
pub fn wiener_restore(measurement: &ImagePlane, psf: &PointSpreadFunction, cfg: &WienerConfig) -> Result<ImagePlane> {
    let (h, w) = psf.extents();
    if (measurement.height(), measurement.width()) != (h, w) {
        return Err(Error::sizing(format!(
            "measurement {}x{} does not match PSF spectrum {h}x{w}",
            measurement.height(),
            measurement.width()
        )));
    }
    let transfer = wiener_transfer(psf.transform(), cfg.delta)?;
    let spectrum = fft2(measurement)?.mul(&transfer)?;
    let restored = ifft2(&spectrum)?;
    let out = restored.real();
    let residual = restored.imag().max_abs();
    if residual > 1e-9 * out.max_abs() + f64::MIN_POSITIVE {
        return Err(Error::Numerical(format!(
            "Wiener restoration has imaginary residual {residual:e} against output scale {:e}",
            out.max_abs()
        )));
    }
    Ok(out)
}
