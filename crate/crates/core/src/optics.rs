//! Coded masks, point spread functions and the lensless forward model
//! `measurement = clip₊(object ⊛ psf + noise)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{fft2, ifft2, pad_to_pow2, ComplexTensor, ImagePlane, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPattern {
    HorizontalLines,
    VerticalLines,
    Grid,
    Random,
}

impl std::str::FromStr for MaskPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "horizontal_lines" | "horizontal" => Ok(Self::HorizontalLines),
            "vertical_lines" | "vertical" => Ok(Self::VerticalLines),
            "grid" => Ok(Self::Grid),
            "random" => Ok(Self::Random),
            other => Err(Error::argument(format!("unknown mask pattern '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodedMask {
    pub pattern: MaskPattern,
    pub plane: Tensor,
    pub seed: u64,
    pub density: f64,
}

/// Builds a binary mask. Lines and grids have a fixed 2-pixel period; random
/// masks are i.i.d. Bernoulli(`density`) draws from the seeded generator.
pub fn generate_mask(pattern: MaskPattern, extents: (usize, usize), seed: u64, density: f64) -> Result<CodedMask> {
    let (h, w) = extents;
    if h < 2 || w < 2 {
        return Err(Error::argument(format!("mask extents must be at least 2x2, got {h}x{w}")));
    }
    if pattern == MaskPattern::Random && !(density > 0.0 && density < 1.0) {
        return Err(Error::argument(format!("random mask density must be in (0,1), got {density}")));
    }
    let mut plane = Tensor::zeros([1, 1, h, w]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..h {
        for j in 0..w {
            let on = match pattern {
                MaskPattern::HorizontalLines => i % 2 == 0,
                MaskPattern::VerticalLines => j % 2 == 0,
                MaskPattern::Grid => i % 2 == 0 && j % 2 == 0,
                MaskPattern::Random => rng.random::<f64>() < density,
            };
            plane.set(0, 0, i, j, if on { 1.0 } else { 0.0 });
        }
    }
    Ok(CodedMask { pattern, plane, seed, density })
}

/// A normalized, nonnegative blur kernel together with its cached spectrum.
///
/// `kernel` keeps the layout it was built from. The spectrum is taken of
/// `centered`, the kernel zero-padded to power-of-two extents and rolled so
/// its center of mass sits at (0, 0); both
/// the forward model and Wiener restoration use that spectrum, which keeps
/// restorations aligned with the object.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSpreadFunction {
    kernel: Tensor,
    centered: Tensor,
    transform: ComplexTensor,
    normalization: f64,
}

impl PointSpreadFunction {
    pub fn from_kernel(kernel: &Tensor) -> Result<Self> {
        if kernel.planes() != 1 {
            return Err(Error::sizing(format!("PSF kernel must be a single plane, got {:?}", kernel.shape())));
        }
        if kernel.data().iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain("PSF kernel entries must be finite and nonnegative".into()));
        }
        let total = kernel.sum();
        if total <= 0.0 {
            return Err(Error::DegenerateMask("kernel has no nonzero entry".into()));
        }
        let normalized = kernel.scale(1.0 / total);
        let (padded, _) = pad_to_pow2(&normalized);
        let (ci, cj) = center_of_mass(&padded);
        let centered = padded.roll(-(ci.round() as isize), -(cj.round() as isize));
        let transform = fft2(&centered)?;
        Ok(Self { kernel: normalized, centered, transform, normalization: total })
    }

    /// Identity optics: a unit impulse at the origin.
    pub fn delta(height: usize, width: usize) -> Result<Self> {
        Self::from_kernel(&Tensor::impulse([1, 1, height, width], 0, 0))
    }

    /// `(1 - spread)·δ + spread·(random mask)`: for `spread < 0.5` the
    /// spectrum magnitude is bounded below by `1 - 2·spread`.
    pub fn full_spectrum(height: usize, width: usize, spread: f64, seed: u64) -> Result<Self> {
        if !(0.0..0.5).contains(&spread) {
            return Err(Error::argument(format!("spread must be in [0, 0.5), got {spread}")));
        }
        let mask = generate_mask(MaskPattern::Random, (height, width), seed, 0.5)?;
        let scatter = mask.plane.scale(spread / mask.plane.sum());
        let mut kernel = scatter;
        let c = kernel.get(0, 0, 0, 0);
        kernel.set(0, 0, 0, 0, c + (1.0 - spread));
        Self::from_kernel(&kernel)
    }

    pub fn kernel(&self) -> &Tensor {
        &self.kernel
    }

    pub fn centered_kernel(&self) -> &Tensor {
        &self.centered
    }

    pub fn transform(&self) -> &ComplexTensor {
        &self.transform
    }

    /// Sum of the raw entries before normalization.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Extents of the cached spectrum, which images must match.
    pub fn extents(&self) -> (usize, usize) {
        (self.centered.height(), self.centered.width())
    }

    /// Largest squared spectrum magnitude: the Lipschitz constant of the
    /// data term's gradient.
    pub fn lipschitz(&self) -> f64 {
        self.transform.data().iter().fold(0.0, |m, z| m.max(z.norm_sqr()))
    }

    /// Smallest spectrum magnitude.
    pub fn min_spectrum(&self) -> f64 {
        self.transform.data().iter().fold(f64::INFINITY, |m, z| m.min(z.norm()))
    }

    /// Worst deviation between the cached spectrum and a fresh transform.
    pub fn transform_error(&self) -> Result<f64> {
        let fresh = fft2(&self.centered)?;
        Ok(fresh.data().iter().zip(self.transform.data()).fold(0.0, |m, (a, b)| m.max((a - b).norm())))
    }

    fn check_extents(&self, x: &Tensor) -> Result<()> {
        if (x.height(), x.width()) != self.extents() {
            return Err(Error::sizing(format!(
                "image {}x{} does not match PSF {}x{}",
                x.height(),
                x.width(),
                self.extents().0,
                self.extents().1
            )));
        }
        Ok(())
    }

    /// Circular convolution with the centered kernel (the operator `A`).
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.filter(x, |z| z)
    }

    /// Circular correlation with the centered kernel (the adjoint `Aᵀ`).
    pub fn apply_adjoint(&self, x: &Tensor) -> Result<Tensor> {
        self.filter(x, |z| z.conj())
    }

    fn filter(&self, x: &Tensor, f: impl Fn(Complex64) -> Complex64) -> Result<Tensor> {
        self.check_extents(x)?;
        let mut spec = fft2(x)?;
        let len = spec.plane_len();
        for p in 0..spec.planes() {
            for (z, &k) in spec.plane_mut(p).iter_mut().zip(&self.transform.data()[..len]) {
                *z *= f(k);
            }
        }
        Ok(ifft2(&spec)?.real())
    }
}

fn center_of_mass(k: &Tensor) -> (f64, f64) {
    let (mut ci, mut cj) = (0.0, 0.0);
    for i in 0..k.height() {
        for j in 0..k.width() {
            let v = k.get(0, 0, i, j);
            ci += v * i as f64;
            cj += v * j as f64;
        }
    }
    let total = k.sum();
    (ci / total, cj / total)
}

/// Ideal shadow model: the PSF is the mask pattern normalized to unit sum.
pub fn mask_to_psf(mask: &CodedMask) -> Result<PointSpreadFunction> {
    if mask.plane.data().iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateMask("mask has no open pixel".into()));
    }
    PointSpreadFunction::from_kernel(&mask.plane)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    Gaussian,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Standard deviation in image units (gaussian).
    #[serde(default)]
    pub sigma: f64,
    /// Expected photon count at value 1.0 (poisson).
    #[serde(default = "default_peak")]
    pub peak: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_peak() -> f64 {
    1000.0
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::gaussian(0.01, 0)
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self { kind: NoiseKind::None, sigma: 0.0, peak: default_peak(), seed: 0 }
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self { kind: NoiseKind::Gaussian, sigma, peak: default_peak(), seed }
    }

    pub fn poisson(peak: f64, seed: u64) -> Self {
        Self { kind: NoiseKind::Poisson, sigma: 0.0, peak, seed }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::argument(format!("noise sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.peak > 0.0 && self.peak.is_finite()) {
            return Err(Error::argument(format!("poisson peak must be > 0, got {}", self.peak)));
        }
        Ok(())
    }
}

pub fn add_noise(x: &ImagePlane, noise: &NoiseModel) -> Result<ImagePlane> {
    noise.validate()?;
    match noise.kind {
        NoiseKind::None => Ok(x.clone()),
        NoiseKind::Gaussian if noise.sigma == 0.0 => Ok(x.clone()),
        NoiseKind::Gaussian => {
            let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
            let mut out = x.clone();
            for v in out.data_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += noise.sigma * z;
            }
            Ok(out)
        }
        NoiseKind::Poisson => {
            if let Some(pos) = x.data().iter().position(|&v| !(v >= 0.0)) {
                return Err(Error::Domain(format!(
                    "poisson noise needs nonnegative input, found {} at index {pos}",
                    x.data()[pos]
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
            let mut out = x.clone();
            for v in out.data_mut() {
                let rate = *v * noise.peak;
                let count = if rate > 0.0 {
                    Poisson::new(rate).map_err(|e| Error::Domain(format!("poisson rate {rate}: {e}")))?.sample(&mut rng)
                } else {
                    0.0
                };
                *v = count / noise.peak;
            }
            Ok(out)
        }
    }
}

/// Noiseless part of the forward model: circular convolution with the PSF.
pub fn forward_clean(object: &ImagePlane, psf: &PointSpreadFunction) -> Result<ImagePlane> {
    psf.apply(object)
}

pub fn simulate_measurement(object: &ImagePlane, psf: &PointSpreadFunction, noise: &NoiseModel) -> Result<ImagePlane> {
    if let Some(v) = object.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("object values must lie in [0,1], found {v}")));
    }
    let clean = forward_clean(object, psf)?;
    Ok(add_noise(&clean, noise)?.clamp_min(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{conv2d, ConvMode};

    #[test]
    fn horizontal_lines_have_period_two() {
        let m = generate_mask(MaskPattern::HorizontalLines, (4, 4), 0, 0.5).unwrap();
        assert_eq!(m.plane.sum(), 8.0);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.plane.get(0, 0, i, j), if i % 2 == 0 { 1.0 } else { 0.0 });
            }
        }
        let v = generate_mask(MaskPattern::VerticalLines, (4, 4), 0, 0.5).unwrap();
        assert_eq!(v.plane, m.plane.rot90());
    }

    #[test]
    fn grid_is_product_of_lines() {
        let g = generate_mask(MaskPattern::Grid, (4, 4), 0, 0.5).unwrap();
        assert_eq!(g.plane.sum(), 4.0);
        for i in 0..4 {
            for j in 0..4 {
                let on = i % 2 == 0 && j % 2 == 0;
                assert_eq!(g.plane.get(0, 0, i, j) == 1.0, on);
            }
        }
    }

    #[test]
    fn random_mask_density_and_determinism() {
        let a = generate_mask(MaskPattern::Random, (64, 64), 42, 0.5).unwrap();
        let b = generate_mask(MaskPattern::Random, (64, 64), 42, 0.5).unwrap();
        let frac = a.plane.sum() / 4096.0;
        assert!((0.4..=0.6).contains(&frac), "{frac}");
        assert_eq!(a.plane.data(), b.plane.data());
        assert!(a.plane.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn invalid_mask_arguments() {
        for d in [0.0, 1.0, -0.2, f64::NAN] {
            assert!(matches!(generate_mask(MaskPattern::Random, (8, 8), 0, d), Err(Error::Argument(_))));
        }
        assert!(generate_mask(MaskPattern::Grid, (1, 8), 0, 0.5).is_err());
    }

    #[test]
    fn single_open_pixel_is_a_delta() {
        let mut plane = Tensor::zeros([1, 1, 8, 8]);
        plane.set(0, 0, 3, 6, 1.0);
        let mask = CodedMask { pattern: MaskPattern::Random, plane, seed: 0, density: 0.5 };
        let psf = mask_to_psf(&mask).unwrap();
        assert_eq!(psf.centered_kernel(), &Tensor::impulse([1, 1, 8, 8], 0, 0));
        let x = Tensor::from_plane(8, 8, (0..64).map(|v| (v as f64 / 64.0).sin()).collect()).unwrap();
        assert!(psf.apply(&x).unwrap().sub(&x).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn uniform_mask_gives_uniform_kernel() {
        let mask =
            CodedMask { pattern: MaskPattern::Random, plane: Tensor::full([1, 1, 3, 3], 1.0), seed: 0, density: 0.5 };
        let psf = mask_to_psf(&mask).unwrap();
        assert!(psf.kernel().data().iter().all(|&v| (v - 1.0 / 9.0).abs() < 1e-15));
        assert_eq!(psf.normalization(), 9.0);
    }

    #[test]
    fn grid_psf_transform_matches_recomputation() {
        let g = generate_mask(MaskPattern::Grid, (4, 4), 0, 0.5).unwrap();
        let psf = mask_to_psf(&g).unwrap();
        let nz: Vec<f64> = psf.kernel().data().iter().copied().filter(|&v| v != 0.0).collect();
        assert_eq!(nz, vec![0.25; 4]);
        // center of mass (1, 1) rolls to the origin
        let independent = fft2(&psf.kernel().roll(-1, -1)).unwrap();
        for (a, b) in independent.data().iter().zip(psf.transform().data()) {
            assert!((a - b).norm() < 1e-9);
        }
        assert!(psf.transform_error().unwrap() < 1e-9);
        assert!((psf.kernel().sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_mask_is_degenerate() {
        let mask =
            CodedMask { pattern: MaskPattern::Random, plane: Tensor::zeros([1, 1, 4, 4]), seed: 0, density: 0.5 };
        assert!(matches!(mask_to_psf(&mask), Err(Error::DegenerateMask(_))));
    }

    #[test]
    fn impulse_object_reproduces_centered_kernel() {
        let mask = generate_mask(MaskPattern::Random, (16, 16), 9, 0.3).unwrap();
        let psf = mask_to_psf(&mask).unwrap();
        let m = simulate_measurement(&Tensor::impulse([1, 1, 16, 16], 0, 0), &psf, &NoiseModel::none()).unwrap();
        assert!(m.sub(psf.centered_kernel()).unwrap().max_abs() < 1e-12);
        let shifted = simulate_measurement(&Tensor::impulse([1, 1, 16, 16], 5, 2), &psf, &NoiseModel::none()).unwrap();
        assert!(shifted.sub(&psf.centered_kernel().roll(5, 2)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn delta_psf_measurement_equals_object() {
        let psf = PointSpreadFunction::delta(8, 8).unwrap();
        let x = Tensor::from_plane(8, 8, (0..64).map(|v| v as f64 / 63.0).collect()).unwrap();
        let m = simulate_measurement(&x, &psf, &NoiseModel::none()).unwrap();
        assert!(m.sub(&x).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn noisy_measurement_is_conv_plus_seeded_draw() {
        let x = Tensor::from_plane(32, 32, (0..1024).map(|v| ((v * 37) % 101) as f64 / 100.0).collect()).unwrap();
        let psf = mask_to_psf(&generate_mask(MaskPattern::Grid, (32, 32), 0, 0.5).unwrap()).unwrap();
        let noise = NoiseModel::gaussian(0.01, 77);
        let m1 = simulate_measurement(&x, &psf, &noise).unwrap();
        let m2 = simulate_measurement(&x, &psf, &noise).unwrap();
        assert_eq!(m1.data(), m2.data());
        let conv = conv2d(&x, psf.centered_kernel(), ConvMode::Circular).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for (&got, &c) in m1.data().iter().zip(conv.data()) {
            let z: f64 = StandardNormal.sample(&mut rng);
            let expected = (c + 0.01 * z).max(0.0);
            assert!((got - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn extent_mismatch_is_a_sizing_error() {
        let psf = PointSpreadFunction::delta(8, 8).unwrap();
        let x = Tensor::zeros([1, 1, 16, 16]);
        assert!(matches!(simulate_measurement(&x, &psf, &NoiseModel::none()), Err(Error::Sizing(_))));
    }

    #[test]
    fn noise_identities_and_statistics() {
        let x = Tensor::full([1, 1, 64, 64], 0.3);
        assert_eq!(add_noise(&x, &NoiseModel::none()).unwrap(), x);
        assert_eq!(add_noise(&x, &NoiseModel::gaussian(0.0, 5)).unwrap(), x);
        let z = add_noise(&Tensor::zeros([1, 1, 64, 64]), &NoiseModel::gaussian(0.1, 5)).unwrap();
        let mean = z.mean();
        let sd = (z.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (z.len() - 1) as f64).sqrt();
        assert!((0.09..=0.11).contains(&sd), "{sd}");
    }

    #[test]
    fn poisson_rejects_negative_input() {
        let x = Tensor::from_plane(1, 2, vec![0.5, -0.1]).unwrap();
        assert!(matches!(add_noise(&x, &NoiseModel::poisson(100.0, 1)), Err(Error::Domain(_))));
        let y = add_noise(&Tensor::full([1, 1, 32, 32], 0.5), &NoiseModel::poisson(1000.0, 1)).unwrap();
        assert!((y.mean() - 0.5).abs() < 0.01);
        assert!(y.data().iter().all(|v| (v * 1000.0).fract() == 0.0));
    }

    #[test]
    fn invalid_noise_parameters() {
        assert!(add_noise(&Tensor::zeros([1, 1, 2, 2]), &NoiseModel::gaussian(-1.0, 0)).is_err());
        assert!(add_noise(&Tensor::zeros([1, 1, 2, 2]), &NoiseModel::poisson(0.0, 0)).is_err());
    }

    #[test]
    fn full_spectrum_psf_is_bounded_away_from_zero() {
        let psf = PointSpreadFunction::full_spectrum(32, 32, 0.3, 4).unwrap();
        assert!(psf.min_spectrum() >= 0.4 - 1e-12);
        assert!((psf.lipschitz() - 1.0).abs() < 1e-12);
    }
}
