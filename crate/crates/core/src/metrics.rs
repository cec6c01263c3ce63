//! Image-quality metrics: PSNR, Gaussian-window SSIM and a self-contained
//! perceptual distance built from a fixed-seed random convolutional network.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tensor::nn::{avg_pool2, conv2d_forward, relu};
use crate::tensor::{ImagePlane, Tensor};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const DEFAULT_PERCEPTUAL_SEED: u64 = 0x5EED;

fn check_pair(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::sizing(format!("metric inputs differ in shape: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn check_range(value_range: f64) -> Result<()> {
    if !(value_range > 0.0 && value_range.is_finite()) {
        return Err(Error::argument(format!("value range must be > 0, got {value_range}")));
    }
    Ok(())
}

pub fn mse(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    check_pair(a, b)?;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// `10·log10(range² / MSE)`; `f64::INFINITY` when the images are identical.
pub fn psnr(a: &ImagePlane, b: &ImagePlane, value_range: f64) -> Result<f64> {
    check_range(value_range)?;
    let err = mse(a, b)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (value_range * value_range / err).log10())
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (t, v) in g.iter_mut().enumerate() {
        let d = t as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= total);
    g
}

/// Separable valid-mode Gaussian filtering of one `h × w` plane.
fn filter_valid(x: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            rows[i * ow + j] = g.iter().zip(&x[i * w + j..]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for (t, k) in g.iter().enumerate() {
            let src = &rows[(i + t) * ow..(i + t + 1) * ow];
            for (o, v) in out[i * ow..(i + 1) * ow].iter_mut().zip(src) {
                *o += k * v;
            }
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters window maps back onto the image grid.
fn filter_valid_adjoint(m: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for i in 0..oh {
        for (t, k) in g.iter().enumerate() {
            let dst = &mut rows[(i + t) * ow..(i + t + 1) * ow];
            for (d, v) in dst.iter_mut().zip(&m[i * ow..(i + 1) * ow]) {
                *d += k * v;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..ow {
            let v = rows[i * ow + j];
            for (t, k) in g.iter().enumerate() {
                out[i * w + j + t] += k * v;
            }
        }
    }
    out
}

/// SSIM value and, optionally, its gradients with respect to both inputs.
pub(crate) struct SsimEval {
    pub value: f64,
    pub grad_a: Option<Tensor>,
    pub grad_b: Option<Tensor>,
}

pub(crate) fn ssim_eval(a: &Tensor, b: &Tensor, value_range: f64, want_grad: bool) -> Result<SsimEval> {
    check_pair(a, b)?;
    check_range(value_range)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::sizing(format!("SSIM needs extents >= {SSIM_WINDOW}, got {h}x{w}")));
    }
    let c1 = (0.01 * value_range).powi(2);
    let c2 = (0.03 * value_range).powi(2);
    let g = gaussian_window();
    let windows = (h - SSIM_WINDOW + 1) * (w - SSIM_WINDOW + 1);
    let total = (windows * a.planes()) as f64;

    let mut sum = 0.0;
    let mut grad_a = want_grad.then(|| Tensor::zeros(a.shape()));
    let mut grad_b = want_grad.then(|| Tensor::zeros(a.shape()));
    for p in 0..a.planes() {
        let (pa, pb) = (a.plane(p), b.plane(p));
        let sq = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| u * v).collect::<Vec<_>>();
        let mu_a = filter_valid(pa, h, w, &g);
        let mu_b = filter_valid(pb, h, w, &g);
        let s_aa = filter_valid(&sq(pa, pa), h, w, &g);
        let s_bb = filter_valid(&sq(pb, pb), h, w, &g);
        let s_ab = filter_valid(&sq(pa, pb), h, w, &g);

        let mut d_mu_a = vec![0.0; windows];
        let mut d_mu_b = vec![0.0; windows];
        let mut d_s_sq = vec![0.0; windows];
        let mut d_s_ab = vec![0.0; windows];
        for k in 0..windows {
            let (ma, mb) = (mu_a[k], mu_b[k]);
            let var_a = s_aa[k] - ma * ma;
            let var_b = s_bb[k] - mb * mb;
            let cov = s_ab[k] - ma * mb;
            let a1 = 2.0 * ma * mb + c1;
            let a2 = 2.0 * cov + c2;
            let b1 = ma * ma + mb * mb + c1;
            let b2 = var_a + var_b + c2;
            let s = (a1 * a2) / (b1 * b2);
            sum += s;
            if want_grad {
                let common = (a2 - a1) / (b1 * b2);
                let spread = s * (1.0 / b1 - 1.0 / b2);
                d_mu_a[k] = (2.0 * mb * common - 2.0 * ma * spread) / total;
                d_mu_b[k] = (2.0 * ma * common - 2.0 * mb * spread) / total;
                d_s_sq[k] = -s / b2 / total;
                d_s_ab[k] = 2.0 * a1 / (b1 * b2) / total;
            }
        }
        if let (Some(ga), Some(gb)) = (grad_a.as_mut(), grad_b.as_mut()) {
            let t_mu_a = filter_valid_adjoint(&d_mu_a, h, w, &g);
            let t_mu_b = filter_valid_adjoint(&d_mu_b, h, w, &g);
            let t_sq = filter_valid_adjoint(&d_s_sq, h, w, &g);
            let t_ab = filter_valid_adjoint(&d_s_ab, h, w, &g);
            let ga = ga.plane_mut(p);
            for q in 0..h * w {
                ga[q] = t_mu_a[q] + 2.0 * pa[q] * t_sq[q] + pb[q] * t_ab[q];
            }
            let gb = gb.plane_mut(p);
            for q in 0..h * w {
                gb[q] = t_mu_b[q] + 2.0 * pb[q] * t_sq[q] + pa[q] * t_ab[q];
            }
        }
    }
    Ok(SsimEval { value: sum / total, grad_a, grad_b })
}

/// Mean SSIM over all 11×11 Gaussian windows (σ = 1.5) fully inside the
/// image, with `C1 = (0.01·L)²` and `C2 = (0.03·L)²`.
pub fn ssim(a: &ImagePlane, b: &ImagePlane, value_range: f64) -> Result<f64> {
    Ok(ssim_eval(a, b, value_range, false)?.value)
}

/// Random-feature stand-in for a learned perceptual distance: three
/// conv3×3 → ReLU → 2×2 mean-pool stages with 8, 16 and 32 channels and
/// He-normal weights drawn from a seeded generator.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptualProxy {
    seed: u64,
    weights: Vec<Tensor>,
}

pub const PERCEPTUAL_CHANNELS: [usize; 3] = [8, 16, 32];

impl PerceptualProxy {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(PERCEPTUAL_CHANNELS.len());
        let mut cin = 1;
        for &cout in &PERCEPTUAL_CHANNELS {
            let fan_in = (cin * 9) as f64;
            let std = (2.0 / fan_in).sqrt();
            let data = (0..cout * cin * 9)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    std * z
                })
                .collect();
            weights.push(Tensor::from_vec([cout, cin, 3, 3], data).expect("static shape"));
            cin = cout;
        }
        Self { seed, weights }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    /// Channels are treated as independent grayscale images.
    pub(crate) fn as_grayscale_batch(x: &Tensor) -> Result<Tensor> {
        let [n, c, h, w] = x.shape();
        if h % 8 != 0 || w % 8 != 0 {
            return Err(Error::sizing(format!("perceptual proxy needs extents divisible by 8, got {h}x{w}")));
        }
        x.clone().reshape([n * c, 1, h, w])
    }

    pub fn features(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut cur = Self::as_grayscale_batch(x)?;
        let mut feats = Vec::with_capacity(self.weights.len());
        for w in &self.weights {
            cur = avg_pool2(&relu(&conv2d_forward(&cur, w, 1)?))?;
            feats.push(cur.clone());
        }
        Ok(feats)
    }

    /// Mean over stages of the mean squared feature difference.
    pub fn distance(&self, a: &Tensor, b: &Tensor) -> Result<f64> {
        check_pair(a, b)?;
        let fa = self.features(a)?;
        let fb = self.features(b)?;
        let per_stage: f64 = fa.iter().zip(&fb).map(|(x, y)| mse(x, y)).sum::<Result<f64>>()?;
        Ok(per_stage / fa.len() as f64)
    }
}

pub fn perceptual_proxy(a: &ImagePlane, b: &ImagePlane, seed: u64) -> Result<f64> {
    PerceptualProxy::new(seed).distance(a, b)
}

fn serialize_psnr<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// `f64::INFINITY` for identical images; serialized as `"inf"`.
    #[serde(serialize_with = "serialize_psnr", deserialize_with = "deserialize_psnr")]
    pub psnr_db: f64,
    pub ssim: f64,
    /// Reported under the name "perceptual-proxy".
    #[serde(rename = "perceptual_proxy")]
    pub perceptual: f64,
    pub value_range: f64,
}

fn deserialize_psnr<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }
    match Repr::deserialize(d)? {
        Repr::Num(v) => Ok(v),
        Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
        Repr::Str(s) => Err(serde::de::Error::custom(format!("bad PSNR value '{s}'"))),
    }
}

impl MetricReport {
    pub fn evaluate(
        estimate: &ImagePlane,
        reference: &ImagePlane,
        value_range: f64,
        proxy: &PerceptualProxy,
    ) -> Result<Self> {
        Ok(Self {
            psnr_db: psnr(estimate, reference, value_range)?,
            ssim: ssim(estimate, reference, value_range)?,
            perceptual: proxy.distance(estimate, reference)?,
            value_range,
        })
    }

    /// Averages reports; infinite PSNRs propagate.
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        let n = reports.len() as f64;
        let first = reports.first()?;
        Some(MetricReport {
            psnr_db: reports.iter().map(|r| r.psnr_db).sum::<f64>() / n,
            ssim: reports.iter().map(|r| r.ssim).sum::<f64>() / n,
            perceptual: reports.iter().map(|r| r.perceptual).sum::<f64>() / n,
            value_range: first.value_range,
        })
    }
}
