//! Multi-scale reconstruction network: encoder stages with gated residual
//! blocks, a learnable mask simulator feeding Wiener fusion at every scale,
//! and an upsampling decoder.
//!
//! Parameters live in a [`Parameters`] registry; a forward pass binds them to
//! a fresh [`Tape`], so training and inference share one code path.

mod adam;
mod blocks;
mod checkpoint;
mod loss;
mod params;
mod train;

pub use adam::Adam;
pub use blocks::{cms_forward, recb_forward, sam_forward, scm_forward, wnfb_forward, RecbVars, ScmVars};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
pub use loss::{composite_loss, LossWeights};
pub use params::{Bound, Parameter, Parameters};
pub use train::{evaluate_psnr, train, Augmentation, Pair, TrainConfig, TrainHistory};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::optics::PointSpreadFunction;
use crate::tensor::{is_pow2, nn, Tensor};
use blocks::{conv_bias, linear, scm_skip};
use params::{scaled_normal, seeded};

/// Structural variants used for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    /// Residual blocks replaced by the identity.
    NoRecb,
    /// Mask bank fixed to the true PSF and gates fixed at 1.
    FixedPsf,
}

/// The four compared models: full, three scales, no residual blocks and
/// fixed PSF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    ThreeDown,
    NoRecb,
    FixedPsf,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::FixedPsf, Ablation::ThreeDown, Ablation::NoRecb];

    pub fn label(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::ThreeDown => "three_down",
            Ablation::NoRecb => "no_recb",
            Ablation::FixedPsf => "fixed_psf",
        }
    }

    /// Derives the variant's configuration from the full model's.
    pub fn apply(self, base: &NetworkConfig) -> NetworkConfig {
        let mut cfg = base.clone();
        match self {
            Ablation::Full => cfg.variant = Variant::Full,
            Ablation::ThreeDown => {
                cfg.variant = Variant::Full;
                cfg.scales = 3;
            }
            Ablation::NoRecb => cfg.variant = Variant::NoRecb,
            Ablation::FixedPsf => cfg.variant = Variant::FixedPsf,
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Number of resolution levels (the input is downsampled `scales - 1` times).
    pub scales: usize,
    /// Channel width at full resolution; doubles per level.
    pub base_channels: usize,
    /// `[height, width]`, powers of two divisible by `2^(scales-1)`.
    pub input_extents: [usize; 2],
    /// Image channels of measurement and output.
    pub channels: usize,
    pub wiener_delta_init: f64,
    pub loss_weights: LossWeights,
    pub perceptual_seed: u64,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            scales: 4,
            base_channels: 8,
            input_extents: [32, 32],
            channels: 1,
            wiener_delta_init: 1e-2,
            loss_weights: LossWeights::default(),
            perceptual_seed: crate::metrics::DEFAULT_PERCEPTUAL_SEED,
            seed: 0,
            variant: Variant::Full,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales < 2 {
            return Err(Error::config(format!("scales must be >= 2, got {}", self.scales)));
        }
        if self.base_channels < 2 || !self.base_channels.is_multiple_of(2) {
            return Err(Error::config(format!("base_channels must be even and >= 2, got {}", self.base_channels)));
        }
        if self.channels == 0 {
            return Err(Error::config("channels must be >= 1"));
        }
        if !(self.wiener_delta_init > 0.0 && self.wiener_delta_init.is_finite()) {
            return Err(Error::config("wiener_delta_init must be positive"));
        }
        let factor = 1usize << (self.scales - 1);
        for e in self.input_extents {
            if !is_pow2(e) || e % factor != 0 || e / factor < 4 {
                return Err(Error::config(format!(
                    "input extent {e} must be a power of two with at least 4 pixels after {} halvings",
                    self.scales - 1
                )));
            }
        }
        Ok(())
    }

    pub fn level_channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn level_extents(&self, level: usize) -> (usize, usize) {
        (self.input_extents[0] >> level, self.input_extents[1] >> level)
    }
}

/// The network: its configuration and parameter registry.
#[derive(Debug, Clone, PartialEq)]
pub struct LensNet {
    config: NetworkConfig,
    params: Parameters,
}

fn name(level: usize, part: &str) -> String {
    format!("level{level}.{part}")
}

impl LensNet {
    /// Builds and initializes the network. When `psf` is given, the mask
    /// bank at every level starts from it (downsampled); otherwise from an
    /// impulse. The fixed-PSF variant requires `psf`.
    pub fn new(config: NetworkConfig, psf: Option<&PointSpreadFunction>) -> Result<Self> {
        if config.variant == Variant::FixedPsf && psf.is_none() {
            return Err(Error::config("the fixed-PSF variant needs the true PSF"));
        }
        Self::construct(config, psf)
    }

    /// Builds the parameter layout without the fixed-PSF precondition; the
    /// checkpoint loader overwrites every value afterwards.
    pub(crate) fn construct(config: NetworkConfig, psf: Option<&PointSpreadFunction>) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(config.seed);
        let mut p = Parameters::new();
        let c0 = config.base_channels;
        let zeros = |c: usize| Tensor::zeros([1, c, 1, 1]);
        p.insert("stem.weight", normal([c0, config.channels, 1, 1], &mut rng), false)?;
        p.insert("stem.bias", zeros(c0), false)?;

        let bank0 = bank_source(&config, psf)?;
        let mut bank_map = bank0;
        let fixed = config.variant == Variant::FixedPsf;
        for level in 0..config.scales {
            let c = config.level_channels(level);
            let half = c / 2;
            if level > 0 {
                bank_map = downsample_map(&bank_map)?;
            }
            p.insert(name(level, "proj.weight"), normal([c, c, 1, 1], &mut rng), false)?;
            p.insert(name(level, "proj.bias"), zeros(c), false)?;
            if config.variant != Variant::NoRecb {
                insert_recb(&mut p, &format!("level{level}.recb"), c, &mut rng)?;
            }
            if !fixed {
                p.insert(name(level, "cms.weight"), normal([half, c, 1, 1], &mut rng), false)?;
                p.insert(name(level, "cms.bias"), zeros(half), false)?;
            }
            p.insert(name(level, "cms.bank"), bank_logits(&bank_map, half), fixed)?;
            let mut matching = Tensor::zeros([c, half, 1, 1]);
            for o in 0..c {
                matching.data_mut()[o * half + o % half] = 1.0;
            }
            p.insert(name(level, "cms.match"), matching, fixed)?;
            p.insert(name(level, "wnfb.log_delta"), Tensor::scalar(config.wiener_delta_init.ln()), false)?;
            if level + 1 < config.scales {
                p.insert(name(level, "down.weight"), normal([2 * c, c, 3, 3], &mut rng), false)?;
                p.insert(name(level, "down.bias"), zeros(2 * c), false)?;
            }
        }
        let deepest = config.level_channels(config.scales - 1);
        if config.variant != Variant::NoRecb {
            insert_recb(&mut p, "bottleneck.recb", deepest, &mut rng)?;
        }
        for level in (0..config.scales - 1).rev() {
            let c = config.level_channels(level);
            p.insert(name(level, "sam.weight"), normal([c, 3 * c, 3, 3], &mut rng), false)?;
            p.insert(name(level, "sam.bias"), zeros(c), false)?;
        }
        p.insert("head.weight", normal([config.channels, c0, 1, 1], &mut rng), false)?;
        p.insert("head.bias", zeros(config.channels), false)?;
        Ok(Self { config, params: p })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Parameters {
        &mut self.params
    }

    pub fn count_parameters(&self) -> usize {
        self.params.count()
    }

    /// Records the forward pass of `x` (`N×channels×H×W`) on `tape`.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let cfg = &self.config;
        let [_, ch, h, w] = tape.shape(x);
        if ch != cfg.channels || [h, w] != cfg.input_extents {
            return Err(Error::config(format!(
                "network expects {}x{}x{} inputs, got {ch}x{h}x{w}",
                cfg.channels, cfg.input_extents[0], cfg.input_extents[1]
            )));
        }
        let p = &self.params;
        let v = |n: &str| bound.var(p, n);
        let batch = tape.shape(x)[0];
        let stem = linear(tape, x, v("stem.weight"), v("stem.bias"))?;
        let mut current = stem;
        let mut skips = Vec::with_capacity(cfg.scales);
        for level in 0..cfg.scales {
            let l = |part: &str| v(&name(level, part));
            let recb = self.recb_vars(bound, &format!("level{level}.recb"));
            let features = scm_skip(tape, current, l("proj.weight"), l("proj.bias"), recb.as_ref())?;
            let psf = match cfg.variant {
                Variant::FixedPsf => {
                    let half = cfg.level_channels(level) / 2;
                    let ones = tape.constant(Tensor::full([batch, half, 1, 1], 1.0));
                    let maps = tape.softmax_spatial(l("cms.bank"))?;
                    tape.mul(ones, maps)?
                }
                _ => cms_forward(tape, features, l("cms.weight"), l("cms.bias"), l("cms.bank"))?.1,
            };
            let psf = tape.pointwise_conv(psf, l("cms.match"))?;
            skips.push(wnfb_forward(tape, features, psf, l("wnfb.log_delta"))?);
            if level + 1 < cfg.scales {
                current = conv_bias(tape, features, l("down.weight"), l("down.bias"), 2)?;
            }
        }
        let mut deep = skips.pop().expect("scales >= 2");
        if let Some(r) = self.recb_vars(bound, "bottleneck.recb") {
            deep = recb_forward(tape, deep, &r)?;
        }
        for level in (0..cfg.scales - 1).rev() {
            let l = |part: &str| v(&name(level, part));
            deep = sam_forward(tape, deep, skips[level], l("sam.weight"), l("sam.bias"))?;
        }
        let out = linear(tape, deep, v("head.weight"), v("head.bias"))?;
        tape.sigmoid(out)
    }

    fn recb_vars(&self, bound: &Bound, prefix: &str) -> Option<RecbVars> {
        self.params.position(&format!("{prefix}.conv1.weight"))?;
        let v = |part: &str| bound.var(&self.params, &format!("{prefix}.{part}"));
        Some(RecbVars {
            conv1_w: v("conv1.weight"),
            conv1_b: v("conv1.bias"),
            conv2_w: v("conv2.weight"),
            conv2_b: v("conv2.bias"),
            gate_w: v("gate.weight"),
            gate_b: v("gate.bias"),
        })
    }

    /// Inference on a batch of measurements.
    pub fn predict(&self, measurement: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let x = tape.constant(measurement.clone());
        let y = self.forward(&mut tape, &bound, x)?;
        Ok(tape.tensor(y).clone())
    }

    /// Floating-point operations of one forward pass on a single image.
    ///
    /// Convolutions and pointwise layers count `2·MAC`; each complex 2-D FFT
    /// of an `H×W` plane counts `5·H·W·log2(H·W)`. Elementwise operations,
    /// pooling and resampling are not counted.
    pub fn count_flops(&self) -> u64 {
        count_flops(&self.config)
    }
}

pub fn count_flops(cfg: &NetworkConfig) -> u64 {
    let conv = |cin: usize, cout: usize, k: usize, h: usize, w: usize| (2 * cin * cout * k * k * h * w) as u64;
    let fft = |h: usize, w: usize| {
        let n = (h * w) as f64;
        (5.0 * n * n.log2()).round() as u64
    };
    let recb = cfg.variant != Variant::NoRecb;
    let [h0, w0] = cfg.input_extents;
    let mut total = conv(cfg.channels, cfg.base_channels, 1, h0, w0);
    for level in 0..cfg.scales {
        let c = cfg.level_channels(level);
        let half = c / 2;
        let (h, w) = cfg.level_extents(level);
        total += conv(c, c, 1, h, w);
        if recb {
            total += 2 * conv(c, c, 3, h, w) + conv(c, c, 1, h, w);
        }
        if cfg.variant != Variant::FixedPsf {
            total += conv(c, half, 1, 1, 1);
        }
        total += conv(half, c, 1, h, w);
        // Two forward transforms and one inverse per channel.
        total += 3 * c as u64 * fft(h, w);
        if level + 1 < cfg.scales {
            total += conv(c, 2 * c, 3, h / 2, w / 2);
            total += conv(3 * c, c, 3, h, w);
        }
    }
    if recb {
        let c = cfg.level_channels(cfg.scales - 1);
        let (h, w) = cfg.level_extents(cfg.scales - 1);
        total += 2 * conv(c, c, 3, h, w) + conv(c, c, 1, h, w);
    }
    total + conv(cfg.base_channels, cfg.channels, 1, h0, w0)
}

/// Residual branches start at a tenth of unit gain so each block begins
/// close to the identity.
const RESIDUAL_GAIN: f64 = 0.1;

fn normal(shape: crate::tensor::Shape, rng: &mut rand_chacha::ChaCha8Rng) -> Tensor {
    scaled_normal(shape, 1.0, rng)
}

fn insert_recb(p: &mut Parameters, prefix: &str, c: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Result<()> {
    p.insert(format!("{prefix}.conv1.weight"), scaled_normal([c, c, 3, 3], std::f64::consts::SQRT_2, rng), false)?;
    p.insert(format!("{prefix}.conv1.bias"), Tensor::zeros([1, c, 1, 1]), false)?;
    p.insert(format!("{prefix}.conv2.weight"), scaled_normal([c, c, 3, 3], RESIDUAL_GAIN, rng), false)?;
    p.insert(format!("{prefix}.conv2.bias"), Tensor::zeros([1, c, 1, 1]), false)?;
    p.insert(format!("{prefix}.gate.weight"), normal([c, c, 1, 1], rng), false)?;
    p.insert(format!("{prefix}.gate.bias"), Tensor::zeros([1, c, 1, 1]), false)
}

/// Full-resolution PSF map used to seed the mask bank.
fn bank_source(cfg: &NetworkConfig, psf: Option<&PointSpreadFunction>) -> Result<Tensor> {
    let [h, w] = cfg.input_extents;
    match psf {
        Some(psf) => {
            if psf.extents() != (h, w) {
                return Err(Error::config(format!(
                    "PSF extents {:?} differ from network input {h}x{w}",
                    psf.extents()
                )));
            }
            Ok(psf.centered_kernel().clone())
        }
        None => Ok(Tensor::impulse([1, 1, h, w], 0, 0)),
    }
}

/// Halves the extents of a single-plane map by 2×2 averaging, renormalized.
fn downsample_map(map: &Tensor) -> Result<Tensor> {
    let pooled = nn::avg_pool2(map)?;
    let total = pooled.sum();
    Ok(pooled.scale(1.0 / total))
}

/// Logits whose spatial softmax reproduces `map` (up to a small floor), one
/// copy per bank entry.
fn bank_logits(map: &Tensor, entries: usize) -> Tensor {
    const FLOOR: f64 = 1e-6;
    let total = map.sum();
    let plane: Vec<f64> = map.data().iter().map(|v| (v / total + FLOOR).ln()).collect();
    let [_, _, h, w] = map.shape();
    let data = (0..entries).flat_map(|_| plane.iter().copied()).collect();
    Tensor::from_vec([1, entries, h, w], data).expect("valid shape")
}
