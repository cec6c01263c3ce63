//! Building blocks of the network, each recorded on a tape.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::is_pow2;

/// `pointwise_conv(x, w) + b` with `b` shaped `1×C×1×1`.
pub fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.pointwise_conv(x, w)?;
    tape.add(y, b)
}

pub fn conv_bias(tape: &mut Tape, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
    let y = tape.conv2d(x, w, stride)?;
    tape.add(y, b)
}

/// Channel-attention mask simulator. Returns the gates `s = σ(W·GAP(x) + b)`
/// (`N×C'×1×1`) and the PSF estimate `s_k · softmax(M_k)` (`N×C'×H×W`),
/// where `M` holds the mask-bank logits (`1×C'×H×W`).
pub fn cms_forward(tape: &mut Tape, x: Var, w: Var, b: Var, bank: Var) -> Result<(Var, Var)> {
    let c = tape.shape(x)[1];
    if !c.is_multiple_of(2) {
        return Err(Error::config(format!("mask simulator needs an even channel count, got {c}")));
    }
    let [cw_out, _, _, _] = tape.shape(w);
    if cw_out != c / 2 {
        return Err(Error::config(format!("mask simulator weight maps to {cw_out} channels, expected {}", c / 2)));
    }
    let z = tape.global_avg_pool(x)?;
    let logits = linear(tape, z, w, b)?;
    let gates = tape.sigmoid(logits)?;
    let maps = tape.softmax_spatial(bank)?;
    let psf = tape.mul(gates, maps)?;
    Ok((gates, psf))
}

/// Learnable Wiener fusion: `features + Re(ifft(conj(P)/(|P|²+e^θ) · fft(features)))`
/// with `P = fft(psf)` per channel and `θ = log_delta` (`1×1×1×1`).
pub fn wnfb_forward(tape: &mut Tape, features: Var, psf: Var, log_delta: Var) -> Result<Var> {
    let shape = tape.shape(features);
    if !is_pow2(shape[2]) || !is_pow2(shape[3]) {
        return Err(Error::sizing(format!("Wiener fusion needs power-of-two extents, got {}x{}", shape[2], shape[3])));
    }
    if tape.shape(psf) != shape {
        return Err(Error::sizing(format!("PSF estimate {:?} does not match features {:?}", tape.shape(psf), shape)));
    }
    let p = tape.fft2(psf)?;
    let pc = tape.complex_conj(p)?;
    let mag = tape.magnitude_sq(p)?;
    let delta = tape.exp(log_delta)?;
    let den = tape.add(mag, delta)?;
    let inv = tape.reciprocal(den)?;
    let gain = tape.complex_scale(pc, inv)?;
    let f = tape.fft2(features)?;
    let prod = tape.complex_mul(gain, f)?;
    let back = tape.ifft2(prod)?;
    let restored = tape.real_part(back)?;
    tape.add(features, restored)
}

/// Variables of one gated residual block.
#[derive(Debug, Clone, Copy)]
pub struct RecbVars {
    pub conv1_w: Var,
    pub conv1_b: Var,
    pub conv2_w: Var,
    pub conv2_b: Var,
    pub gate_w: Var,
    pub gate_b: Var,
}

/// `x + σ(pw(x)) ⊙ conv(relu(conv(x)))`.
pub fn recb_forward(tape: &mut Tape, x: Var, p: &RecbVars) -> Result<Var> {
    let h = conv_bias(tape, x, p.conv1_w, p.conv1_b, 1)?;
    let h = tape.relu(h)?;
    let t = conv_bias(tape, h, p.conv2_w, p.conv2_b, 1)?;
    let g = linear(tape, x, p.gate_w, p.gate_b)?;
    let g = tape.sigmoid(g)?;
    let gt = tape.mul(g, t)?;
    tape.add(x, gt)
}

#[derive(Debug, Clone, Copy)]
pub struct ScmVars {
    pub proj_w: Var,
    pub proj_b: Var,
    /// `None` replaces the residual block by the identity.
    pub recb: Option<RecbVars>,
    pub down_w: Var,
    pub down_b: Var,
}

/// Encoder stage: `skip = recb(proj(x))`, `down = conv_stride2(skip)`.
pub fn scm_forward(tape: &mut Tape, x: Var, p: &ScmVars) -> Result<(Var, Var)> {
    let [_, _, h, w] = tape.shape(x);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::sizing(format!("encoder stage needs even extents, got {h}x{w}")));
    }
    let skip = scm_skip(tape, x, p.proj_w, p.proj_b, p.recb.as_ref())?;
    let down = conv_bias(tape, skip, p.down_w, p.down_b, 2)?;
    Ok((down, skip))
}

pub(crate) fn scm_skip(tape: &mut Tape, x: Var, proj_w: Var, proj_b: Var, recb: Option<&RecbVars>) -> Result<Var> {
    let projected = linear(tape, x, proj_w, proj_b)?;
    match recb {
        Some(r) => recb_forward(tape, projected, r),
        None => Ok(projected),
    }
}

/// Decoder stage: upsample `deep` by 2, zero-pad (centered) to the skip's
/// extents, concatenate `[padded, skip]` and fuse with a 3×3 convolution.
pub fn sam_forward(tape: &mut Tape, deep: Var, skip: Var, conv_w: Var, conv_b: Var) -> Result<Var> {
    let up = tape.bilinear_upsample(deep, 2)?;
    let [_, _, uh, uw] = tape.shape(up);
    let [_, _, sh, sw] = tape.shape(skip);
    if sh < uh || sw < uw || (sh - uh) % 2 != 0 || (sw - uw) % 2 != 0 {
        return Err(Error::sizing(format!("cannot align upsampled {uh}x{uw} features with skip {sh}x{sw}")));
    }
    let padded = tape.zero_pad_spatial(up, sh, sw)?;
    let cat = tape.concat_channels(padded, skip)?;
    conv_bias(tape, cat, conv_w, conv_b, 1)
}
