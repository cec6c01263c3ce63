use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::metrics::PerceptualProxy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub mse: f64,
    pub ssim: f64,
    pub perceptual: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { mse: 1.0, ssim: 0.2, perceptual: 0.2 }
    }
}

/// `w_mse·MSE + w_ssim·(1 − SSIM) + w_perc·perceptual`, on the value range
/// `[0, 1]`. Terms with zero weight are not recorded.
pub fn composite_loss(
    tape: &mut Tape,
    pred: Var,
    target: Var,
    weights: &LossWeights,
    proxy: &PerceptualProxy,
) -> Result<Var> {
    if tape.shape(pred) != tape.shape(target) {
        return Err(Error::sizing(format!(
            "prediction {:?} and target {:?} differ in shape",
            tape.shape(pred),
            tape.shape(target)
        )));
    }
    let mut terms = Vec::with_capacity(3);
    if weights.mse != 0.0 {
        let m = tape.mse(pred, target)?;
        terms.push(tape.scalar_mul(m, weights.mse)?);
    }
    if weights.ssim != 0.0 {
        let s = tape.ssim(pred, target, 1.0)?;
        let d = tape.scalar_mul(s, -weights.ssim)?;
        terms.push(tape.add_scalar(d, weights.ssim)?);
    }
    if weights.perceptual != 0.0 {
        let p = perceptual(tape, pred, target, proxy)?;
        terms.push(tape.scalar_mul(p, weights.perceptual)?);
    }
    let mut total = match terms.first() {
        Some(&t) => t,
        None => return Err(Error::config("all loss weights are zero")),
    };
    for &t in &terms[1..] {
        total = tape.add(total, t)?;
    }
    Ok(total)
}

/// Perceptual proxy distance recorded on the tape; the feature extractor's
/// weights are constants.
fn perceptual(tape: &mut Tape, a: Var, b: Var, proxy: &PerceptualProxy) -> Result<Var> {
    let [n, c, h, w] = tape.shape(a);
    if h % 8 != 0 || w % 8 != 0 {
        return Err(Error::sizing(format!("perceptual proxy needs extents divisible by 8, got {h}x{w}")));
    }
    let mut fa = tape.reshape(a, [n * c, 1, h, w])?;
    let mut fb = tape.reshape(b, [n * c, 1, h, w])?;
    let stages = proxy.weights().len();
    let mut total = None;
    for weight in proxy.weights() {
        let wv = tape.constant(weight.clone());
        for f in [&mut fa, &mut fb] {
            let y = tape.conv2d(*f, wv, 1)?;
            let y = tape.relu(y)?;
            *f = tape.avg_pool2(y)?;
        }
        let d = tape.mse(fa, fb)?;
        total = Some(match total {
            Some(t) => tape.add(t, d)?,
            None => d,
        });
    }
    let total = total.ok_or_else(|| Error::config("perceptual proxy has no stages"))?;
    tape.scalar_mul(total, 1.0 / stages as f64)
}
