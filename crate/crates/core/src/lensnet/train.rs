//! Minibatch training loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{composite_loss, Adam, LensNet};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::metrics::{psnr, PerceptualProxy};
use crate::optics::{simulate_measurement, NoiseModel, PointSpreadFunction};
use crate::tensor::Tensor;

/// A measurement and its ground-truth object, each `1×C×H×W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub measurement: Tensor,
    pub object: Tensor,
}

/// Forward model used to re-simulate measurements of augmented objects.
#[derive(Debug, Clone)]
pub struct Augmentation {
    pub psf: PointSpreadFunction,
    pub noise: NoiseModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stops after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
    pub augment: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 4,
            epochs: 60,
            max_steps: Some(2000),
            augment: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        Adam::new(self.learning_rate, self.beta1, self.beta2, self.epsilon).map(|_| ())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Loss of every optimizer step.
    pub step_losses: Vec<f64>,
    /// Mean step loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Number of steps completed at the end of each epoch.
    pub epoch_end_steps: Vec<usize>,
    /// Mean validation PSNR (dB) after each epoch; NaN without a validation set.
    pub val_psnr: Vec<f64>,
}

impl TrainHistory {
    /// Trailing moving average of the step losses.
    pub fn moving_average(&self, window: usize) -> Vec<f64> {
        let w = window.max(1);
        let mut out = Vec::with_capacity(self.step_losses.len());
        let mut acc = 0.0;
        for (i, l) in self.step_losses.iter().enumerate() {
            acc += l;
            if i >= w {
                acc -= self.step_losses[i - w];
            }
            out.push(acc / (i + 1).min(w) as f64);
        }
        out
    }

    /// `epoch,steps,mean_loss,val_psnr_db` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,steps,mean_loss,val_psnr_db\n");
        for (e, loss) in self.epoch_losses.iter().enumerate() {
            s.push_str(&format!("{},{},{},{}\n", e + 1, self.epoch_end_steps[e], loss, self.val_psnr[e]));
        }
        s
    }
}

/// Trains `net` in place with Adam on the composite loss.
///
/// Each epoch visits the training pairs in a freshly shuffled order. With
/// `augment` set, every drawn object is rotated by a random multiple of 90°
/// and possibly mirrored; its measurement is then re-simulated through
/// `forward` when given, or mirrored jointly with the object otherwise.
pub fn train(
    net: &mut LensNet,
    train: &[Pair],
    val: &[Pair],
    cfg: &TrainConfig,
    forward: Option<&Augmentation>,
) -> Result<TrainHistory> {
    if train.is_empty() {
        return Err(Error::argument("training set is empty"));
    }
    cfg.validate()?;
    let mut adam = Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)?;
    let proxy = PerceptualProxy::new(net.config().perceptual_seed);
    let weights = net.config().loss_weights;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut aug_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA076_1D64_78BD_642F);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainHistory::default();
    let budget = cfg.max_steps.unwrap_or(usize::MAX);

    for _ in 0..cfg.epochs {
        if history.step_losses.len() >= budget {
            break;
        }
        order.shuffle(&mut shuffle_rng);
        let first = history.step_losses.len();
        for chunk in order.chunks(cfg.batch_size) {
            if history.step_losses.len() >= budget {
                break;
            }
            let mut inputs = Vec::with_capacity(chunk.len());
            let mut targets = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let pair = if cfg.augment { augment(&train[i], forward, &mut aug_rng)? } else { train[i].clone() };
                inputs.push(pair.measurement);
                targets.push(pair.object);
            }
            let mut tape = Tape::new();
            let bound = net.params().bind(&mut tape, true);
            let x = tape.constant(Tensor::stack(&inputs)?);
            let target = tape.constant(Tensor::stack(&targets)?);
            let pred = net.forward(&mut tape, &bound, x)?;
            let loss = composite_loss(&mut tape, pred, target, &weights, &proxy)?;
            let value = tape.tensor(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Numerical(format!(
                    "training loss became {value} at step {}",
                    history.step_losses.len() + 1
                )));
            }
            tape.backward(loss)?;
            let grads = net.params().grads(&tape, &bound);
            adam.step(net.params_mut(), &grads)?;
            history.step_losses.push(value);
        }
        let epoch = &history.step_losses[first..];
        history.epoch_losses.push(epoch.iter().sum::<f64>() / epoch.len().max(1) as f64);
        history.epoch_end_steps.push(history.step_losses.len());
        history.val_psnr.push(if val.is_empty() { f64::NAN } else { evaluate_psnr(net, val)? });
    }
    Ok(history)
}

fn augment(pair: &Pair, forward: Option<&Augmentation>, rng: &mut ChaCha8Rng) -> Result<Pair> {
    let square = pair.object.height() == pair.object.width();
    let turns = if square { rng.random_range(0..4) } else { 2 * rng.random_range(0..2) };
    let mirror = rng.random_bool(0.5);
    let noise_seed: u64 = rng.random();
    let transform = |t: &Tensor| {
        let mut out = t.clone();
        for _ in 0..turns {
            out = out.rot90();
        }
        if mirror {
            out = out.flip_horizontal();
        }
        out
    };
    match forward {
        Some(model) => {
            let object = transform(&pair.object);
            let measurement = simulate_measurement(&object, &model.psf, &model.noise.with_seed(noise_seed))?;
            Ok(Pair { measurement, object })
        }
        None if mirror => {
            Ok(Pair { measurement: pair.measurement.flip_horizontal(), object: pair.object.flip_horizontal() })
        }
        None => Ok(pair.clone()),
    }
}

/// Mean PSNR (value range 1) of the network's reconstructions over `pairs`.
pub fn evaluate_psnr(net: &LensNet, pairs: &[Pair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::argument("evaluation set is empty"));
    }
    const CHUNK: usize = 8;
    let mut total = 0.0;
    for chunk in pairs.chunks(CHUNK) {
        let inputs: Vec<Tensor> = chunk.iter().map(|p| p.measurement.clone()).collect();
        let pred = net.predict(&Tensor::stack(&inputs)?)?;
        for (k, p) in chunk.iter().enumerate() {
            total += psnr(&pred.item(k), &p.object, 1.0)?;
        }
    }
    Ok(total / pairs.len() as f64)
}
