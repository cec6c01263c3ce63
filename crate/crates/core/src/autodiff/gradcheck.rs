//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Outcome of [`grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Worst `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    /// Number of coordinates compared.
    pub checked: usize,
}

/// Compares reverse-mode gradients of the scalar built by `f` against central
/// differences with step `epsilon` at up to `samples` coordinates drawn
/// uniformly (seeded) from all inputs; every coordinate is checked when there
/// are fewer.
///
/// The denominator floor is `1e-3` times the largest sampled analytic
/// magnitude, so near-zero partials are judged on the gradient's own scale.
pub fn grad_check<F>(f: F, inputs: &[Tensor], epsilon: f64, samples: usize, seed: u64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(epsilon > 0.0) {
        return Err(Error::argument("finite-difference step must be positive"));
    }
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone(), false)).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.tensor(out).data()[0])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone(), true)).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(v, x)| tape.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(x.shape())))
        .collect();

    let offsets: Vec<usize> = inputs
        .iter()
        .scan(0, |acc, x| {
            let start = *acc;
            *acc += x.len();
            Some(start)
        })
        .collect();
    let total: usize = inputs.iter().map(Tensor::len).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, total, samples.min(total)).into_vec();
    picks.sort_unstable();

    let locate = |flat: usize| {
        let k = offsets.iter().rposition(|&o| o <= flat).expect("offset 0 exists");
        (k, flat - offsets[k])
    };
    let mut pairs = Vec::with_capacity(picks.len());
    let mut work = inputs.to_vec();
    for &flat in &picks {
        let (k, i) = locate(flat);
        let x0 = work[k].data()[i];
        work[k].data_mut()[i] = x0 + epsilon;
        let up = eval(&work)?;
        work[k].data_mut()[i] = x0 - epsilon;
        let down = eval(&work)?;
        work[k].data_mut()[i] = x0;
        pairs.push((analytic[k].data()[i], (up - down) / (2.0 * epsilon)));
    }
    let scale = pairs.iter().fold(0.0f64, |m, (a, _)| m.max(a.abs()));
    let floor = (1e-3 * scale).max(f64::MIN_POSITIVE);
    let max_rel_error = pairs.iter().map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor)).fold(0.0, f64::max);
    Ok(GradCheck { max_rel_error, checked: pairs.len() })
}
