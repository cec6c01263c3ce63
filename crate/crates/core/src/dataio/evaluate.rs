//! Scoring reconstructions over dataset splits.

use crate::error::{Error, Result};
use crate::lensnet::{train, Ablation, LensNet, NetworkConfig, Pair, TrainConfig, TrainHistory};
use crate::metrics::{psnr, MetricReport, PerceptualProxy};
use crate::optics::PointSpreadFunction;
use crate::tensor::Tensor;
use crate::wiener::{wiener_restore, WienerConfig};
use serde::Serialize;

use super::config::{EvalConfig, Method, SolverSection};

/// Logarithmic δ grid, 1e-5 to 1 in quarter decades.
pub fn delta_grid() -> Vec<f64> {
    (0..=20).map(|k| 10f64.powf(-5.0 + 0.25 * k as f64)).collect()
}

fn clamp_to(x: Tensor, range: f64) -> Tensor {
    x.map(|v| v.clamp(0.0, range))
}

/// Picks the δ from `grid` maximizing mean PSNR of clamped Wiener
/// restorations over `pairs`. Returns `(delta, mean_psnr)`; ties keep the
/// smaller δ.
pub fn tune_wiener_delta(
    pairs: &[Pair],
    psf: &PointSpreadFunction,
    grid: &[f64],
    value_range: f64,
) -> Result<(f64, f64)> {
    if pairs.is_empty() || grid.is_empty() {
        return Err(Error::argument("delta tuning needs pairs and a non-empty grid"));
    }
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for &delta in grid {
        let cfg = WienerConfig::new(delta)?;
        let mut total = 0.0;
        for p in pairs {
            let est = clamp_to(wiener_restore(&p.measurement, psf, &cfg)?, value_range);
            total += psnr(&est, &p.object, value_range)?;
        }
        let mean = total / pairs.len() as f64;
        if mean > best.1 {
            best = (delta, mean);
        }
    }
    Ok(best)
}

/// Per-pair metrics of a classical method over `pairs`.
pub fn evaluate_method(
    pairs: &[Pair],
    method: Method,
    solver: &SolverSection,
    psf: &PointSpreadFunction,
    eval: &EvalConfig,
) -> Result<Vec<MetricReport>> {
    let proxy = PerceptualProxy::new(eval.perceptual_seed);
    pairs
        .iter()
        .map(|p| {
            let mut est = solver.reconstruct(method, &p.measurement, psf)?;
            if eval.clamp {
                est = clamp_to(est, eval.value_range);
            }
            MetricReport::evaluate(&est, &p.object, eval.value_range, &proxy)
        })
        .collect()
}

/// Per-pair metrics of a trained network over `pairs`.
pub fn evaluate_network(net: &LensNet, pairs: &[Pair], eval: &EvalConfig) -> Result<Vec<MetricReport>> {
    let proxy = PerceptualProxy::new(eval.perceptual_seed);
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(8) {
        let inputs: Vec<Tensor> = chunk.iter().map(|p| p.measurement.clone()).collect();
        let pred = net.predict(&Tensor::stack(&inputs)?)?;
        for (k, p) in chunk.iter().enumerate() {
            let est = pred.item(k).map(|v| v * eval.value_range);
            out.push(MetricReport::evaluate(&est, &p.object, eval.value_range, &proxy)?);
        }
    }
    Ok(out)
}

/// One row of an ablation comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: &'static str,
    pub parameters: usize,
    pub flops: u64,
    pub metrics: MetricReport,
    pub history: TrainHistory,
}

/// Trains each variant from `base` on `train_pairs` and scores it on
/// `val_pairs`. Every variant uses the same seeds.
pub fn run_ablation(
    variants: &[Ablation],
    base: &NetworkConfig,
    tcfg: &TrainConfig,
    train_pairs: &[Pair],
    val_pairs: &[Pair],
    psf: &PointSpreadFunction,
    eval: &EvalConfig,
) -> Result<Vec<AblationRow>> {
    variants
        .iter()
        .map(|&variant| {
            let cfg = variant.apply(base);
            let mut net = LensNet::new(cfg.clone(), Some(psf))?;
            let history = train(&mut net, train_pairs, val_pairs, tcfg, None)?;
            let reports = evaluate_network(&net, val_pairs, eval)?;
            Ok(AblationRow {
                variant: variant.label(),
                parameters: net.count_parameters(),
                flops: crate::lensnet::count_flops(&cfg),
                metrics: MetricReport::mean(&reports).ok_or_else(|| Error::argument("validation split is empty"))?,
                history,
            })
        })
        .collect()
}
