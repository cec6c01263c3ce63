//! Trains the full network and its three ablation variants on the synthetic
//! dataset and prints validation metrics. An optional argument selects a
//! single variant by label.

use lensless::dataio::{run_ablation, DatasetManifest, EvalConfig};
use lensless::lensnet::{Ablation, NetworkConfig, TrainConfig};

fn main() -> lensless::Result<()> {
    let ds = DatasetManifest::default().generate()?;
    let tcfg = TrainConfig::default();
    let variants: Vec<Ablation> = match std::env::args().nth(1) {
        Some(name) => Ablation::ALL.into_iter().filter(|a| a.label() == name).collect(),
        None => Ablation::ALL.to_vec(),
    };
    let rows =
        run_ablation(&variants, &NetworkConfig::default(), &tcfg, &ds.train, &ds.val, &ds.psf, &EvalConfig::default())?;
    println!("{:<12} {:>10} {:>12} {:>9} {:>7} {:>11}", "variant", "params", "flops", "psnr_db", "ssim", "perceptual");
    for r in rows {
        println!(
            "{:<12} {:>10} {:>12} {:>9.3} {:>7.4} {:>11.4}",
            r.variant, r.parameters, r.flops, r.metrics.psnr_db, r.metrics.ssim, r.metrics.perceptual
        );
    }
    Ok(())
}
