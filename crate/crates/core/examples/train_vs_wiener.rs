//! Trains the default network on the synthetic dataset and compares its
//! validation PSNR with a δ-tuned Wiener filter.

use std::time::Instant;

use lensless::dataio::{delta_grid, tune_wiener_delta, DatasetManifest};
use lensless::lensnet::{evaluate_psnr, train, LensNet, NetworkConfig, TrainConfig};

fn main() -> lensless::Result<()> {
    let ds = DatasetManifest::default().generate()?;
    let (delta, train_psnr) = tune_wiener_delta(&ds.train, &ds.psf, &delta_grid(), 1.0)?;
    let (_, wiener_val) = tune_wiener_delta(&ds.val, &ds.psf, &[delta], 1.0)?;
    println!("wiener: delta {delta:.2e}, train {train_psnr:.2} dB, val {wiener_val:.2} dB");

    let mut net = LensNet::new(NetworkConfig::default(), Some(&ds.psf))?;
    println!("init val {:.2} dB", evaluate_psnr(&net, &ds.val)?);
    let start = Instant::now();
    let history = train(&mut net, &ds.train, &ds.val, &TrainConfig::default(), None)?;
    println!("{}", history.to_csv());
    println!(
        "lensnet val {:.2} dB after {} steps in {:.0?}",
        evaluate_psnr(&net, &ds.val)?,
        history.step_losses.len(),
        start.elapsed()
    );
    Ok(())
}
