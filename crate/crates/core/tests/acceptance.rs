//! Acceptance suite. Prints one PASS/FAIL line per criterion; the process
//! exits successfully either way so that the report is always produced.
//! Set `ACCEPTANCE_ONLY=1,4` to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use lensless::autodiff::{grad_check, Tape, Value, Var};
use lensless::dataio::{
    decode_pnm, delta_grid, encode_pnm, evaluate_method, evaluate_network, piecewise_constant_phantom, random_phantom,
    read_image, tune_wiener_delta, BitDepth, DatasetManifest, EvalConfig, Method, SolverSection, SyntheticDataset,
};
use lensless::lensnet::{
    composite_loss, evaluate_psnr, train, Ablation, Bound, LensNet, NetworkConfig, TrainConfig, TrainHistory,
};
use lensless::metrics::{mse, psnr, ssim, MetricReport, PerceptualProxy};
use lensless::optics::{
    forward_clean, generate_mask, mask_to_psf, simulate_measurement, MaskPattern, NoiseModel, PointSpreadFunction,
};
use lensless::solvers::{
    solve_admm_tv, solve_apgd_observed, solve_fista, solve_gd, solve_nesterov, InverseProblem, SolverConfig,
};
use lensless::wiener::{wiener_restore, WienerConfig};
use lensless::{Error, Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { pass, detail: detail.into() })
}

fn random(shape: [usize; 4], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn unit(shape: [usize; 4], seed: u64) -> Tensor {
    random(shape, seed).map(|v| 0.5 + 0.45 * v)
}

// ---------------------------------------------------------------- criterion 1

fn project(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let y = match tape.value(y) {
        Value::Complex(_) => {
            let m = tape.magnitude_sq(y)?;
            let re = tape.real_part(y)?;
            let s = tape.scalar_mul(m, 0.1)?;
            tape.add(s, re)?
        }
        Value::Real(_) => y,
    };
    let r = tape.constant(random(tape.shape(y), seed));
    let p = tape.mul(y, r)?;
    tape.sum(p)
}

type Primitive = (&'static str, Vec<Tensor>, Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>);

fn primitives() -> Vec<Primitive> {
    let a = || random([2, 3, 6, 6], 1);
    let b = || random([2, 3, 6, 6], 2);
    let pos = || random([2, 3, 6, 6], 3).map(|v| 0.5 + v.abs());
    let img = || random([1, 2, 8, 8], 4);
    let img2 = || random([1, 2, 8, 8], 5);
    let list: Vec<Primitive> = vec![
        ("add", vec![a(), b()], Box::new(|t, v| t.add(v[0], v[1]))),
        ("add_broadcast", vec![a(), random([1, 3, 1, 1], 6)], Box::new(|t, v| t.add(v[0], v[1]))),
        ("sub", vec![a(), b()], Box::new(|t, v| t.sub(v[0], v[1]))),
        ("mul", vec![a(), b()], Box::new(|t, v| t.mul(v[0], v[1]))),
        ("mul_broadcast", vec![a(), random([2, 3, 1, 1], 7)], Box::new(|t, v| t.mul(v[0], v[1]))),
        ("scalar_mul", vec![a()], Box::new(|t, v| t.scalar_mul(v[0], -1.5))),
        ("add_scalar", vec![a()], Box::new(|t, v| t.add_scalar(v[0], 0.25))),
        ("sigmoid", vec![a()], Box::new(|t, v| t.sigmoid(v[0]))),
        ("relu", vec![a()], Box::new(|t, v| t.relu(v[0]))),
        ("exp", vec![a()], Box::new(|t, v| t.exp(v[0]))),
        ("reciprocal", vec![pos()], Box::new(|t, v| t.reciprocal(v[0]))),
        ("softmax_spatial", vec![a()], Box::new(|t, v| t.softmax_spatial(v[0]))),
        ("sum", vec![a()], Box::new(|t, v| t.sum(v[0]))),
        ("mean", vec![a()], Box::new(|t, v| t.mean(v[0]))),
        ("mse", vec![a(), b()], Box::new(|t, v| t.mse(v[0], v[1]))),
        ("reshape", vec![a()], Box::new(|t, v| t.reshape(v[0], [6, 1, 6, 6]))),
        ("conv2d_stride1", vec![a(), random([4, 3, 3, 3], 8)], Box::new(|t, v| t.conv2d(v[0], v[1], 1))),
        ("conv2d_stride2", vec![a(), random([4, 3, 3, 3], 9)], Box::new(|t, v| t.conv2d(v[0], v[1], 2))),
        ("pointwise_conv", vec![a(), random([5, 3, 1, 1], 10)], Box::new(|t, v| t.pointwise_conv(v[0], v[1]))),
        ("global_avg_pool", vec![a()], Box::new(|t, v| t.global_avg_pool(v[0]))),
        ("avg_pool2", vec![a()], Box::new(|t, v| t.avg_pool2(v[0]))),
        ("bilinear_upsample", vec![a()], Box::new(|t, v| t.bilinear_upsample(v[0], 2))),
        ("concat_channels", vec![a(), random([2, 1, 6, 6], 11)], Box::new(|t, v| t.concat_channels(v[0], v[1]))),
        ("zero_pad_spatial", vec![a()], Box::new(|t, v| t.zero_pad_spatial(v[0], 9, 8))),
        ("crop", vec![a()], Box::new(|t, v| t.crop(v[0], 1, 2, 4, 3))),
        ("ssim", vec![unit([1, 1, 12, 12], 12), unit([1, 1, 12, 12], 13)], Box::new(|t, v| t.ssim(v[0], v[1], 1.0))),
        ("fft2", vec![img()], Box::new(|t, v| t.fft2(v[0]))),
        (
            "ifft2",
            vec![img()],
            Box::new(|t, v| {
                let z = t.fft2(v[0])?;
                t.ifft2(z)
            }),
        ),
        (
            "complex_mul",
            vec![img(), img2()],
            Box::new(|t, v| {
                let x = t.fft2(v[0])?;
                let y = t.fft2(v[1])?;
                t.complex_mul(x, y)
            }),
        ),
        (
            "complex_conj",
            vec![img()],
            Box::new(|t, v| {
                let z = t.fft2(v[0])?;
                t.complex_conj(z)
            }),
        ),
        (
            "magnitude_sq",
            vec![img()],
            Box::new(|t, v| {
                let z = t.fft2(v[0])?;
                t.magnitude_sq(z)
            }),
        ),
        (
            "real_part",
            vec![img()],
            Box::new(|t, v| {
                let z = t.fft2(v[0])?;
                t.real_part(z)
            }),
        ),
        (
            "complex_scale",
            vec![img(), random([1, 2, 8, 8], 14).map(|v| 0.5 + v.abs())],
            Box::new(|t, v| {
                let z = t.fft2(v[0])?;
                t.complex_scale(z, v[1])
            }),
        ),
    ];
    list
}

fn full_model_error(cfg: NetworkConfig, seed: u64) -> Result<f64> {
    let psf = mask_to_psf(&generate_mask(MaskPattern::Random, (16, 16), 14, 0.2)?)?;
    let net = LensNet::new(cfg, Some(&psf))?;
    let x = unit([1, 1, 16, 16], 15);
    let target = unit([1, 1, 16, 16], 16);
    let proxy = PerceptualProxy::new(3);
    let weights = net.config().loss_weights;
    let trainable: Vec<Tensor> = net.params().iter().filter(|p| !p.frozen).map(|p| p.value.clone()).collect();
    let check = grad_check(
        |tape, vars| {
            let mut k = 0;
            let mut bound = Vec::new();
            for p in net.params().iter() {
                if p.frozen {
                    bound.push(tape.constant(p.value.clone()));
                } else {
                    bound.push(vars[k]);
                    k += 1;
                }
            }
            let bound = Bound::from_vars(bound);
            let xv = tape.constant(x.clone());
            let tv = tape.constant(target.clone());
            let y = net.forward(tape, &bound, xv)?;
            composite_loss(tape, y, tv, &weights, &proxy)
        },
        &trainable,
        1e-4,
        48,
        seed,
    )?;
    Ok(check.max_rel_error)
}

fn criterion_1() -> Result<Outcome> {
    let start = Instant::now();
    let mut worst = (0.0f64, "");
    let mut failed = Vec::new();
    for (k, (name, inputs, f)) in primitives().into_iter().enumerate() {
        let seed = 100 + k as u64;
        let r = grad_check(
            |tape, vars| {
                let y = f(tape, vars)?;
                project(tape, y, seed)
            },
            &inputs,
            1e-6,
            64,
            seed,
        )?;
        if r.max_rel_error > worst.0 {
            worst = (r.max_rel_error, name);
        }
        if r.max_rel_error > 1e-5 || r.checked < 5 {
            failed.push(name);
        }
    }
    let tiny = NetworkConfig { scales: 2, input_extents: [16, 16], ..NetworkConfig::default() };
    let full = full_model_error(tiny.clone(), 17)?;
    let fixed = full_model_error(Ablation::FixedPsf.apply(&tiny), 18)?;
    let elapsed = start.elapsed();
    let pass = failed.is_empty() && full <= 1e-4 && fixed <= 1e-4 && elapsed <= Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "{} primitives, worst {:.2e} ({}){}; full model {:.2e}, fixed-PSF model {:.2e}; {:.1?}",
            primitives().len(),
            worst.0,
            worst.1,
            if failed.is_empty() { String::new() } else { format!(", failing {failed:?}") },
            full,
            fixed,
            elapsed
        ),
    )
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Result<Outcome> {
    let start = Instant::now();
    let object = random_phantom(64, 64, &mut ChaCha8Rng::seed_from_u64(21));
    let psf = PointSpreadFunction::full_spectrum(64, 64, 0.3, 22)?;
    let measurement = forward_clean(&object, &psf)?;
    let restored = wiener_restore(&measurement, &psf, &WienerConfig::new(1e-10)?)?;
    let coded = psnr(&restored, &object, 1.0)?;
    let delta = PointSpreadFunction::delta(64, 64)?;
    let restored = wiener_restore(&forward_clean(&object, &delta)?, &delta, &WienerConfig::new(1e-10)?)?;
    let identity = psnr(&restored, &object, 1.0)?;
    let elapsed = start.elapsed();
    outcome(
        coded >= 60.0 && identity >= 100.0 && elapsed <= Duration::from_secs(1),
        format!("full-spectrum PSF {coded:.1} dB (>= 60), delta PSF {identity:.1} dB (>= 100); {elapsed:.1?}"),
    )
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3() -> Result<Outcome> {
    let mut worst_sum = 0.0f64;
    let mut worst_impulse = 0.0f64;
    for seed in 0..8u64 {
        let n = if seed % 2 == 0 { 32 } else { 64 };
        let psf = mask_to_psf(&generate_mask(MaskPattern::Random, (n, n), 30 + seed, 0.3)?)?;
        let object = random_phantom(n, n, &mut ChaCha8Rng::seed_from_u64(40 + seed));
        let m = simulate_measurement(&object, &psf, &NoiseModel::none())?;
        worst_sum = worst_sum.max((m.sum() - object.sum()).abs() / object.sum());
        let (i, j) = ((seed as usize * 7) % n, (seed as usize * 3) % n);
        let impulse = simulate_measurement(&Tensor::impulse([1, 1, n, n], i, j), &psf, &NoiseModel::none())?;
        let expected = psf.centered_kernel().roll(i as isize, j as isize);
        worst_impulse = worst_impulse.max(impulse.sub(&expected)?.max_abs());
    }
    outcome(
        worst_sum <= 1e-9 && worst_impulse <= 1e-12,
        format!("intensity drift {worst_sum:.1e} (<= 1e-9), impulse deviation from PSF {worst_impulse:.1e}"),
    )
}

// ---------------------------------------------------------------- criterion 4

/// Test pair 0 of the default synthetic dataset, with its PSF.
fn benchmark_instance() -> Result<(Tensor, Tensor, PointSpreadFunction)> {
    let manifest = DatasetManifest::default();
    let psf = manifest.mask.build_psf(manifest.extents)?;
    let pair = manifest.generate_pair(&psf, lensless::dataio::Split::Test, 0)?;
    Ok((pair.measurement, pair.object, psf))
}

fn criterion_4() -> Result<Outcome> {
    let start = Instant::now();
    let (b, _, psf) = benchmark_instance()?;
    let plain = InverseProblem::new(b.clone(), psf.clone())?;

    let gd = solve_gd(&plain, &SolverConfig::iters(300))?;
    let monotone = gd.objective_trace.windows(2).all(|w| w[1] <= w[0]);

    let k100 = SolverConfig::iters(100);
    let gd100 = *solve_gd(&plain, &k100)?.objective_trace.last().unwrap();
    let nest = solve_nesterov(&plain, &k100)?;
    let nest100 = *nest.objective_trace.last().unwrap();
    let gd100_nn = *solve_gd(&plain.clone().with_nonneg(true), &k100)?.objective_trace.last().unwrap();
    let fista100 = *solve_fista(&plain.clone().with_nonneg(true), &k100)?.objective_trace.last().unwrap();
    let accelerated = nest100 <= gd100 && fista100 <= gd100_nn;

    let fista0 = solve_fista(&plain, &k100)?;
    let identical =
        fista0.objective_trace.iter().map(|v| v.to_bits()).eq(nest.objective_trace.iter().map(|v| v.to_bits()))
            && fista0.estimate == nest.estimate;

    let object = piecewise_constant_phantom(32, 32, 5);
    let noisy = simulate_measurement(&object, &psf, &NoiseModel::gaussian(0.05, 6))?;
    let p = InverseProblem::new(noisy, psf.clone())?;
    let gd_psnr = psnr(&solve_gd(&p, &SolverConfig::iters(300))?.estimate, &object, 1.0)?;
    let admm_cfg = SolverConfig { rho: 0.05, ..SolverConfig::iters(300) };
    let admm = solve_admm_tv(&p.clone().with_tv(0.02).with_nonneg(true), &admm_cfg)?;
    let admm_psnr = psnr(&admm.estimate, &object, 1.0)?;

    let mut min_iterate = f64::INFINITY;
    let apgd = solve_apgd_observed(&plain.clone().with_nonneg(true), &SolverConfig::iters(100), &mut |x| {
        min_iterate = min_iterate.min(x.min());
    })?;
    let nonneg = min_iterate >= 0.0 && apgd.estimate.min() >= 0.0;

    let elapsed = start.elapsed();
    let pass = monotone
        && accelerated
        && identical
        && admm_psnr - gd_psnr >= 1.0
        && nonneg
        && elapsed <= Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "(a) GD monotone {monotone}; (b) K=100 objective GD {gd100:.4e} vs Nesterov {nest100:.4e}, projected GD {gd100_nn:.4e} vs FISTA {fista100:.4e}; \
             (c) FISTA==Nesterov bitwise {identical}; (d) ADMM-TV {admm_psnr:.2} dB vs GD {gd_psnr:.2} dB; (e) APGD min iterate {min_iterate:.1e}; {elapsed:.1?}"
        ),
    )
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5() -> Result<Outcome> {
    let a = Tensor::full([1, 1, 16, 16], 0.5);
    let b = a.map(|v| v + 0.1);
    let p = psnr(&a, &b, 1.0)?;
    let img = unit([1, 1, 16, 16], 51);
    let same = ssim(&img, &img, 1.0)?;
    let c = ssim(&Tensor::full([1, 1, 16, 16], 0.2), &Tensor::full([1, 1, 16, 16], 0.8), 1.0)?;
    let c1 = (0.01f64 * 1.0).powi(2);
    let closed = (2.0 * 0.2 * 0.8 + c1) / (0.2 * 0.2 + 0.8 * 0.8 + c1);
    let m = mse(&a, &b)?;
    outcome(
        (p - 20.0).abs() <= 1e-6 && (m - 0.01).abs() <= 1e-12 && (same - 1.0).abs() <= 1e-6 && (c - closed).abs() <= 1e-6 && (c - 0.4707).abs() < 1e-4,
        format!("PSNR at MSE 0.01: {p:.9} dB; SSIM identical {same:.9}; constant 0.2 vs 0.8 {c:.9} (closed form {closed:.9})"),
    )
}

// ------------------------------------------------------------ criteria 6 and 7

struct Trained {
    val_psnr: f64,
    history: TrainHistory,
    elapsed: Duration,
}

fn train_variant(ds: &SyntheticDataset, variant: Ablation) -> Result<Trained> {
    let start = Instant::now();
    let cfg = variant.apply(&NetworkConfig::default());
    let mut net = LensNet::new(cfg, Some(&ds.psf))?;
    let history = train(&mut net, &ds.train, &ds.val, &TrainConfig::default(), None)?;
    Ok(Trained { val_psnr: evaluate_psnr(&net, &ds.val)?, history, elapsed: start.elapsed() })
}

fn criterion_6(ds: &SyntheticDataset, full: &Trained) -> Result<Outcome> {
    let (delta, _) = tune_wiener_delta(&ds.train, &ds.psf, &delta_grid(), 1.0)?;
    let (_, wiener_val) = tune_wiener_delta(&ds.val, &ds.psf, &[delta], 1.0)?;
    let steps = full.history.step_losses.len();
    let avg = full.history.moving_average(10);
    let after_epoch1 = avg[full.history.epoch_end_steps[0] - 1];
    let end = *avg.last().unwrap();
    let pass = full.val_psnr >= wiener_val + 1.0 && steps <= 2000 && end < after_epoch1;
    outcome(
        pass,
        format!(
            "LensNet val {:.2} dB vs Wiener (delta {delta:.2e} tuned on train) {wiener_val:.2} dB, margin {:+.2} dB (>= +1); \
             {steps} steps; moving-average loss {after_epoch1:.4} after epoch 1 -> {end:.4}; {:.0?}",
            full.val_psnr,
            full.val_psnr - wiener_val,
            full.elapsed
        ),
    )
}

const TIE_DB: f64 = 0.1;

fn criterion_7(ds: &SyntheticDataset, full: &Trained) -> Result<Outcome> {
    let start = Instant::now();
    let fixed = train_variant(ds, Ablation::FixedPsf)?.val_psnr;
    let three = train_variant(ds, Ablation::ThreeDown)?.val_psnr;
    let norecb = train_variant(ds, Ablation::NoRecb)?.val_psnr;
    let mut notes = Vec::new();
    let mut pass = true;
    let mut compare = |hi: (&str, f64), lo: (&str, f64)| {
        let diff = hi.1 - lo.1;
        if diff.abs() <= TIE_DB {
            notes.push(format!("{} ~ {} (tie, {diff:+.2})", hi.0, lo.0));
        } else if diff > 0.0 {
            notes.push(format!("{} > {} ({diff:+.2})", hi.0, lo.0));
        } else {
            pass = false;
            notes.push(format!("{} < {} ({diff:+.2}, violated)", hi.0, lo.0));
        }
    };
    compare(("full", full.val_psnr), ("fixed_psf", fixed));
    compare(("fixed_psf", fixed), ("three_down", three));
    compare(("fixed_psf", fixed), ("no_recb", norecb));
    outcome(
        pass,
        format!(
            "val PSNR full {:.2}, fixed_psf {fixed:.2}, three_down {three:.2}, no_recb {norecb:.2} dB; {}; {:.0?}",
            full.val_psnr,
            notes.join(", "),
            start.elapsed() + full.elapsed
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

fn metric_table(rows: &[(String, MetricReport)]) -> String {
    rows.iter().map(|(name, r)| format!("{name},{:?},{:?},{:?}\n", r.psnr_db, r.ssim, r.perceptual)).collect()
}

/// Dataset synthesis, classical benchmark and a short training run, each as a
/// metric table.
fn reproducible_run() -> Result<(Vec<u64>, String, String)> {
    let manifest = DatasetManifest::default();
    let ds = manifest.generate()?;
    let fingerprint = ds
        .train
        .iter()
        .chain(&ds.val)
        .chain(&ds.test)
        .flat_map(|p| [p.measurement.sum().to_bits(), p.object.sum().to_bits()])
        .collect();
    let eval = EvalConfig::default();
    let (delta, _) = tune_wiener_delta(&ds.train, &ds.psf, &delta_grid(), 1.0)?;
    let solver = SolverSection { wiener_delta: delta, max_iters: 100, ..SolverSection::default() };
    let mut rows = Vec::new();
    for method in Method::ALL {
        let reports = evaluate_method(&ds.test, method, &solver, &ds.psf, &eval)?;
        rows.push((method.name().to_string(), MetricReport::mean(&reports).unwrap()));
    }
    let classical = metric_table(&rows);
    let mut net = LensNet::new(NetworkConfig::default(), Some(&ds.psf))?;
    let tcfg = TrainConfig { max_steps: Some(40), augment: true, ..TrainConfig::default() };
    let aug = lensless::lensnet::Augmentation { psf: ds.psf.clone(), noise: manifest.noise };
    let history = train(&mut net, &ds.train, &ds.val, &tcfg, Some(&aug))?;
    let reports = evaluate_network(&net, &ds.test, &eval)?;
    let learned = history.to_csv() + &metric_table(&[("lensnet".into(), MetricReport::mean(&reports).unwrap())]);
    Ok((fingerprint, classical, learned))
}

fn criterion_8() -> Result<Outcome> {
    let start = Instant::now();
    let first = reproducible_run()?;
    let second = reproducible_run()?;
    let data = first.0 == second.0;
    let classical = first.1 == second.1;
    let learned = first.2 == second.2;
    outcome(
        data && classical && learned,
        format!(
            "dataset identical {data}, classical benchmark table identical {classical}, training history and metrics identical {learned}; {:.1?}",
            start.elapsed()
        ),
    )
}

// ---------------------------------------------------------------- criterion 9

fn criterion_9() -> Result<Outcome> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/malformed");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(&dir, err)))
        .collect::<Result<_>>()?;
    files.sort();
    let mut bad = Vec::new();
    for path in &files {
        let result = catch_unwind(|| read_image(path));
        match result {
            Ok(Err(Error::Parse { .. })) => {}
            Ok(other) => bad.push(format!("{}: {:?}", path.display(), other.map(|t| t.shape()))),
            Err(_) => bad.push(format!("{}: panicked", path.display())),
        }
    }
    // Random byte mutations of a valid file must never panic.
    let valid = encode_pnm(&unit([1, 1, 6, 5], 91), BitDepth::Sixteen)?;
    let mut rng = ChaCha8Rng::seed_from_u64(92);
    let mut panics = 0;
    for _ in 0..2000 {
        let mut bytes = valid.clone();
        let cut = rng.random_range(0..=bytes.len());
        bytes.truncate(if rng.random_bool(0.3) { cut } else { bytes.len() });
        for _ in 0..rng.random_range(1..4) {
            if !bytes.is_empty() {
                let at = rng.random_range(0..bytes.len());
                bytes[at] = rng.random();
            }
        }
        if catch_unwind(AssertUnwindSafe(|| decode_pnm(&bytes, "mutated"))).is_err() {
            panics += 1;
        }
    }
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let img = unit([1, if seed % 2 == 0 { 1 } else { 3 }, 9, 7], 200 + seed).map(|v| v.clamp(0.0, 1.0));
        let back = decode_pnm(&encode_pnm(&img, BitDepth::Sixteen)?, "roundtrip")?;
        worst = worst.max(back.sub(&img)?.max_abs());
    }
    let pass = files.len() >= 10 && bad.is_empty() && panics == 0 && worst <= 1.0 / 65535.0;
    outcome(
        pass,
        format!(
            "{} corpus files, {} not rejected as parse errors{}; {panics} panics over 2000 mutated files; 16-bit round trip max error {worst:.2e} (<= {:.2e})",
            files.len(),
            bad.len(),
            if bad.is_empty() { String::new() } else { format!(" {bad:?}") },
            1.0 / 65535.0
        ),
    )
}

// ---------------------------------------------------------------------- main

type Criterion = fn() -> Result<Outcome>;

fn report(n: usize, title: &str, result: std::thread::Result<Result<Outcome>>) -> bool {
    let (pass, detail) = match result {
        Ok(Ok(o)) => (o.pass, o.detail),
        Ok(Err(e)) => (false, format!("error[{}]: {e}", e.category())),
        Err(_) => (false, "panicked".to_string()),
    };
    println!("criterion {n} [{title}]: {} - {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn main() {
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));
    // Silence the default hook; panics are reported per criterion.
    std::panic::set_hook(Box::new(|_| {}));

    let mut results = Vec::new();
    let simple: [(usize, &str, Criterion); 5] = [
        (1, "gradient gate", criterion_1),
        (2, "wiener oracle", criterion_2),
        (3, "forward-model conservation", criterion_3),
        (4, "solver suite", criterion_4),
        (5, "metric correctness", criterion_5),
    ];
    for (n, title, f) in simple {
        if wanted(n) {
            results.push(report(n, title, catch_unwind(f)));
        }
    }
    if wanted(6) || wanted(7) {
        let prepared = catch_unwind(|| -> Result<(SyntheticDataset, Trained)> {
            let ds = DatasetManifest::default().generate()?;
            let full = train_variant(&ds, Ablation::Full)?;
            Ok((ds, full))
        });
        match prepared {
            Ok(Ok((ds, full))) => {
                if wanted(6) {
                    results.push(report(
                        6,
                        "training sanity",
                        catch_unwind(AssertUnwindSafe(|| criterion_6(&ds, &full))),
                    ));
                }
                if wanted(7) {
                    results.push(report(
                        7,
                        "ablation ordering",
                        catch_unwind(AssertUnwindSafe(|| criterion_7(&ds, &full))),
                    ));
                }
            }
            other => {
                let err = other.map(|r| r.map(|_| Outcome { pass: false, detail: String::new() }));
                for (n, title) in [(6, "training sanity"), (7, "ablation ordering")] {
                    if wanted(n) {
                        let again = match &err {
                            Ok(Err(e)) => Ok(Err(Error::Numerical(e.to_string()))),
                            _ => Err(Box::new("panicked") as Box<dyn std::any::Any + Send>),
                        };
                        results.push(report(n, title, again));
                    }
                }
            }
        }
    }
    for (n, title, f) in [(8, "reproducibility", criterion_8 as Criterion), (9, "i/o robustness", criterion_9)] {
        if wanted(n) {
            results.push(report(n, title, catch_unwind(f)));
        }
    }
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
}
