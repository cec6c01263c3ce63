use std::fs;
use std::path::{Path, PathBuf};

use lensless::dataio::{
    delta_grid, evaluate_method, evaluate_network, load_dataset, load_paired_directory, read_image, run_ablation,
    synthesize_dataset, tune_wiener_delta, write_image, BitDepth, ExperimentConfig, Method, Split, MANIFEST_FILE,
};
use lensless::lensnet::{
    load_checkpoint, save_checkpoint, train, Ablation, Augmentation, LensNet, Pair, TrainHistory, Variant,
};
use lensless::metrics::{MetricReport, PerceptualProxy};
use lensless::optics::{NoiseModel, PointSpreadFunction};
use lensless::solvers::StepSize;
use lensless::{Error, Result, Tensor};

use crate::table::Table;
use crate::{
    AblateArgs, BenchmarkArgs, Cli, Command, DataArgs, EvalArgs, ModelArgs, OutArgs, ReconstructArgs, SimulateArgs,
    SolverArgs, TrainArgs, TrainingArgs, VariantArg,
};

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let root = cli.output_root;
    match cli.command {
        Command::Simulate(a) => simulate(cfg, &root, a),
        Command::Reconstruct(a) => reconstruct(cfg, &root, a),
        Command::Train(a) => train_cmd(cfg, &root, a),
        Command::Eval(a) => eval(cfg, &root, a),
        Command::Benchmark(a) => benchmark(cfg, &root, a),
        Command::Ablate(a) => ablate(cfg, &root, a),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ModelUse {
    None,
    Fresh,
    Checkpoint,
}

/// Pairs to work on, with the PSF when one is known.
struct Data {
    train: Vec<Pair>,
    val: Vec<Pair>,
    test: Vec<Pair>,
    psf: Option<PointSpreadFunction>,
    /// Forward-model noise, for synthetic data only.
    noise: Option<NoiseModel>,
}

impl Data {
    fn split(&self, split: Split) -> &[Pair] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    fn require_psf(&self) -> Result<&PointSpreadFunction> {
        self.psf.as_ref().ok_or_else(|| Error::config("this command needs a PSF; pass --psf for external paired data"))
    }
}

fn output_dir(out: &OutArgs, root: &Path, name: &str) -> Result<PathBuf> {
    let dir = out.out.clone().unwrap_or_else(|| root.join(name));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::config(e.to_string()))?;
    write_file(path, text + "\n")
}

/// Echoes the fully resolved configuration next to a command's outputs.
fn echo_config(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    write_file(&dir.join("config.json"), cfg.to_json() + "\n")
}

fn synthesis_flags_set(a: &DataArgs) -> bool {
    a.extents.is_some()
        || a.noise_sigma.is_some()
        || a.mask_density.is_some()
        || a.mask_support.is_some()
        || a.data_seed.is_some()
        || a.train_count.is_some()
        || a.val_count.is_some()
        || a.test_count.is_some()
}

fn apply_data_flags(cfg: &mut ExperimentConfig, a: &DataArgs) {
    if let Some(n) = a.extents {
        cfg.data.extents = [n, n];
        cfg.model.input_extents = [n, n];
    }
    if let Some(s) = a.noise_sigma {
        cfg.data.noise = if s == 0.0 {
            NoiseModel::none().with_seed(cfg.data.noise.seed)
        } else {
            NoiseModel::gaussian(s, cfg.data.noise.seed)
        };
    }
    if let Some(d) = a.mask_density {
        cfg.data.mask.density = d;
    }
    if let Some(s) = a.mask_support {
        cfg.data.mask.support = s;
    }
    if let Some(s) = a.data_seed {
        cfg.data.seed = s;
    }
    if let Some(n) = a.train_count {
        cfg.data.splits.train = n;
    }
    if let Some(n) = a.val_count {
        cfg.data.splits.val = n;
    }
    if let Some(n) = a.test_count {
        cfg.data.splits.test = n;
    }
}

fn apply_solver_flags(cfg: &mut ExperimentConfig, a: &SolverArgs) {
    let s = &mut cfg.solver;
    if let Some(v) = a.delta {
        s.wiener_delta = v;
    }
    if let Some(v) = a.iters {
        s.max_iters = v;
    }
    if let Some(v) = a.step {
        s.step_size = StepSize::Fixed(v);
    }
    if let Some(v) = a.tv {
        s.tv_weight = v;
    }
    if let Some(v) = a.l1 {
        s.l1_weight = v;
    }
    if let Some(v) = a.rho {
        s.rho = v;
    }
    if let Some(v) = a.tol {
        s.tol = v;
    }
    if let Some(v) = a.nonneg {
        s.nonneg = v;
    }
}

fn apply_model_flags(cfg: &mut ExperimentConfig, a: &ModelArgs) {
    let m = &mut cfg.model;
    if let Some(v) = a.scales {
        m.scales = v;
    }
    if let Some(v) = a.base_channels {
        m.base_channels = v;
    }
    if let Some(v) = a.variant {
        m.variant = match v {
            VariantArg::Full => Variant::Full,
            VariantArg::NoRecb => Variant::NoRecb,
            VariantArg::FixedPsf => Variant::FixedPsf,
        };
    }
    if let Some(v) = a.model_seed {
        m.seed = v;
    }
}

fn apply_training_flags(cfg: &mut ExperimentConfig, a: &TrainingArgs) {
    let t = &mut cfg.train;
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.steps {
        t.max_steps = Some(v);
    }
    if let Some(v) = a.lr {
        t.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.augment {
        t.augment = v;
    }
    if let Some(v) = a.train_seed {
        t.seed = v;
    }
}

fn read_psf(path: &Path) -> Result<PointSpreadFunction> {
    PointSpreadFunction::from_kernel(&read_image(path)?)
}

/// Resolves the dataset: a synthesized directory, an external paired
/// directory, or (without `--data`) synthesis in memory from the config.
/// Updates `cfg.data` to describe what was loaded. A fresh model's extents
/// follow the data; a checkpointed model must already match.
fn load_data(cfg: &mut ExperimentConfig, a: &DataArgs, psf: Option<&Path>, model: ModelUse) -> Result<Data> {
    apply_data_flags(cfg, a);
    let sync = |cfg: &mut ExperimentConfig| -> Result<()> {
        if model != ModelUse::Checkpoint {
            cfg.model.input_extents = cfg.data.extents;
        }
        if model == ModelUse::None {
            cfg.data.validate()?;
            lensless::wiener::WienerConfig::new(cfg.solver.wiener_delta).map_err(|e| Error::config(e.to_string()))?;
            Ok(())
        } else {
            cfg.validate()
        }
    };
    let Some(dir) = &a.data else {
        if psf.is_some() {
            return Err(Error::config("--psf applies to external paired data; synthetic data carries its own PSF"));
        }
        sync(cfg)?;
        let ds = cfg.data.generate()?;
        return Ok(Data {
            train: ds.train,
            val: ds.val,
            test: ds.test,
            psf: Some(ds.psf),
            noise: Some(cfg.data.noise),
        });
    };
    if synthesis_flags_set(a) {
        return Err(Error::config("dataset flags conflict with --data; the dataset on disk fixes them"));
    }
    if dir.join(MANIFEST_FILE).exists() {
        if psf.is_some() {
            return Err(Error::config("--psf conflicts with a synthesized dataset, which carries its own PSF"));
        }
        let ds = load_dataset(dir)?;
        cfg.data = ds.manifest.clone();
        sync(cfg)?;
        return Ok(Data {
            train: ds.train,
            val: ds.val,
            test: ds.test,
            psf: Some(ds.psf),
            noise: Some(cfg.data.noise),
        });
    }
    let load = |split: Split| -> Result<Vec<Pair>> {
        let sub = dir.join(split.name());
        if sub.exists() {
            load_paired_directory(&sub)
        } else {
            Ok(Vec::new())
        }
    };
    let data = Data {
        train: load(Split::Train)?,
        val: load(Split::Val)?,
        test: load(Split::Test)?,
        psf: psf.map(read_psf).transpose()?,
        noise: None,
    };
    let first = data
        .train
        .iter()
        .chain(&data.val)
        .chain(&data.test)
        .next()
        .ok_or_else(|| Error::argument(format!("{} holds no train/val/test pairs", dir.display())))?;
    cfg.data.root = dir.clone();
    cfg.data.extents = [first.object.height(), first.object.width()];
    if model != ModelUse::Checkpoint {
        cfg.model.channels = first.object.channels();
    }
    sync(cfg)?;
    Ok(data)
}

fn nonempty(pairs: &[Pair], split: Split) -> Result<&[Pair]> {
    if pairs.is_empty() {
        return Err(Error::argument(format!("the {} split is empty", split.name())));
    }
    Ok(pairs)
}

fn clamp01(x: &Tensor) -> Tensor {
    x.map(|v| v.clamp(0.0, 1.0))
}

fn metric_cells(r: &MetricReport) -> Vec<String> {
    vec![format!("{:.4}", r.psnr_db), format!("{:.5}", r.ssim), format!("{:.5}", r.perceptual)]
}

fn per_image_table(reports: &[MetricReport]) -> Table {
    let mut t = Table::new(&["image", "psnr_db", "ssim", "perceptual"]);
    for (i, r) in reports.iter().enumerate() {
        let mut row = vec![format!("{i:05}")];
        row.extend(metric_cells(r));
        t.push(row);
    }
    if let Some(mean) = MetricReport::mean(reports) {
        let mut row = vec!["mean".to_string()];
        row.extend(metric_cells(&mean));
        t.push(row);
    }
    t
}

fn simulate(mut cfg: ExperimentConfig, root: &Path, a: SimulateArgs) -> Result<()> {
    if a.data.data.is_some() {
        return Err(Error::config("simulate writes a dataset; use --out for its location instead of --data"));
    }
    apply_data_flags(&mut cfg, &a.data);
    let dir = output_dir(&a.out, root, "dataset")?;
    cfg.data.root = dir.clone();
    cfg.data.validate()?;
    let ds = synthesize_dataset(&cfg.data)?;
    echo_config(&dir, &cfg)?;
    println!("wrote {} train, {} val, {} test pairs to {}", ds.train.len(), ds.val.len(), ds.test.len(), dir.display());
    Ok(())
}

fn write_trace(path: &Path, result: &lensless::solvers::SolverResult) -> Result<()> {
    let admm = !result.primal_residuals.is_empty();
    let mut t = if admm {
        Table::new(&["iteration", "objective", "primal_residual", "dual_residual"])
    } else {
        Table::new(&["iteration", "objective"])
    };
    for (k, obj) in result.objective_trace.iter().enumerate() {
        let mut row = vec![k.to_string(), format!("{obj:.12e}")];
        if admm {
            let at = |v: &[f64]| v.get(k).map_or(String::new(), |x| format!("{x:.12e}"));
            row.push(at(&result.primal_residuals));
            row.push(at(&result.dual_residuals));
        }
        t.push(row);
    }
    write_file(path, t.to_csv())
}

fn reconstruct(mut cfg: ExperimentConfig, root: &Path, a: ReconstructArgs) -> Result<()> {
    apply_solver_flags(&mut cfg, &a.solver);
    cfg.solver.method = a.method;
    let proxy = PerceptualProxy::new(cfg.eval.perceptual_seed);
    if let Some(input) = &a.input {
        if a.split.is_some() || a.data.data.is_some() || synthesis_flags_set(&a.data) {
            return Err(Error::config("--input conflicts with dataset and split options"));
        }
        let psf_path = a.psf.as_ref().ok_or_else(|| Error::config("--input requires --psf"))?;
        let psf = read_psf(psf_path)?;
        let measurement = read_image(input)?;
        let dir = output_dir(&a.out, root, &format!("reconstruct-{}", a.method.name()))?;
        let estimate = if a.method == Method::Wiener {
            cfg.solver.reconstruct(a.method, &measurement, &psf)?
        } else {
            let result = cfg.solver.solve(a.method, &measurement, &psf)?;
            write_trace(&dir.join("trace.csv"), &result)?;
            result.estimate
        };
        let estimate = clamp01(&estimate);
        write_image(&dir.join("estimate.pgm"), &estimate, BitDepth::Sixteen)?;
        if let Some(reference) = &a.reference {
            let truth = read_image(reference)?;
            let report = MetricReport::evaluate(&estimate, &truth, cfg.eval.value_range, &proxy)?;
            write_json(&dir.join("metrics.json"), &report)?;
            let t = per_image_table(&[report]);
            t.save(&dir, "metrics")?;
            println!(
                "{}: psnr_db {:.4} ssim {:.5} perceptual {:.5}",
                a.method.name(),
                report.psnr_db,
                report.ssim,
                report.perceptual
            );
        }
        echo_config(&dir, &cfg)?;
        println!("wrote {}", dir.join("estimate.pgm").display());
        return Ok(());
    }
    if a.reference.is_some() {
        return Err(Error::config("--reference applies only with --input"));
    }
    let data = load_data(&mut cfg, &a.data, a.psf.as_deref(), ModelUse::None)?;
    let split = a.split.unwrap_or(Split::Test);
    let pairs = nonempty(data.split(split), split)?;
    let psf = data.require_psf()?;
    let dir = output_dir(&a.out, root, &format!("reconstruct-{}", a.method.name()))?;
    let est_dir = dir.join("estimates");
    fs::create_dir_all(&est_dir).map_err(|e| Error::io(&est_dir, e))?;
    let mut reports = Vec::with_capacity(pairs.len());
    for (i, p) in pairs.iter().enumerate() {
        let estimate = clamp01(&cfg.solver.reconstruct(a.method, &p.measurement, psf)?);
        write_image(&est_dir.join(format!("{i:05}.pgm")), &estimate, BitDepth::Sixteen)?;
        reports.push(MetricReport::evaluate(&estimate, &p.object, cfg.eval.value_range, &proxy)?);
    }
    finish_metrics(&dir, &cfg, a.method.name(), split, &reports)
}

fn finish_metrics(
    dir: &Path,
    cfg: &ExperimentConfig,
    label: &str,
    split: Split,
    reports: &[MetricReport],
) -> Result<()> {
    let table = per_image_table(reports);
    table.save(dir, "metrics")?;
    let mean = MetricReport::mean(reports).expect("non-empty split");
    write_json(
        &dir.join("summary.json"),
        &serde_json::json!({ "method": label, "split": split.name(), "count": reports.len(), "mean": mean }),
    )?;
    echo_config(dir, cfg)?;
    println!(
        "{label} on {} ({} images): psnr_db {:.4} ssim {:.5} perceptual {:.5}",
        split.name(),
        reports.len(),
        mean.psnr_db,
        mean.ssim,
        mean.perceptual
    );
    Ok(())
}

fn train_network(cfg: &ExperimentConfig, data: &Data) -> Result<(LensNet, TrainHistory)> {
    let mut net = LensNet::new(cfg.model.clone(), data.psf.as_ref())?;
    if cfg.train.epochs == 0 || cfg.train.max_steps == Some(0) {
        return Ok((net, TrainHistory::default()));
    }
    let forward = match (&data.psf, data.noise) {
        (Some(psf), Some(noise)) => Some(Augmentation { psf: psf.clone(), noise }),
        _ => None,
    };
    let history = train(&mut net, nonempty(&data.train, Split::Train)?, &data.val, &cfg.train, forward.as_ref())?;
    Ok((net, history))
}

fn save_training(dir: &Path, net: &LensNet, history: &TrainHistory, stem: &str) -> Result<()> {
    save_checkpoint(&dir.join(format!("{stem}.ckpt")), net, history.step_losses.len() as u64)?;
    write_file(&dir.join(format!("{stem}_history.csv")), history.to_csv())?;
    write_json(&dir.join(format!("{stem}_history.json")), history)
}

fn train_cmd(mut cfg: ExperimentConfig, root: &Path, a: TrainArgs) -> Result<()> {
    apply_model_flags(&mut cfg, &a.model);
    apply_training_flags(&mut cfg, &a.train);
    let data = load_data(&mut cfg, &a.data, a.psf.as_deref(), ModelUse::Fresh)?;
    let dir = output_dir(&a.out, root, "train")?;
    echo_config(&dir, &cfg)?;
    let (net, history) = train_network(&cfg, &data)?;
    save_training(&dir, &net, &history, "checkpoint")?;
    match history.val_psnr.last() {
        Some(p) => println!("trained {} steps; validation psnr_db {p:.4}", history.step_losses.len()),
        None => println!("wrote initial checkpoint (no training steps)"),
    }
    println!("wrote {}", dir.join("checkpoint.ckpt").display());
    Ok(())
}

fn eval(mut cfg: ExperimentConfig, root: &Path, a: EvalArgs) -> Result<()> {
    apply_solver_flags(&mut cfg, &a.solver);
    let split = a.split.unwrap_or(Split::Test);
    match (&a.checkpoint, a.method) {
        (Some(path), None) => {
            let ck = load_checkpoint(path)?;
            cfg.model = ck.net.config().clone();
            let data = load_data(&mut cfg, &a.data, a.psf.as_deref(), ModelUse::Checkpoint)?;
            let pairs = nonempty(data.split(split), split)?;
            let reports = evaluate_network(&ck.net, pairs, &cfg.eval)?;
            let dir = output_dir(&a.out, root, "eval-lensnet")?;
            finish_metrics(&dir, &cfg, "lensnet", split, &reports)
        }
        (None, Some(method)) => {
            cfg.solver.method = method;
            let data = load_data(&mut cfg, &a.data, a.psf.as_deref(), ModelUse::None)?;
            let pairs = nonempty(data.split(split), split)?;
            let reports = evaluate_method(pairs, method, &cfg.solver, data.require_psf()?, &cfg.eval)?;
            let dir = output_dir(&a.out, root, &format!("eval-{}", method.name()))?;
            finish_metrics(&dir, &cfg, method.name(), split, &reports)
        }
        _ => Err(Error::config("eval needs exactly one of --checkpoint and --method")),
    }
}

fn benchmark(mut cfg: ExperimentConfig, root: &Path, a: BenchmarkArgs) -> Result<()> {
    apply_solver_flags(&mut cfg, &a.solver);
    apply_model_flags(&mut cfg, &a.model);
    apply_training_flags(&mut cfg, &a.train);
    let checkpoint = a.checkpoint.as_deref().map(load_checkpoint).transpose()?;
    if let Some(ck) = &checkpoint {
        cfg.model = ck.net.config().clone();
    }
    let model = if checkpoint.is_some() { ModelUse::Checkpoint } else { ModelUse::Fresh };
    let data = load_data(&mut cfg, &a.data, None, model)?;
    let split = a.split.unwrap_or(Split::Test);
    let pairs = nonempty(data.split(split), split)?;
    let psf = data.require_psf()?;
    if a.solver.delta.is_none() {
        let (delta, _) =
            tune_wiener_delta(nonempty(&data.train, Split::Train)?, psf, &delta_grid(), cfg.eval.value_range)?;
        cfg.solver.wiener_delta = delta;
    }
    let dir = output_dir(&a.out, root, "benchmark")?;
    let mut table = Table::new(&["method", "psnr_db", "ssim", "perceptual"]);
    let mut summary = serde_json::Map::new();
    for method in Method::ALL {
        let reports = evaluate_method(pairs, method, &cfg.solver, psf, &cfg.eval)?;
        let mean = MetricReport::mean(&reports).expect("non-empty split");
        let mut row = vec![method.name().to_string()];
        row.extend(metric_cells(&mean));
        table.push(row);
        summary.insert(method.name().into(), serde_json::to_value(mean).expect("report serializes"));
    }
    let net = match checkpoint {
        Some(ck) => ck.net,
        None => {
            let (net, history) = train_network(&cfg, &data)?;
            save_training(&dir, &net, &history, "lensnet")?;
            net
        }
    };
    let mean = MetricReport::mean(&evaluate_network(&net, pairs, &cfg.eval)?).expect("non-empty split");
    let mut row = vec!["lensnet".to_string()];
    row.extend(metric_cells(&mean));
    table.push(row);
    summary.insert("lensnet".into(), serde_json::to_value(mean).expect("report serializes"));

    table.save(&dir, "benchmark")?;
    write_json(&dir.join("summary.json"), &summary)?;
    echo_config(&dir, &cfg)?;
    println!("split {} ({} images), wiener delta {:.3e}", split.name(), pairs.len(), cfg.solver.wiener_delta);
    print!("{}", table.to_text());
    Ok(())
}

fn ablate(mut cfg: ExperimentConfig, root: &Path, a: AblateArgs) -> Result<()> {
    apply_model_flags(&mut cfg, &a.model);
    apply_training_flags(&mut cfg, &a.train);
    let data = load_data(&mut cfg, &a.data, None, ModelUse::Fresh)?;
    let split = a.split.unwrap_or(Split::Val);
    let pairs = nonempty(data.split(split), split)?;
    let rows = run_ablation(
        &Ablation::ALL,
        &cfg.model,
        &cfg.train,
        nonempty(&data.train, Split::Train)?,
        pairs,
        data.require_psf()?,
        &cfg.eval,
    )?;
    let dir = output_dir(&a.out, root, "ablate")?;
    let mut table = Table::new(&["variant", "parameters", "flops", "psnr_db", "ssim", "perceptual"]);
    for r in &rows {
        let mut row = vec![r.variant.to_string(), r.parameters.to_string(), r.flops.to_string()];
        row.extend(metric_cells(&r.metrics));
        table.push(row);
        write_file(&dir.join(format!("history_{}.csv", r.variant)), r.history.to_csv())?;
    }
    table.save(&dir, "ablation")?;
    write_json(&dir.join("summary.json"), &rows)?;
    echo_config(&dir, &cfg)?;
    println!("split {} ({} images)", split.name(), pairs.len());
    print!("{}", table.to_text());
    Ok(())
}
