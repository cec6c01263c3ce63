//! Iterative reconstruction for `min ½‖A x − b‖² + λ·TV(x) + μ·‖x‖₁`
//! where `A` is circular convolution with the PSF.
//!
//! All solvers start from zero and record the objective after every
//! iteration. TV is anisotropic with circular forward differences.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::PointSpreadFunction;
use crate::tensor::{fft2, ifft2, ComplexTensor, ImagePlane, Tensor};

#[derive(Debug, Clone)]
pub struct InverseProblem {
    pub measurement: ImagePlane,
    pub psf: PointSpreadFunction,
    pub nonneg: bool,
    pub tv_weight: f64,
    pub l1_weight: f64,
}

impl InverseProblem {
    pub fn new(measurement: ImagePlane, psf: PointSpreadFunction) -> Result<Self> {
        let p = Self { measurement, psf, nonneg: false, tv_weight: 0.0, l1_weight: 0.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn with_nonneg(mut self, nonneg: bool) -> Self {
        self.nonneg = nonneg;
        self
    }

    pub fn with_tv(mut self, weight: f64) -> Self {
        self.tv_weight = weight;
        self
    }

    pub fn with_l1(mut self, weight: f64) -> Self {
        self.l1_weight = weight;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.psf.extents();
        if (self.measurement.height(), self.measurement.width()) != (h, w) {
            return Err(Error::sizing(format!(
                "measurement {}x{} does not match PSF {h}x{w}",
                self.measurement.height(),
                self.measurement.width()
            )));
        }
        for (name, v) in [("tv_weight", self.tv_weight), ("l1_weight", self.l1_weight)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::argument(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    fn check_iterate(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.measurement.shape() {
            return Err(Error::sizing(format!(
                "iterate {:?} does not match measurement {:?}",
                x.shape(),
                self.measurement.shape()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    /// `1/L` with `L = max |PSF(u,v)|²`.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub step_size: StepSize,
    pub rho: f64,
    pub tol: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iters: 300, step_size: StepSize::Auto, rho: 1.0, tol: 0.0, seed: 0 }
    }
}

impl SolverConfig {
    pub fn iters(max_iters: usize) -> Self {
        Self { max_iters, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::argument("max_iters must be >= 1"));
        }
        if let StepSize::Fixed(s) = self.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::argument(format!("step size must be > 0, got {s}")));
            }
        }
        if !(self.tol >= 0.0) {
            return Err(Error::argument(format!("tol must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }

    fn step(&self, problem: &InverseProblem) -> f64 {
        match self.step_size {
            StepSize::Auto => 1.0 / problem.psf.lipschitz(),
            StepSize::Fixed(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub estimate: ImagePlane,
    pub objective_trace: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    /// ADMM only: RMS primal residual per iteration.
    pub primal_residuals: Vec<f64>,
    /// ADMM only: RMS dual residual per iteration.
    pub dual_residuals: Vec<f64>,
}

/// Anisotropic TV with wrap-around: `Σ |x[i,j+1]-x[i,j]| + |x[i+1,j]-x[i,j]|`.
pub fn total_variation(x: &Tensor) -> f64 {
    let (dh, dv) = forward_diff(x);
    dh.data().iter().chain(dv.data()).map(|v| v.abs()).sum()
}

fn forward_diff(x: &Tensor) -> (Tensor, Tensor) {
    let (h, w) = (x.height(), x.width());
    let mut dh = Tensor::zeros(x.shape());
    let mut dv = Tensor::zeros(x.shape());
    for p in 0..x.planes() {
        let src = x.plane(p);
        let gh = dh.plane_mut(p);
        for i in 0..h {
            for j in 0..w {
                gh[i * w + j] = src[i * w + (j + 1) % w] - src[i * w + j];
            }
        }
        let gv = dv.plane_mut(p);
        for i in 0..h {
            for j in 0..w {
                gv[i * w + j] = src[((i + 1) % h) * w + j] - src[i * w + j];
            }
        }
    }
    (dh, dv)
}

/// Adjoint of [`forward_diff`]: `Dᵀ(gh, gv)`.
fn forward_diff_adjoint(gh: &Tensor, gv: &Tensor) -> Tensor {
    let (h, w) = (gh.height(), gh.width());
    let mut out = Tensor::zeros(gh.shape());
    for p in 0..gh.planes() {
        let (a, b) = (gh.plane(p), gv.plane(p));
        let dst = out.plane_mut(p);
        for i in 0..h {
            for j in 0..w {
                let left = a[i * w + (j + w - 1) % w];
                let up = b[((i + h - 1) % h) * w + j];
                dst[i * w + j] = left - a[i * w + j] + up - b[i * w + j];
            }
        }
    }
    out
}

/// `½‖Ax − b‖² + λ·TV(x) + μ·‖x‖₁`, adding only the active terms.
pub fn data_objective(x: &Tensor, problem: &InverseProblem) -> Result<f64> {
    problem.check_iterate(x)?;
    let residual = problem.psf.apply(x)?.sub(&problem.measurement)?;
    let mut f = 0.5 * residual.norm_sq();
    if problem.tv_weight > 0.0 {
        f += problem.tv_weight * total_variation(x);
    }
    if problem.l1_weight > 0.0 {
        f += problem.l1_weight * x.data().iter().map(|v| v.abs()).sum::<f64>();
    }
    Ok(f)
}

/// Gradient of the smooth term only: `Aᵀ(Ax − b)`.
pub fn data_gradient(x: &Tensor, problem: &InverseProblem) -> Result<Tensor> {
    problem.check_iterate(x)?;
    let residual = problem.psf.apply(x)?.sub(&problem.measurement)?;
    problem.psf.apply_adjoint(&residual)
}

fn relative_change(new: &Tensor, old: &Tensor) -> f64 {
    let diff: f64 = new.data().iter().zip(old.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    diff / old.norm().max(f64::MIN_POSITIVE)
}

fn project_nonneg(x: &mut Tensor) {
    x.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
}

fn soft_threshold(x: &mut Tensor, t: f64) {
    x.data_mut().iter_mut().for_each(|v| *v = v.signum() * (v.abs() - t).max(0.0));
}

struct Tracker {
    initial: f64,
    step: f64,
    trace: Vec<f64>,
}

impl Tracker {
    fn new(problem: &InverseProblem, step: f64) -> Result<Self> {
        let zero = Tensor::zeros(problem.measurement.shape());
        Ok(Self { initial: data_objective(&zero, problem)?, step, trace: Vec::new() })
    }

    fn record(&mut self, objective: f64) -> Result<()> {
        if !objective.is_finite() || objective > 10.0 * self.initial.max(f64::MIN_POSITIVE) {
            return Err(Error::Divergence { step: self.step, objective, initial: self.initial });
        }
        self.trace.push(objective);
        Ok(())
    }
}

fn check_smooth(problem: &InverseProblem, name: &str) -> Result<()> {
    if problem.tv_weight != 0.0 || problem.l1_weight != 0.0 {
        return Err(Error::argument(format!("{name} handles the smooth data term only; use fista (l1) or admm (tv)")));
    }
    Ok(())
}

fn finish(estimate: Tensor, tracker: Tracker, converged: bool) -> SolverResult {
    SolverResult {
        iterations_run: tracker.trace.len(),
        estimate,
        objective_trace: tracker.trace,
        converged,
        primal_residuals: Vec::new(),
        dual_residuals: Vec::new(),
    }
}

/// Projected gradient descent: `x ← clip₊(x − η∇f(x))` (clip only when the
/// nonnegativity constraint is active).
pub fn solve_gd(problem: &InverseProblem, cfg: &SolverConfig) -> Result<SolverResult> {
    problem.validate()?;
    cfg.validate()?;
    check_smooth(problem, "gradient descent")?;
    let step = cfg.step(problem);
    let mut tracker = Tracker::new(problem, step)?;
    let mut x = Tensor::zeros(problem.measurement.shape());
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let g = data_gradient(&x, problem)?;
        let mut next = x.clone();
        next.axpy(-step, &g)?;
        if problem.nonneg {
            project_nonneg(&mut next);
        }
        tracker.record(data_objective(&next, problem)?)?;
        let change = relative_change(&next, &x);
        x = next;
        if cfg.tol > 0.0 && change < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(finish(x, tracker, converged))
}

/// Momentum restart policy for the accelerated loop.
#[derive(Clone, Copy, PartialEq)]
enum Restart {
    Never,
    /// Reset momentum whenever the objective increases.
    OnIncrease,
}

/// FISTA-style accelerated proximal gradient:
/// `x_k = prox(y_k − η∇f(y_k))`, `t_{k+1} = (1 + √(1 + 4t_k²))/2`,
/// `y_{k+1} = x_k + ((t_k − 1)/t_{k+1})(x_k − x_{k−1})`.
fn accelerated(
    problem: &InverseProblem,
    cfg: &SolverConfig,
    prox: impl Fn(&mut Tensor, f64),
    restart: Restart,
    observe: &mut dyn FnMut(&Tensor),
) -> Result<SolverResult> {
    problem.validate()?;
    cfg.validate()?;
    let step = cfg.step(problem);
    let mut tracker = Tracker::new(problem, step)?;
    let mut x_prev = Tensor::zeros(problem.measurement.shape());
    let mut y = x_prev.clone();
    let mut t = 1.0f64;
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let g = data_gradient(&y, problem)?;
        let mut x = y.clone();
        x.axpy(-step, &g)?;
        prox(&mut x, step);
        observe(&x);
        let objective = data_objective(&x, problem)?;
        let increased = tracker.trace.last().is_some_and(|&last| objective > last);
        tracker.record(objective)?;
        let change = relative_change(&x, &x_prev);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        if restart == Restart::OnIncrease && increased {
            t = 1.0;
            y = x.clone();
        } else {
            let beta = (t - 1.0) / t_next;
            y = x.clone();
            for ((yv, &xv), &pv) in y.data_mut().iter_mut().zip(x.data()).zip(x_prev.data()) {
                *yv = xv + beta * (xv - pv);
            }
            t = t_next;
        }
        x_prev = x;
        if cfg.tol > 0.0 && change < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(finish(x_prev, tracker, converged))
}

/// Nesterov-accelerated gradient descent (projected when `nonneg` is set).
pub fn solve_nesterov(problem: &InverseProblem, cfg: &SolverConfig) -> Result<SolverResult> {
    check_smooth(problem, "Nesterov gradient descent")?;
    let nonneg = problem.nonneg;
    accelerated(
        problem,
        cfg,
        |x, _| {
            if nonneg {
                project_nonneg(x)
            }
        },
        Restart::Never,
        &mut |_| {},
    )
}

/// FISTA with the ℓ1 prox: soft-threshold by `η·μ`, then (if `nonneg`)
/// clip at zero.
pub fn solve_fista(problem: &InverseProblem, cfg: &SolverConfig) -> Result<SolverResult> {
    if problem.tv_weight != 0.0 {
        return Err(Error::argument("FISTA does not handle TV; use admm"));
    }
    let (mu, nonneg) = (problem.l1_weight, problem.nonneg);
    accelerated(
        problem,
        cfg,
        |x, step| {
            if mu > 0.0 {
                soft_threshold(x, step * mu);
            }
            if nonneg {
                project_nonneg(x);
            }
        },
        Restart::Never,
        &mut |_| {},
    )
}

/// Accelerated projected gradient onto the nonnegative orthant, with
/// function-value momentum restart.
pub fn solve_apgd(problem: &InverseProblem, cfg: &SolverConfig) -> Result<SolverResult> {
    solve_apgd_observed(problem, cfg, &mut |_| {})
}

/// [`solve_apgd`] calling `observe` on every iterate.
pub fn solve_apgd_observed(
    problem: &InverseProblem,
    cfg: &SolverConfig,
    observe: &mut dyn FnMut(&Tensor),
) -> Result<SolverResult> {
    if !problem.nonneg {
        return Err(Error::argument("APGD requires the nonnegativity constraint"));
    }
    check_smooth(problem, "APGD")?;
    accelerated(problem, cfg, |x, _| project_nonneg(x), Restart::OnIncrease, observe)
}

/// Frequency-domain solver for `(AᵀA + ρDᵀD + ρI) x = rhs`.
pub(crate) struct AdmmSystem {
    denominator: Vec<f64>,
    shape: [usize; 4],
}

impl AdmmSystem {
    pub(crate) fn new(psf: &PointSpreadFunction, rho: f64, shape: [usize; 4]) -> Self {
        let (h, w) = (shape[2], shape[3]);
        let mut denominator = Vec::with_capacity(h * w);
        for u in 0..h {
            for v in 0..w {
                let p = psf.transform().data()[u * w + v];
                let eh = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * v as f64 / w as f64) - 1.0;
                let ev = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * u as f64 / h as f64) - 1.0;
                denominator.push(p.norm_sqr() + rho * (eh.norm_sqr() + ev.norm_sqr()) + rho);
            }
        }
        Self { denominator, shape }
    }

    pub(crate) fn solve(&self, rhs: &Tensor) -> Result<Tensor> {
        debug_assert_eq!(rhs.shape(), self.shape);
        let mut spec: ComplexTensor = fft2(rhs)?;
        for p in 0..spec.planes() {
            for (z, &d) in spec.plane_mut(p).iter_mut().zip(&self.denominator) {
                *z /= d;
            }
        }
        Ok(ifft2(&spec)?.real())
    }
}

/// Right-hand side of the ADMM x-update:
/// `Aᵀb + ρDᵀ(z − u) + ρ(w − v)`.
pub(crate) fn admm_rhs(
    problem: &InverseProblem,
    rho: f64,
    tv_target: (&Tensor, &Tensor),
    id_target: &Tensor,
) -> Result<Tensor> {
    let mut rhs = problem.psf.apply_adjoint(&problem.measurement)?;
    rhs.axpy(rho, &forward_diff_adjoint(tv_target.0, tv_target.1))?;
    rhs.axpy(rho, id_target)?;
    Ok(rhs)
}

/// ADMM for `½‖Ax − b‖² + λ‖Dx‖₁ (+ μ‖x‖₁)` with splittings `z = Dx`,
/// `w = x`. The x-update is solved exactly in the Fourier domain; the z-update
/// soft-thresholds the gradients; the w-update applies the ℓ1 prox and the
/// nonnegativity projection.
pub fn solve_admm_tv(problem: &InverseProblem, cfg: &SolverConfig) -> Result<SolverResult> {
    problem.validate()?;
    cfg.validate()?;
    if !(cfg.rho > 0.0 && cfg.rho.is_finite()) {
        return Err(Error::argument(format!("ADMM rho must be > 0, got {}", cfg.rho)));
    }
    if !(problem.tv_weight > 0.0) {
        return Err(Error::argument("ADMM-TV needs tv_weight > 0"));
    }
    let rho = cfg.rho;
    let shape = problem.measurement.shape();
    let system = AdmmSystem::new(&problem.psf, rho, shape);
    let mut tracker = Tracker::new(problem, 1.0 / rho)?;
    let zeros = || Tensor::zeros(shape);
    let (mut zh, mut zv, mut w) = (zeros(), zeros(), zeros());
    let (mut uh, mut uv, mut uw) = (zeros(), zeros(), zeros());
    let mut x = zeros();
    let mut primal = Vec::new();
    let mut dual = Vec::new();
    let rms = (x.len() as f64).sqrt();
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let th = zh.sub(&uh)?;
        let tv = zv.sub(&uv)?;
        let tw = w.sub(&uw)?;
        x = system.solve(&admm_rhs(problem, rho, (&th, &tv), &tw)?)?;

        let (dh, dv) = forward_diff(&x);
        let (zh_old, zv_old, w_old) = (zh.clone(), zv.clone(), w.clone());
        zh = dh.add(&uh)?;
        zv = dv.add(&uv)?;
        soft_threshold(&mut zh, problem.tv_weight / rho);
        soft_threshold(&mut zv, problem.tv_weight / rho);
        w = x.add(&uw)?;
        if problem.l1_weight > 0.0 {
            soft_threshold(&mut w, problem.l1_weight / rho);
        }
        if problem.nonneg {
            project_nonneg(&mut w);
        }

        let rh = dh.sub(&zh)?;
        let rv = dv.sub(&zv)?;
        let rw = x.sub(&w)?;
        uh.axpy(1.0, &rh)?;
        uv.axpy(1.0, &rv)?;
        uw.axpy(1.0, &rw)?;

        let r = (rh.norm_sq() + rv.norm_sq() + rw.norm_sq()).sqrt() / rms;
        let dz = forward_diff_adjoint(&zh.sub(&zh_old)?, &zv.sub(&zv_old)?);
        let s = rho * (dz.norm_sq() + w.sub(&w_old)?.norm_sq()).sqrt() / rms;
        primal.push(r);
        dual.push(s);

        // the constrained variable is the reported estimate
        let estimate = if problem.nonneg || problem.l1_weight > 0.0 { &w } else { &x };
        tracker.record(data_objective(estimate, problem)?)?;
        if cfg.tol > 0.0 && r < cfg.tol && s < cfg.tol {
            converged = true;
            break;
        }
    }
    let estimate = if problem.nonneg || problem.l1_weight > 0.0 { w } else { x };
    let mut result = finish(estimate, tracker, converged);
    result.primal_residuals = primal;
    result.dual_residuals = dual;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{generate_mask, mask_to_psf, MaskPattern};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_plane(h, w, (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_psf(n: usize, seed: u64) -> PointSpreadFunction {
        mask_to_psf(&generate_mask(MaskPattern::Random, (n, n), seed, 0.3).unwrap()).unwrap()
    }

    /// Brute-force objective from the definition, independent of the FFT path.
    fn objective_oracle(x: &Tensor, problem: &InverseProblem) -> f64 {
        let k = problem.psf.centered_kernel();
        let (h, w) = (x.height(), x.width());
        let mut f = 0.0;
        for i in 0..h {
            for j in 0..w {
                let mut ax = 0.0;
                for a in 0..h {
                    for b in 0..w {
                        ax += k.get(0, 0, a, b) * x.get(0, 0, (i + h - a) % h, (j + w - b) % w);
                    }
                }
                let r = ax - problem.measurement.get(0, 0, i, j);
                f += 0.5 * r * r;
                let xv = x.get(0, 0, i, j);
                f += problem.tv_weight
                    * ((x.get(0, 0, i, (j + 1) % w) - xv).abs() + (x.get(0, 0, (i + 1) % h, j) - xv).abs());
                f += problem.l1_weight * xv.abs();
            }
        }
        f
    }

    #[test]
    fn objective_zero_at_exact_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let psf = random_psf(8, 1);
        let x = random(8, 8, &mut rng);
        let b = psf.apply(&x).unwrap();
        let p = InverseProblem::new(b, psf).unwrap();
        assert!(data_objective(&x, &p).unwrap() < 1e-20);
        assert!(data_gradient(&x, &p).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn objective_at_zero_is_half_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = random(8, 8, &mut rng);
        let p = InverseProblem::new(b.clone(), random_psf(8, 2)).unwrap();
        let f = data_objective(&Tensor::zeros([1, 1, 8, 8]), &p).unwrap();
        assert!((f - 0.5 * b.norm_sq()).abs() < 1e-12);
    }

    #[test]
    fn objective_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = InverseProblem::new(random(4, 4, &mut rng), random_psf(4, 3)).unwrap().with_tv(0.1).with_l1(0.05);
        let x = random(4, 4, &mut rng);
        let f = data_objective(&x, &p).unwrap();
        assert!((f - objective_oracle(&x, &p)).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for seed in 0..20 {
            let p = InverseProblem::new(random(8, 8, &mut rng), random_psf(8, seed)).unwrap();
            let x = random(8, 8, &mut rng);
            let g = data_gradient(&x, &p).unwrap();
            let eps = 1e-5;
            for q in [0, 9, 33, 63] {
                let mut xp = x.clone();
                xp.data_mut()[q] += eps;
                let mut xm = x.clone();
                xm.data_mut()[q] -= eps;
                let fd = (data_objective(&xp, &p).unwrap() - data_objective(&xm, &p).unwrap()) / (2.0 * eps);
                assert!((fd - g.data()[q]).abs() <= 1e-6 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn delta_psf_gradient_is_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random(8, 8, &mut rng);
        let x = random(8, 8, &mut rng);
        let p = InverseProblem::new(b.clone(), PointSpreadFunction::delta(8, 8).unwrap()).unwrap();
        let g = data_gradient(&x, &p).unwrap();
        assert!(g.sub(&x.sub(&b).unwrap()).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn gd_on_identity_converges_to_measurement() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let b = random(16, 16, &mut rng);
        let p = InverseProblem::new(b.clone(), PointSpreadFunction::delta(16, 16).unwrap()).unwrap();
        let r = solve_gd(&p, &SolverConfig::iters(200)).unwrap();
        assert!(r.estimate.sub(&b).unwrap().max_abs() <= 1e-6);
        assert_eq!(r.iterations_run, r.objective_trace.len());
    }

    #[test]
    fn gd_trace_is_monotone_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = random(16, 16, &mut rng);
        let p = InverseProblem::new(b, random_psf(16, 7)).unwrap();
        let r1 = solve_gd(&p, &SolverConfig::iters(100)).unwrap();
        let r2 = solve_gd(&p, &SolverConfig::iters(100)).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn gd_rejects_nonsmooth_terms_and_detects_divergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b = random(8, 8, &mut rng);
        let psf = PointSpreadFunction::delta(8, 8).unwrap();
        let tv = InverseProblem::new(b.clone(), psf.clone()).unwrap().with_tv(0.1);
        assert!(matches!(solve_gd(&tv, &SolverConfig::iters(5)), Err(Error::Argument(_))));
        let p = InverseProblem::new(b, psf).unwrap();
        let cfg = SolverConfig { step_size: StepSize::Fixed(5.0), ..SolverConfig::iters(50) };
        match solve_gd(&p, &cfg) {
            Err(Error::Divergence { step, .. }) => assert_eq!(step, 5.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn tolerance_stops_early() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = random(8, 8, &mut rng);
        let p = InverseProblem::new(b, PointSpreadFunction::delta(8, 8).unwrap()).unwrap();
        let cfg = SolverConfig { tol: 1e-8, ..SolverConfig::iters(500) };
        let r = solve_gd(&p, &cfg).unwrap();
        assert!(r.converged);
        assert!(r.iterations_run < 500);
    }

    #[test]
    fn nesterov_first_iteration_is_gradient_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = InverseProblem::new(random(16, 16, &mut rng), random_psf(16, 10)).unwrap();
        let gd = solve_gd(&p, &SolverConfig::iters(1)).unwrap();
        let nes = solve_nesterov(&p, &SolverConfig::iters(1)).unwrap();
        assert_eq!(gd.estimate, nes.estimate);
    }

    #[test]
    fn nesterov_on_identity_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = random(16, 16, &mut rng);
        let p = InverseProblem::new(b.clone(), PointSpreadFunction::delta(16, 16).unwrap()).unwrap();
        let r = solve_nesterov(&p, &SolverConfig::iters(50)).unwrap();
        assert!(r.estimate.sub(&b).unwrap().max_abs() <= 1e-6);
    }

    #[test]
    fn fista_without_prox_equals_nesterov_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = InverseProblem::new(random(16, 16, &mut rng), random_psf(16, 12)).unwrap();
        let cfg = SolverConfig::iters(60);
        assert_eq!(solve_fista(&p, &cfg).unwrap(), solve_nesterov(&p, &cfg).unwrap());
    }

    #[test]
    fn huge_l1_weight_zeroes_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let b = random(16, 16, &mut rng);
        let psf = random_psf(16, 13);
        let scale = psf.apply_adjoint(&b).unwrap().max_abs();
        let p = InverseProblem::new(b, psf).unwrap().with_l1(10.0 * scale);
        let r = solve_fista(&p, &SolverConfig::iters(30)).unwrap();
        assert!(r.estimate.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fista_recovers_sparse_support() {
        let psf = PointSpreadFunction::full_spectrum(16, 16, 0.3, 14).unwrap();
        let mut x = Tensor::zeros([1, 1, 16, 16]);
        for (i, j, v) in [(2, 3, 1.0), (7, 11, 0.8), (12, 5, 0.6), (14, 14, 0.9)] {
            x.set(0, 0, i, j, v);
        }
        let b = psf.apply(&x).unwrap();
        let p = InverseProblem::new(b, psf).unwrap().with_l1(0.02).with_nonneg(true);
        let r = solve_fista(&p, &SolverConfig::iters(500)).unwrap();
        let support: Vec<bool> = r.estimate.data().iter().map(|&v| v > 1e-6).collect();
        let truth: Vec<bool> = x.data().iter().map(|&v| v > 0.0).collect();
        assert_eq!(support, truth);
    }

    #[test]
    fn apgd_stays_nonnegative_and_projects_identity_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let b = random(16, 16, &mut rng);
        let p = InverseProblem::new(b.clone(), PointSpreadFunction::delta(16, 16).unwrap()).unwrap().with_nonneg(true);
        let mut min_seen = f64::INFINITY;
        let r = solve_apgd_observed(&p, &SolverConfig::iters(100), &mut |x| min_seen = min_seen.min(x.min())).unwrap();
        assert!(min_seen >= 0.0);
        assert!(r.estimate.sub(&b.clamp_min(0.0)).unwrap().max_abs() < 1e-9);
        let unconstrained = InverseProblem::new(b, PointSpreadFunction::delta(16, 16).unwrap()).unwrap();
        assert!(solve_apgd(&unconstrained, &SolverConfig::iters(5)).is_err());
    }

    #[test]
    fn apgd_reaches_nonnegative_exact_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let x = random(16, 16, &mut rng).map(f64::abs);
        let p = InverseProblem::new(x.clone(), PointSpreadFunction::delta(16, 16).unwrap()).unwrap().with_nonneg(true);
        let r = solve_apgd(&p, &SolverConfig::iters(50)).unwrap();
        assert!(r.estimate.sub(&x).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn tv_adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = random(8, 6, &mut rng);
        let (gh, gv) = (random(8, 6, &mut rng), random(8, 6, &mut rng));
        let (dh, dv) = forward_diff(&x);
        let lhs = dh.dot(&gh).unwrap() + dv.dot(&gv).unwrap();
        let rhs = x.dot(&forward_diff_adjoint(&gh, &gv)).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn admm_x_update_solves_its_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let psf = random_psf(16, 18);
        let p = InverseProblem::new(random(16, 16, &mut rng), psf.clone()).unwrap().with_tv(0.1);
        let rho = 0.7;
        let (th, tv, tw) = (random(16, 16, &mut rng), random(16, 16, &mut rng), random(16, 16, &mut rng));
        let sys = AdmmSystem::new(&psf, rho, [1, 1, 16, 16]);
        let x = sys.solve(&admm_rhs(&p, rho, (&th, &tv), &tw).unwrap()).unwrap();
        // gradient of ½‖Ax−b‖² + ρ/2‖Dx − t‖² + ρ/2‖x − tw‖², evaluated spatially
        let (dh, dv) = forward_diff(&x);
        let mut grad = data_gradient(&x, &p).unwrap();
        grad.axpy(rho, &forward_diff_adjoint(&dh.sub(&th).unwrap(), &dv.sub(&tv).unwrap())).unwrap();
        grad.axpy(rho, &x.sub(&tw).unwrap()).unwrap();
        assert!(grad.norm() <= 1e-8);
    }

    #[test]
    fn admm_without_regularization_on_identity_returns_measurement() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let b = random(16, 16, &mut rng);
        let p = InverseProblem::new(b.clone(), PointSpreadFunction::delta(16, 16).unwrap()).unwrap().with_tv(1e-9);
        let r = solve_admm_tv(&p, &SolverConfig::iters(200)).unwrap();
        assert!(r.estimate.sub(&b).unwrap().max_abs() < 1e-6);
        assert_eq!(r.primal_residuals.len(), r.iterations_run);
    }

    #[test]
    fn admm_smooths_a_noisy_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let noisy = Tensor::full([1, 1, 16, 16], 0.5).add(&random(16, 16, &mut rng).scale(0.1)).unwrap();
        let p = InverseProblem::new(noisy.clone(), PointSpreadFunction::delta(16, 16).unwrap()).unwrap().with_tv(0.05);
        let r = solve_admm_tv(&p, &SolverConfig::iters(100)).unwrap();
        let var = |t: &Tensor| {
            let m = t.mean();
            t.data().iter().map(|v| (v - m).powi(2)).sum::<f64>() / t.len() as f64
        };
        assert!(var(&r.estimate) <= var(&noisy));
    }

    #[test]
    fn admm_argument_checks() {
        let p = InverseProblem::new(Tensor::zeros([1, 1, 8, 8]), PointSpreadFunction::delta(8, 8).unwrap()).unwrap();
        assert!(solve_admm_tv(&p.clone().with_tv(0.1), &SolverConfig { rho: 0.0, ..SolverConfig::iters(3) }).is_err());
        assert!(solve_admm_tv(&p, &SolverConfig::iters(3)).is_err());
    }

    #[test]
    fn extent_mismatch_is_sizing_error() {
        let p = InverseProblem::new(Tensor::zeros([1, 1, 8, 8]), PointSpreadFunction::delta(8, 8).unwrap()).unwrap();
        assert!(matches!(data_objective(&Tensor::zeros([1, 1, 4, 4]), &p), Err(Error::Sizing(_))));
        assert!(matches!(
            InverseProblem::new(Tensor::zeros([1, 1, 4, 4]), PointSpreadFunction::delta(8, 8).unwrap()),
            Err(Error::Sizing(_))
        ));
    }
}
