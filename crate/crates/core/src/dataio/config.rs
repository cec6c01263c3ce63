//! Experiment configuration: one JSON document with `data`, `model`,
//! `train`, `solver` and `eval` sections. Every field has a default and
//! unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{byte_offset, DatasetManifest};
use crate::error::{Error, Result};
use crate::lensnet::{NetworkConfig, TrainConfig};
use crate::optics::PointSpreadFunction;
use crate::solvers::{
    solve_admm_tv, solve_apgd, solve_fista, solve_gd, solve_nesterov, InverseProblem, SolverConfig, SolverResult,
    StepSize,
};
use crate::tensor::Tensor;
use crate::wiener::{wiener_restore, WienerConfig};

/// Classical reconstruction methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Wiener,
    Gd,
    Nesterov,
    Fista,
    Apgd,
    AdmmTv,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Wiener, Method::Gd, Method::Nesterov, Method::Fista, Method::Apgd, Method::AdmmTv];

    pub fn name(self) -> &'static str {
        match self {
            Method::Wiener => "wiener",
            Method::Gd => "gd",
            Method::Nesterov => "nesterov",
            Method::Fista => "fista",
            Method::Apgd => "apgd",
            Method::AdmmTv => "admm_tv",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s || (s == "admm" && *m == Method::AdmmTv)).ok_or_else(|| {
            Error::argument(format!("unknown method '{s}' (wiener, gd, nesterov, fista, apgd, admm_tv)"))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub method: Method,
    pub wiener_delta: f64,
    pub max_iters: usize,
    pub step_size: StepSize,
    pub rho: f64,
    pub tol: f64,
    pub tv_weight: f64,
    pub l1_weight: f64,
    pub nonneg: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            method: Method::Wiener,
            wiener_delta: 1e-2,
            max_iters: 300,
            step_size: StepSize::Auto,
            rho: 0.05,
            tol: 0.0,
            tv_weight: 0.01,
            l1_weight: 0.0,
            nonneg: true,
        }
    }
}

impl SolverSection {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig { max_iters: self.max_iters, step_size: self.step_size, rho: self.rho, tol: self.tol, seed: 0 }
    }

    /// Reconstructs `measurement` with `method`. Smooth solvers ignore the
    /// regularizer weights they cannot handle; APGD always projects.
    pub fn reconstruct(&self, method: Method, measurement: &Tensor, psf: &PointSpreadFunction) -> Result<Tensor> {
        if method == Method::Wiener {
            return wiener_restore(measurement, psf, &WienerConfig::new(self.wiener_delta)?);
        }
        Ok(self.solve(method, measurement, psf)?.estimate)
    }

    /// Runs an iterative method, keeping its traces. Wiener is not iterative
    /// and is rejected.
    pub fn solve(&self, method: Method, measurement: &Tensor, psf: &PointSpreadFunction) -> Result<SolverResult> {
        let base = InverseProblem::new(measurement.clone(), psf.clone())?.with_nonneg(self.nonneg);
        let cfg = self.solver_config();
        match method {
            Method::Wiener => Err(Error::argument("wiener is a closed-form filter, not an iterative solver")),
            Method::Gd => solve_gd(&base, &cfg),
            Method::Nesterov => solve_nesterov(&base, &cfg),
            Method::Fista => solve_fista(&base.with_l1(self.l1_weight), &cfg),
            Method::Apgd => solve_apgd(&base.with_nonneg(true), &cfg),
            Method::AdmmTv => solve_admm_tv(&base.with_tv(self.tv_weight).with_l1(self.l1_weight), &cfg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub value_range: f64,
    pub perceptual_seed: u64,
    /// Clamp reconstructions to `[0, value_range]` before scoring.
    pub clamp: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { value_range: 1.0, perceptual_seed: crate::metrics::DEFAULT_PERCEPTUAL_SEED, clamp: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DatasetManifest,
    pub model: NetworkConfig,
    pub train: TrainConfig,
    pub solver: SolverSection,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, source_name: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            offset: byte_offset(text, e.line(), e.column()),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Cross-section consistency checks.
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.model.input_extents != self.data.extents {
            return Err(Error::config(format!(
                "model.input_extents {:?} differ from data.extents {:?}",
                self.model.input_extents, self.data.extents
            )));
        }
        if !(self.eval.value_range > 0.0) {
            return Err(Error::config("eval.value_range must be positive"));
        }
        WienerConfig::new(self.solver.wiener_delta).map_err(|e| Error::config(e.to_string()))?;
        Ok(())
    }
}
