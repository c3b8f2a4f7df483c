//! Declarative scenario files.

use std::path::Path as FsPath;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::families::{DiffusionFamily, DriftFamily};
use crate::control_opt::{AdmissibleSet, ControlSignal, OptimizeParams, RunningCost};
use crate::dynamics::{ImpulseEvent, ProblemSpec};
use crate::qwiener::NoiseSpec;
use crate::spectral::{dirichlet_advection_diffusion_spectrum, SemigroupSpec, SpectralState};
use crate::wellposedness::LipschitzBundle;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at `{key}` (line {line}, column {column}): {message}")]
    Parse {
        key: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Build(#[from] crate::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumConfig {
    /// `μ_k = −(k²π² + 1/4)`, `k = 1..=dim`.
    DirichletAdvectionDiffusion {
        dim: usize,
    },
    Explicit {
        mu: Vec<f64>,
    },
}

impl SpectrumConfig {
    pub fn exponents(&self) -> Vec<f64> {
        match self {
            SpectrumConfig::DirichletAdvectionDiffusion { dim } => dirichlet_advection_diffusion_spectrum(*dim),
            SpectrumConfig::Explicit { mu } => mu.clone(),
        }
    }
}

/// A matrix whose shape is fixed by where it is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixConfig {
    /// Ones on the main diagonal, also for rectangular shapes.
    Identity,
    Zero,
    Scaled {
        value: f64,
    },
    Diagonal {
        values: Vec<f64>,
    },
    Dense {
        rows: Vec<Vec<f64>>,
    },
}

impl MatrixConfig {
    pub fn build(&self, rows: usize, cols: usize) -> Result<DMatrix<f64>, String> {
        match self {
            MatrixConfig::Identity => Ok(DMatrix::identity(rows, cols)),
            MatrixConfig::Zero => Ok(DMatrix::zeros(rows, cols)),
            MatrixConfig::Scaled { value } => Ok(DMatrix::identity(rows, cols) * *value),
            MatrixConfig::Diagonal { values } => {
                if values.len() != rows.min(cols) {
                    return Err(format!(
                        "diagonal needs {} entries, got {}",
                        rows.min(cols),
                        values.len()
                    ));
                }
                let mut m = DMatrix::zeros(rows, cols);
                values.iter().enumerate().for_each(|(i, v)| m[(i, i)] = *v);
                Ok(m)
            }
            MatrixConfig::Dense { rows: data } => {
                if data.len() != rows || data.iter().any(|r| r.len() != cols) {
                    return Err(format!("dense matrix must be {rows}x{cols}"));
                }
                Ok(DMatrix::from_fn(rows, cols, |i, j| data[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorConfig {
    Zeros,
    Dense {
        values: Vec<f64>,
    },
    /// `value` on coordinate `index`, zero elsewhere.
    Unit {
        index: usize,
        value: f64,
    },
}

impl VectorConfig {
    pub fn build(&self, len: usize) -> Result<Vec<f64>, String> {
        match self {
            VectorConfig::Zeros => Ok(vec![0.0; len]),
            VectorConfig::Dense { values } => {
                if values.len() != len {
                    return Err(format!("vector needs {len} entries, got {}", values.len()));
                }
                Ok(values.clone())
            }
            VectorConfig::Unit { index, value } => {
                if *index >= len {
                    return Err(format!("unit index {index} out of range for length {len}"));
                }
                let mut v = vec![0.0; len];
                v[*index] = *value;
                Ok(v)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    /// `λ_j = amplitude · (j + 1)^(−exponent)`.
    PowerLaw {
        modes: usize,
        amplitude: f64,
        exponent: f64,
    },
    Explicit {
        lambda: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpulseConfig {
    pub time: f64,
    pub jump: MatrixConfig,
    pub input_map: MatrixConfig,
    /// Length of `v_k`; defaults to the control dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_dim: Option<usize>,
    pub input: VectorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub state_weight: f64,
    pub control_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub paths: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 20,
            paths: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub budget: usize,
    pub paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            budget: 2000,
            paths: 200,
            a0: None,
            c0: None,
            stability: None,
        }
    }
}

fn default_intervals() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub spectrum: SpectrumConfig,
    /// Bound on `‖T(t)‖`; the tight value on `[0, horizon]` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_m: Option<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub initial: VectorConfig,
    pub control_dim: usize,
    pub control_operator: MatrixConfig,
    #[serde(default)]
    pub impulses: Vec<ImpulseConfig>,
    pub drift: DriftFamily,
    pub diffusion: DiffusionFamily,
    pub noise: NoiseConfig,
    pub lipschitz: LipschitzBundle,
    pub cost: CostConfig,
    pub admissible: AdmissibleSet,
    #[serde(default = "default_intervals")]
    pub control_intervals: usize,
    #[serde(default)]
    pub seed: u64,
    pub paths: usize,
    #[serde(default)]
    pub picard: PicardConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

/// Everything a subcommand needs, built from a validated config.
pub struct Scenario {
    pub spec: ProblemSpec,
    pub lipschitz: LipschitzBundle,
    pub cost: RunningCost,
    pub admissible: AdmissibleSet,
    pub zero_control: ControlSignal,
    pub grid: Vec<f64>,
}

impl ScenarioConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let inner = e.into_inner();
            ConfigError::Parse {
                key,
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serialises");
        s.push('\n');
        s
    }

    fn noise_spec(&self) -> Result<NoiseSpec, String> {
        match &self.noise {
            NoiseConfig::PowerLaw {
                modes,
                amplitude,
                exponent,
            } => NoiseSpec::power_law(*modes, *amplitude, *exponent),
            NoiseConfig::Explicit { lambda } => NoiseSpec::new(lambda.clone()),
        }
        .map_err(|e| e.to_string())
    }

    /// Collects every violation rather than stopping at the first one.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs: Vec<String> = Vec::new();
        let mu = self.spectrum.exponents();
        let d = mu.len();
        if d == 0 {
            errs.push("spectrum: at least one mode required".into());
        }
        if mu.iter().any(|m| !m.is_finite()) {
            errs.push("spectrum: exponents must be finite".into());
        }
        let horizon_ok = self.horizon > 0.0 && self.horizon.is_finite();
        if !horizon_ok {
            errs.push(format!("horizon: must be positive, got {}", self.horizon));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            errs.push(format!("dt: must be positive, got {}", self.dt));
        } else if horizon_ok && self.dt > self.horizon {
            errs.push("dt: must not exceed the horizon".into());
        }
        if let Some(m) = self.bound_m {
            if !(m > 0.0 && m.is_finite()) {
                errs.push(format!("bound_m: must be positive, got {m}"));
            } else if d > 0 && horizon_ok {
                let top = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let need = if top > 0.0 { (top * self.horizon).exp() } else { 1.0 };
                if m < need * (1.0 - 1e-12) {
                    errs.push(format!("bound_m: {m} is below sup ‖T(t)‖ = {need}"));
                }
            }
        }
        if self.control_dim == 0 {
            errs.push("control_dim: must be at least 1".into());
        }
        if let Err(e) = self.initial.build(d) {
            errs.push(format!("initial: {e}"));
        }
        if let Err(e) = self.control_operator.build(d, self.control_dim) {
            errs.push(format!("control_operator: {e}"));
        }
        let mut prev = 0.0;
        for (k, imp) in self.impulses.iter().enumerate() {
            if horizon_ok && !(imp.time > 0.0 && imp.time < self.horizon) {
                errs.push(format!(
                    "impulses[{k}].time: impulse time outside (0,T) ({} with T = {})",
                    imp.time, self.horizon
                ));
            }
            if k > 0 && !(imp.time > prev) {
                errs.push(format!("impulses[{k}].time: impulse times must be strictly increasing"));
            }
            prev = imp.time;
            let m = imp.input_dim.unwrap_or(self.control_dim);
            if let Err(e) = imp.jump.build(d, d) {
                errs.push(format!("impulses[{k}].jump: {e}"));
            }
            if let Err(e) = imp.input_map.build(d, m) {
                errs.push(format!("impulses[{k}].input_map: {e}"));
            }
            if let Err(e) = imp.input.build(m) {
                errs.push(format!("impulses[{k}].input: {e}"));
            }
        }
        let modes = match self.noise_spec() {
            Ok(ns) => Some(ns.modes()),
            Err(e) => {
                errs.push(format!("noise: {e}"));
                None
            }
        };
        if let Err(e) = self.drift.check(d) {
            errs.push(format!("drift: {e}"));
        }
        if let Some(j) = modes {
            if let Err(e) = self.diffusion.check(d, j) {
                errs.push(format!("diffusion: {e}"));
            }
        }
        if let Err(e) = self.lipschitz.validate() {
            errs.push(format!("lipschitz: {e}"));
        }
        if !(self.cost.state_weight >= 0.0 && self.cost.state_weight.is_finite()) {
            errs.push("cost.state_weight: must be finite and >= 0".into());
        }
        if !(self.cost.control_weight > 0.0 && self.cost.control_weight.is_finite()) {
            errs.push("cost.control_weight: must be finite and > 0".into());
        }
        if let Err(e) = self.admissible.validate() {
            errs.push(format!("admissible: {e}"));
        } else if self.admissible.dim() != self.control_dim {
            errs.push(format!(
                "admissible: dimension {} differs from control_dim {}",
                self.admissible.dim(),
                self.control_dim
            ));
        }
        if self.control_intervals == 0 {
            errs.push("control_intervals: must be at least 1".into());
        }
        if self.paths < 2 {
            errs.push("paths: must be at least 2".into());
        }
        if !(self.picard.tol > 0.0) || self.picard.max_iter == 0 || self.picard.paths == 0 {
            errs.push("picard: need tol > 0, max_iter >= 1 and paths >= 1".into());
        }
        if self.optimizer.budget == 0 || self.optimizer.paths < 2 {
            errs.push("optimizer: need budget >= 1 and paths >= 2".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    pub fn build(&self) -> Result<Scenario, ConfigError> {
        self.validate()?;
        let invalid = |e: String| ConfigError::Invalid(vec![e]);
        let mu = self.spectrum.exponents();
        let d = mu.len();
        let semigroup = match self.bound_m {
            Some(m) => SemigroupSpec::new(mu, m)?,
            None => SemigroupSpec::for_horizon(mu, self.horizon)?,
        };
        let noise = self.noise_spec().map_err(invalid)?;
        let modes = noise.modes();
        let initial = SpectralState::new(self.initial.build(d).map_err(invalid)?)?;
        let impulses = self
            .impulses
            .iter()
            .map(|imp| {
                let m = imp.input_dim.unwrap_or(self.control_dim);
                Ok(ImpulseEvent::new(
                    imp.time,
                    imp.jump.build(d, d).map_err(invalid)?,
                    imp.input_map.build(d, m).map_err(invalid)?,
                    DVector::from_vec(imp.input.build(m).map_err(invalid)?),
                )?)
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        let spec = ProblemSpec::new(semigroup, noise, self.horizon, initial)
            .with_control_operator(self.control_operator.build(d, self.control_dim).map_err(invalid)?)
            .with_impulses(impulses)
            .with_drift(self.drift.build(d))
            .with_diffusion(self.diffusion.build(d, modes));
        spec.validate()?;
        let zero_control = ControlSignal::zero(self.horizon, self.control_intervals, self.control_dim)?;
        let grid = spec.grid(self.dt, Some(&zero_control))?;
        Ok(Scenario {
            lipschitz: self.lipschitz,
            cost: RunningCost::quadratic(self.cost.state_weight, self.cost.control_weight)?,
            admissible: self.admissible.clone(),
            zero_control,
            grid,
            spec,
        })
    }

    pub fn optimize_params(&self) -> OptimizeParams {
        OptimizeParams {
            budget: self.optimizer.budget,
            n_paths: self.optimizer.paths,
            seed: self.seed,
            a0: self.optimizer.a0,
            c0: self.optimizer.c0,
            stability: self.optimizer.stability,
            ..OptimizeParams::default()
        }
    }
}

/// Reads and validates a scenario file.
pub fn load_config(path: &FsPath) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioConfig::from_json_str(&text)
}
