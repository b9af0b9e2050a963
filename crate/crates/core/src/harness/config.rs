use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controllers::{param_count, Policy, SynthesisSettings, DEFAULT_U_MAX};
use crate::dynamics::{Integrator, Model, ModelKind, ModelParams, TunableMask, MAX_DT};
use crate::objectives::{Reference, TaskKind, TaskSpec};
use crate::tuner::{Strategy, TuningConfig, TuningProblem, DEFAULT_LR_THETA_MLP};

use super::HarnessError;

/// Declarative description of one experiment: a deployment system, the
/// nominal model, a controller, a task, tuning settings and the run grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Experiment id written to every result row.
    pub id: String,
    pub system: SystemConfig,
    #[serde(default)]
    pub model: ModelConfig,
    pub controller: ControllerConfig,
    pub task: TaskConfig,
    #[serde(default)]
    pub tuning: TuningConfig,
    #[serde(default)]
    pub run: RunConfig,
}

/// Deployment system: the nominal parameters scaled entry-wise by `factors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: ModelKind,
    /// Multiplicative factor per named β entry; missing entries stay nominal.
    #[serde(default)]
    pub factors: BTreeMap<String, f64>,
    /// Observation noise std per state dimension; empty means noiseless.
    #[serde(default)]
    pub noise_std: Vec<f64>,
    #[serde(default = "default_system_integrator")]
    pub integrator: Integrator,
    /// Base seed; run seed `s` uses `seed + s`.
    #[serde(default)]
    pub seed: u64,
}

fn default_system_integrator() -> Integrator {
    Integrator::Rk4
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Overrides of the kind's default β̃ by name.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Tunable β entries; `None` means the masses.
    #[serde(default)]
    pub tunable: Option<Vec<String>>,
    #[serde(default)]
    pub integrator: Integrator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerConfig {
    /// Infinite-horizon LQR on the model linearized at the origin.
    Lqr {
        /// Diagonal of Q.
        q: Vec<f64>,
        /// Diagonal of R.
        r: Vec<f64>,
    },
    /// Tanh network trained on the nominal model.
    Mlp {
        /// Hidden layer widths; input and output sizes come from the model.
        hidden: Vec<usize>,
        #[serde(default = "default_u_max")]
        u_max: f64,
        #[serde(default)]
        synthesis: SynthesisSettings,
    },
    /// Fixed PD gains `[k_p, k_d, ..]` on the given state indices.
    Pd { position: Vec<usize>, velocity: Vec<usize>, gains: Vec<f64> },
    /// Fixed linear gains `u = −Kx`, K row-major.
    Linear { gains: Vec<f64> },
}

fn default_u_max() -> f64 {
    DEFAULT_U_MAX
}

impl ControllerConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerConfig::Lqr { .. } => "lqr",
            ControllerConfig::Mlp { .. } => "mlp",
            ControllerConfig::Pd { .. } => "pd",
            ControllerConfig::Linear { .. } => "linear",
        }
    }

    /// Policy layout for a model kind.
    pub fn policy(&self, kind: ModelKind) -> Result<Policy, HarnessError> {
        let (n, m) = (kind.state_dim(), kind.control_dim());
        Ok(match self {
            ControllerConfig::Lqr { .. } | ControllerConfig::Linear { .. } => Policy::linear(n, m),
            ControllerConfig::Mlp { hidden, u_max, .. } => Policy::mlp(mlp_arch(kind, hidden), *u_max)?,
            ControllerConfig::Pd { position, velocity, .. } => Policy::pd(position.clone(), velocity.clone()),
        })
    }
}

/// Full layer list of an MLP for `kind`.
pub fn mlp_arch(kind: ModelKind, hidden: &[usize]) -> Vec<usize> {
    let mut arch = vec![kind.state_dim()];
    arch.extend_from_slice(hidden);
    arch.push(kind.control_dim());
    arch
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    #[serde(default = "default_task_kind")]
    pub kind: TaskKind,
    pub x0: Vec<f64>,
    /// T, the number of steps.
    pub horizon: usize,
    pub dt: f64,
    /// Target state; defaults to the origin.
    #[serde(default)]
    pub reference: Option<Reference>,
    #[serde(default)]
    pub state_weights: Vec<f64>,
}

fn default_task_kind() -> TaskKind {
    TaskKind::Stabilize
}

impl TaskConfig {
    pub fn spec(&self) -> TaskSpec {
        let reference = self.reference.clone().unwrap_or_else(|| Reference::Constant(vec![0.0; self.x0.len()]));
        TaskSpec {
            kind: self.kind,
            x0: self.x0.clone(),
            horizon: self.horizon,
            dt: self.dt,
            reference,
            state_weights: self.state_weights.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Output directory, relative to the working directory.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Write per-iteration trajectory dumps.
    #[serde(default = "default_true")]
    pub dump_trajectories: bool,
    /// Record wall-clock time; off keeps the CSV byte-identical across reruns.
    #[serde(default)]
    pub timing: bool,
}

fn default_strategies() -> Vec<Strategy> {
    vec![Strategy::SplitAlternate]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_true() -> bool {
    true
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { strategies: default_strategies(), seeds: default_seeds(), out: None, dump_trajectories: true, timing: false }
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    ExperimentConfig::from_toml(&text)
}

fn parse_error(text: &str, err: &toml::de::Error) -> HarnessError {
    let line = err.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
    HarnessError::Parse { line, message: err.message().to_string() }
}

impl ExperimentConfig {
    /// Parses, fills defaults and validates.
    ///
    /// The θ step size defaults to the MLP rate when the controller is an
    /// MLP and `tuning.lr_theta` is not given.
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
        if matches!(cfg.controller, ControllerConfig::Mlp { .. }) {
            let table: toml::Table = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
            let given = table.get("tuning").and_then(|t| t.get("lr_theta")).is_some();
            if !given {
                cfg.tuning.lr_theta = DEFAULT_LR_THETA_MLP;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn kind(&self) -> ModelKind {
        self.system.kind
    }

    /// Nominal β̃.
    pub fn nominal_params(&self) -> Result<ModelParams, HarnessError> {
        let mut params = ModelParams::defaults(self.kind());
        for (name, value) in &self.model.params {
            params = params.with(name, *value)?;
        }
        Ok(params)
    }

    /// Hidden β of the deployment system.
    pub fn true_params(&self) -> Result<ModelParams, HarnessError> {
        let factors: Vec<(&str, f64)> = self.system.factors.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        Ok(self.nominal_params()?.perturbed(&factors)?)
    }

    pub fn mask(&self) -> Result<TunableMask, HarnessError> {
        let kind = self.kind();
        Ok(match &self.model.tunable {
            Some(names) => TunableMask::from_names(kind, names)?,
            None => TunableMask::masses(kind),
        })
    }

    pub fn model(&self) -> Result<Model, HarnessError> {
        Ok(Model::new(self.kind(), self.model.integrator, self.task.dt)?)
    }

    pub fn problem(&self) -> Result<TuningProblem, HarnessError> {
        Ok(TuningProblem {
            model: self.model()?,
            policy: self.controller.policy(self.kind())?,
            task: self.task.spec(),
            mask: self.mask()?,
        })
    }

    /// Tuning settings for one run seed.
    pub fn tuning_for(&self, strategy: Strategy, seed: u64) -> TuningConfig {
        TuningConfig { strategy, seed, ..self.tuning.clone() }
    }

    /// Every semantic violation, each prefixed with its field path.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let kind = self.kind();
        let n = kind.state_dim();
        let names = kind.param_names();
        let known = |name: &str| names.contains(&name);

        if self.id.trim().is_empty() {
            out.push("id: must not be empty".to_string());
        }
        if self.id.contains([',', '"', '\n']) {
            out.push("id: must not contain commas, quotes or newlines".to_string());
        }

        for (name, f) in &self.system.factors {
            if !known(name) {
                out.push(format!("system.factors.{name}: unknown {kind} parameter (expected one of {})", names.join(", ")));
            } else if !(f.is_finite() && *f > 0.0) {
                out.push(format!("system.factors.{name}: factor must be > 0, got {f}"));
            }
        }
        if !self.system.noise_std.is_empty() && self.system.noise_std.len() != n {
            out.push(format!("system.noise_std: expected {n} entries or none, got {}", self.system.noise_std.len()));
        }
        for (i, s) in self.system.noise_std.iter().enumerate() {
            if !(s.is_finite() && *s >= 0.0) {
                out.push(format!("system.noise_std[{i}]: must be >= 0, got {s}"));
            }
        }

        let mut nominal_ok = true;
        for (name, v) in &self.model.params {
            if !known(name) {
                out.push(format!("model.params.{name}: unknown {kind} parameter"));
                nominal_ok = false;
            } else if let Err(e) = ModelParams::defaults(kind).with(name, *v) {
                out.push(format!("model.params.{name}: {e}"));
                nominal_ok = false;
            }
        }
        if let Some(tunable) = &self.model.tunable {
            for name in tunable {
                if !known(name) {
                    out.push(format!("model.tunable: unknown {kind} parameter `{name}`"));
                }
            }
        }
        if nominal_ok {
            if let (Ok(params), Ok(mask)) = (self.nominal_params(), self.mask()) {
                for i in mask.indices() {
                    if params.values()[i] <= 0.0 {
                        out.push(format!("model.tunable: `{}` is tunable but its nominal value is 0", names[i]));
                    }
                }
            }
        }

        match &self.controller {
            ControllerConfig::Lqr { q, r } => {
                if q.len() != n {
                    out.push(format!("controller.q: expected {n} diagonal entries, got {}", q.len()));
                }
                if q.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    out.push("controller.q: entries must be >= 0".to_string());
                }
                if r.len() != kind.control_dim() {
                    out.push(format!("controller.r: expected {} diagonal entries, got {}", kind.control_dim(), r.len()));
                }
                if r.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    out.push("controller.r: entries must be > 0".to_string());
                }
            }
            ControllerConfig::Mlp { hidden, u_max, synthesis } => {
                if let Err(e) = param_count(&mlp_arch(kind, hidden)) {
                    out.push(format!("controller.hidden: {e}"));
                }
                if !(u_max.is_finite() && *u_max > 0.0) {
                    out.push(format!("controller.u_max: must be > 0, got {u_max}"));
                }
                if synthesis.epochs == 0 {
                    out.push("controller.synthesis.epochs: must be >= 1".to_string());
                }
                if !(synthesis.lr.is_finite() && synthesis.lr > 0.0) {
                    out.push(format!("controller.synthesis.lr: must be > 0, got {}", synthesis.lr));
                }
            }
            ControllerConfig::Pd { position, velocity, gains } => {
                if position.len() != velocity.len() {
                    out.push("controller.velocity: must have as many entries as controller.position".to_string());
                }
                if position.len() != kind.control_dim() {
                    out.push(format!("controller.position: expected {} entries, got {}", kind.control_dim(), position.len()));
                }
                if position.iter().chain(velocity).any(|&i| i >= n) {
                    out.push(format!("controller.position: state indices must be < {n}"));
                }
                if gains.len() != 2 * position.len() {
                    out.push(format!("controller.gains: expected {} entries, got {}", 2 * position.len(), gains.len()));
                }
                if gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
                    out.push("controller.gains: must be >= 0".to_string());
                }
            }
            ControllerConfig::Linear { gains } => {
                if gains.len() != n * kind.control_dim() {
                    out.push(format!("controller.gains: expected {} entries, got {}", n * kind.control_dim(), gains.len()));
                }
                if gains.iter().any(|g| !g.is_finite()) {
                    out.push("controller.gains: must be finite".to_string());
                }
            }
        }

        let task = &self.task;
        if task.x0.len() != n {
            out.push(format!("task.x0: expected {n} entries for {kind}, got {}", task.x0.len()));
        }
        if task.horizon == 0 {
            out.push("task.horizon: must be >= 1".to_string());
        }
        if !(task.dt > 0.0 && task.dt <= MAX_DT) {
            out.push(format!("task.dt: must lie in (0, {MAX_DT}], got {}", task.dt));
        }
        if task.x0.len() == n && task.horizon > 0 {
            if let Err(e) = task.spec().validate() {
                out.push(format!("task: {e}"));
            }
        }

        if let Err(crate::tuner::TunerError::Config(msg)) = self.tuning.validate() {
            out.extend(msg.split("; ").map(|m| format!("tuning.{m}")));
        }

        if self.run.strategies.is_empty() {
            out.push("run.strategies: must not be empty".to_string());
        }
        if self.run.seeds.is_empty() {
            out.push("run.seeds: must not be empty".to_string());
        }
        let mut seen = self.run.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.run.seeds.len() {
            out.push("run.seeds: duplicate seeds".to_string());
        }
        let mut strategies = self.run.strategies.clone();
        strategies.sort_unstable();
        strategies.dedup();
        if strategies.len() != self.run.strategies.len() {
            out.push("run.strategies: duplicate strategies".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Validation(v))
        }
    }
}
