//! Iterative co-tuning of simulator parameters β and controller parameters θ.
//!
//! The outer loop ([`cotune`]) spends exactly one deployment rollout per
//! iteration plus one final scoring rollout, and keeps the best controller
//! seen on the deployment system. Between rollouts an update strategy runs
//! Adam on model rollouts:
//!
//! * [`Strategy::Combined`] descends `w_task·J^task + w_sysid·J^sysId` jointly
//!   in (θ, log β).
//! * [`Strategy::SplitAlternate`] first fits log β to the latest deployment
//!   rollout with θ frozen, then tunes θ on the refitted model, each for at
//!   most K/2 epochs.
//! * [`Strategy::DifftuneModel`], [`Strategy::DifftuneSystem`] and
//!   [`Strategy::SysidThenTune`] are the θ-only and batch-identification
//!   baselines.
//!
//! β is always optimized in log coordinates, so tuned entries stay positive.

mod adam;
mod strategies;
mod termination;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use strategies::{
    cotune, descend, difftune_model_rollout, difftune_system_rollout, sensitivity_gradient, sysid_then_tune,
    update_combined, update_split_alternate, PhaseOutcome, UpdateOutcome,
};
pub use termination::{terminate, Verdict, TERMINATION_TOL};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::Policy;
use crate::dynamics::{DynamicsError, Model, Trajectory, TunableMask};
use crate::objectives::{ObjectiveError, TaskSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TunerError {
    #[error("parameter vector has length {got}, expected {expected}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite gradient entries at indices {0:?}")]
    NonFiniteGradient(Vec<usize>),
    #[error("invalid tuning config: {0}")]
    Config(String),
    #[error("nominal controller does not produce a finite model rollout: {0}")]
    NominalUnstable(DynamicsError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Combined,
    SplitAlternate,
    DifftuneModel,
    DifftuneSystem,
    SysidThenTune,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Combined,
        Strategy::SplitAlternate,
        Strategy::DifftuneModel,
        Strategy::DifftuneSystem,
        Strategy::SysidThenTune,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Combined => "combined",
            Strategy::SplitAlternate => "split_alternate",
            Strategy::DifftuneModel => "difftune_model",
            Strategy::DifftuneSystem => "difftune_system",
            Strategy::SysidThenTune => "sysid_then_tune",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = TunerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| TunerError::Config(format!("unknown strategy `{s}`")))
    }
}

pub const DEFAULT_LR_THETA: f64 = 1e-2;
pub const DEFAULT_LR_THETA_MLP: f64 = 1e-3;
pub const DEFAULT_LR_BETA: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    /// L: deployment rollouts used for tuning (one more is spent on scoring).
    pub outer_iterations: usize,
    /// K: inner epoch budget per outer iteration.
    pub epochs: usize,
    pub lr_theta: f64,
    /// Step size in log-β coordinates.
    pub lr_beta: f64,
    pub w_task: f64,
    pub w_sysid: f64,
    pub strategy: Strategy,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Initial-condition spread of the batch identification baseline, as a
    /// fraction of the per-dimension state scale.
    pub ic_perturbation: f64,
    /// Per-dimension state scale; empty means all ones.
    pub state_scale: Vec<f64>,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            outer_iterations: 5,
            epochs: 100,
            lr_theta: DEFAULT_LR_THETA,
            lr_beta: DEFAULT_LR_BETA,
            w_task: 1.0,
            w_sysid: 1.0,
            strategy: Strategy::SplitAlternate,
            seed: 0,
            adam: AdamConfig::default(),
            ic_perturbation: 0.1,
            state_scale: Vec::new(),
        }
    }
}

impl TuningConfig {
    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn validate(&self) -> Result<(), TunerError> {
        let mut problems = Vec::new();
        if self.epochs == 0 {
            problems.push("epochs must be >= 1".to_string());
        }
        if !(self.lr_theta > 0.0 && self.lr_theta.is_finite()) {
            problems.push(format!("lr_theta must be > 0, got {}", self.lr_theta));
        }
        if !(self.lr_beta > 0.0 && self.lr_beta.is_finite()) {
            problems.push(format!("lr_beta must be > 0, got {}", self.lr_beta));
        }
        if self.w_task < 0.0 || self.w_sysid < 0.0 || (self.w_task == 0.0 && self.w_sysid == 0.0) {
            problems.push(format!("weights must be >= 0 and not both zero, got ({}, {})", self.w_task, self.w_sysid));
        }
        if !(self.ic_perturbation >= 0.0 && self.ic_perturbation.is_finite()) {
            problems.push(format!("ic_perturbation must be >= 0, got {}", self.ic_perturbation));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(TunerError::Config(problems.join("; ")))
        }
    }
}

/// Everything about the tuning domain except the parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningProblem {
    pub model: Model,
    pub policy: Policy,
    pub task: TaskSpec,
    pub mask: TunableMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    Diverged,
    MaxEpochs,
    /// A model rollout blew up; the previous iterate was kept.
    BlowUp,
    /// Nothing to optimize (empty mask, no comparable steps).
    Skipped,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::Diverged => "diverged",
            StopReason::MaxEpochs => "max_epochs",
            StopReason::BlowUp => "blow_up",
            StopReason::Skipped => "skipped",
        }
    }
}

/// Loss trace of one inner optimization phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub name: String,
    /// Objective at each evaluated iterate, starting from the phase input.
    pub losses: Vec<f64>,
    /// Gradient updates applied.
    pub updates: usize,
    pub stop: StopReason,
    /// Objective at the returned parameters.
    pub final_loss: Option<f64>,
}

impl PhaseTrace {
    pub fn summary(&self) -> String {
        format!("{}:{}@{}", self.name, self.stop.as_str(), self.updates)
    }
}

/// One deployment rollout and the update that followed it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `J^task(θ_l, sys)`.
    pub j_task_sys: f64,
    /// `J^sysId` of the updated model against this iteration's rollout.
    pub j_sysid_post: Option<f64>,
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
    pub phases: Vec<PhaseTrace>,
    pub system_failed_at: Option<usize>,
    /// Deployment rollout scored for this iteration.
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

impl IterationRecord {
    pub fn termination(&self) -> String {
        self.phases.iter().map(PhaseTrace::summary).collect::<Vec<_>>().join("|")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub strategy: Strategy,
    pub config: TuningConfig,
    pub iterations: Vec<IterationRecord>,
    pub best_index: usize,
    pub theta_best: Vec<f64>,
    pub j_best: f64,
    pub system_rollouts: usize,
}

impl TuningReport {
    pub fn j_nominal(&self) -> f64 {
        self.iterations[0].j_task_sys
    }

    pub fn total_updates(&self) -> usize {
        self.iterations.iter().flat_map(|it| &it.phases).map(|p| p.updates).sum()
    }
}
