use serde::{Deserialize, Serialize};

use crate::dynamics::{Model, ModelParams};
use crate::objectives::{evaluate, Objective, ObjectiveError, TaskSpec};
use crate::tuner::{AdamConfig, AdamState};

use super::{ControllerError, Policy, PolicyParams};

/// Budget and stopping rule for nominal MLP synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSettings {
    pub epochs: usize,
    pub lr: f64,
    /// Stop as soon as `J^task(θ, β̃)` over the full horizon drops to this value.
    pub threshold: f64,
    pub seed: u64,
    /// First training horizon; doubled every `stage_epochs` until it reaches
    /// the task horizon. Long unstable rollouts from a random init otherwise
    /// settle into the hanging-pole minimum.
    pub initial_horizon: usize,
    pub stage_epochs: usize,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        Self { epochs: 1500, lr: 1e-2, threshold: 0.5, seed: 0, initial_horizon: 50, stage_epochs: 300 }
    }
}

impl SynthesisSettings {
    /// Training horizon used at `epoch` for a task of length `horizon`.
    pub fn horizon_at(&self, epoch: usize, horizon: usize) -> usize {
        let stage = if self.stage_epochs == 0 { usize::MAX } else { epoch / self.stage_epochs };
        let start = self.initial_horizon.clamp(1, horizon);
        let mut h = start;
        for _ in 0..stage {
            if h >= horizon {
                break;
            }
            h = (h * 2).min(horizon);
        }
        h
    }
}

/// Trains an MLP controller on the nominal model by Adam descent on the task
/// loss, starting from the seeded uniform initialization.
///
/// Returns the best full-horizon iterate once it reaches `threshold`. An
/// iterate whose rollout blows up is discarded and the step size halved.
pub fn synthesize_mlp_nominal(
    model: &Model,
    beta: &ModelParams,
    task: &TaskSpec,
    arch: &[usize],
    u_max: f64,
    settings: &SynthesisSettings,
) -> Result<PolicyParams, ControllerError> {
    let policy = Policy::mlp(arch.to_vec(), u_max)?;
    let mut theta = policy.init_params(settings.seed);
    let mut last_good = theta.clone();
    let mut adam = AdamState::new(theta.len(), AdamConfig::default());
    let mut lr = settings.lr;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut horizon = settings.horizon_at(0, task.horizon);

    for epoch in 0..=settings.epochs {
        let stage_horizon = settings.horizon_at(epoch, task.horizon);
        if stage_horizon != horizon {
            // the longer rollout has a different gradient scale; stale moments overshoot
            horizon = stage_horizon;
            adam = AdamState::new(theta.len(), AdamConfig::default());
        }
        let stage_task = TaskSpec { horizon, ..task.clone() };
        let eval = match evaluate(model, &policy, beta.values(), &theta, &stage_task, &task.x0, Objective::Task) {
            Ok(e) if e.grad_theta.iter().all(|g| g.is_finite()) => e,
            Ok(_) | Err(ObjectiveError::Dynamics(_)) | Err(ObjectiveError::Autodiff(_)) => {
                theta.clone_from(&last_good);
                adam = AdamState::new(theta.len(), AdamConfig::default());
                lr *= 0.5;
                continue;
            }
            Err(e) => return Err(ControllerError::Evaluation(Box::new(e))),
        };
        last_good.clone_from(&theta);
        if horizon == task.horizon {
            if best.as_ref().map_or(true, |(_, j)| eval.value < *j) {
                best = Some((theta.clone(), eval.value));
            }
            if eval.value <= settings.threshold {
                break;
            }
        }
        adam.update(&mut theta, &eval.grad_theta, lr).expect("finite gradient of matching length");
    }
    let Some((theta, loss)) = best else {
        return Err(ControllerError::SynthesisFailed { final_loss: f64::INFINITY, threshold: settings.threshold });
    };
    if loss > settings.threshold {
        return Err(ControllerError::SynthesisFailed { final_loss: loss, threshold: settings.threshold });
    }
    Ok(PolicyParams { layout: policy, theta })
}
