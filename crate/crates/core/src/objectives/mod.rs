//! Task and closed-loop system-identification losses.
//!
//! All state errors use `c(x, x*) = Σᵢ wᵢ (xᵢ − x*ᵢ)²` with unit weights by
//! default, averaged over steps `t = 1..T` (the known `x_0` is excluded).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Scalar, Tape};
use crate::controllers::Policy;
use crate::dynamics::{DynamicsError, Model, Trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("no overlapping steps to compare")]
    EmptyComparison,
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("objective weights must be non-negative and not both zero (task {w_task}, sysid {w_sysid})")]
    Weights { w_task: f64, w_sysid: f64 },
    #[error("reference has {got} entries but the horizon needs {needed}")]
    ReferenceTooShort { needed: usize, got: usize },
    #[error("state dimension {got} does not match {expected}")]
    StateDim { expected: usize, got: usize },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Stabilize,
    Track,
}

/// Desired state `x*_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reference {
    Constant(Vec<f64>),
    /// Indexed by `t`; entry `t` is the target for `x_t`.
    Series(Vec<Vec<f64>>),
}

impl Reference {
    pub fn at(&self, t: usize) -> &[f64] {
        match self {
            Reference::Constant(x) => x,
            Reference::Series(xs) => &xs[t.min(xs.len() - 1)],
        }
    }
}

/// What the controller is asked to do and over which horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub x0: Vec<f64>,
    pub horizon: usize,
    pub dt: f64,
    pub reference: Reference,
    /// Per-dimension error weights; empty means all ones.
    #[serde(default)]
    pub state_weights: Vec<f64>,
}

impl TaskSpec {
    /// Regulate to the origin from `x0`.
    pub fn stabilize(x0: Vec<f64>, horizon: usize, dt: f64) -> Self {
        let n = x0.len();
        Self { kind: TaskKind::Stabilize, x0, horizon, dt, reference: Reference::Constant(vec![0.0; n]), state_weights: Vec::new() }
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let n = self.x0.len();
        if self.horizon == 0 {
            return Err(ObjectiveError::EmptyTrajectory);
        }
        let dims_ok = |r: &[f64]| r.len() == n;
        match &self.reference {
            Reference::Constant(r) if !dims_ok(r) => return Err(ObjectiveError::StateDim { expected: n, got: r.len() }),
            Reference::Series(rs) => {
                if rs.len() < self.horizon + 1 {
                    return Err(ObjectiveError::ReferenceTooShort { needed: self.horizon + 1, got: rs.len() });
                }
                if let Some(r) = rs.iter().find(|r| !dims_ok(r)) {
                    return Err(ObjectiveError::StateDim { expected: n, got: r.len() });
                }
            }
            _ => {}
        }
        if !self.state_weights.is_empty() && self.state_weights.len() != n {
            return Err(ObjectiveError::StateDim { expected: n, got: self.state_weights.len() });
        }
        Ok(())
    }
}

/// Weighted squared error between a state and a plain target.
pub fn state_cost<S: Scalar>(x: &[S], target: &[f64], weights: &[f64]) -> S {
    let mut acc = x[0].lift(0.0);
    for (i, (xi, ti)) in x.iter().zip(target).enumerate() {
        let w = weights.get(i).copied().unwrap_or(1.0);
        acc = acc + (*xi - *ti).square() * w;
    }
    acc
}

/// Mean task cost of `x_1..x_T` against the task reference.
pub fn task_loss<S: Scalar>(states: &[Vec<S>], task: &TaskSpec) -> Result<S, ObjectiveError> {
    if states.len() < 2 {
        return Err(ObjectiveError::EmptyTrajectory);
    }
    let steps = states.len() - 1;
    let mut acc = state_cost(&states[1], task.reference.at(1), &task.state_weights);
    for (t, x) in states.iter().enumerate().skip(2) {
        acc = acc + state_cost(x, task.reference.at(t), &task.state_weights);
    }
    Ok(acc / steps as f64)
}

/// Closed-loop identification loss `(1/T') Σ_{t=1..T'} ‖x_t − x^sys_t‖²`,
/// `T'` the shorter of the two horizons.
pub fn j_sysid<S: Scalar>(model_states: &[Vec<S>], sys_states: &[Vec<f64>], weights: &[f64]) -> Result<S, ObjectiveError> {
    let compared = model_states.len().min(sys_states.len()).saturating_sub(1);
    if compared == 0 {
        return Err(ObjectiveError::EmptyComparison);
    }
    let mut acc = state_cost(&model_states[1], &sys_states[1], weights);
    for t in 2..=compared {
        acc = acc + state_cost(&model_states[t], &sys_states[t], weights);
    }
    Ok(acc / compared as f64)
}

/// Task loss of a recorded system trajectory, scored over the full task
/// horizon. Steps missing after a failure are charged at the last recorded
/// error.
pub fn j_task_sys(sys_states: &[Vec<f64>], task: &TaskSpec) -> Result<f64, ObjectiveError> {
    if sys_states.is_empty() {
        return Err(ObjectiveError::EmptyTrajectory);
    }
    let horizon = task.horizon;
    let recorded = (sys_states.len() - 1).min(horizon);
    let cost = |t: usize| state_cost(&sys_states[t], task.reference.at(t), &task.state_weights);
    let mut total: f64 = (1..=recorded).map(cost).sum();
    if recorded < horizon {
        total += (horizon - recorded) as f64 * cost(recorded);
    }
    Ok(total / horizon as f64)
}

/// Plain-float `J^task(θ, β)` on the model.
pub fn j_task_model(model: &Model, policy: &Policy, beta: &[f64], theta: &[f64], task: &TaskSpec) -> Result<f64, ObjectiveError> {
    let traj = model.rollout(policy, theta, beta, &task.x0, task.horizon)?;
    task_loss(&traj.states, task)
}

fn check_weights(w_task: f64, w_sysid: f64) -> Result<(), ObjectiveError> {
    if w_task < 0.0 || w_sysid < 0.0 || (w_task == 0.0 && w_sysid == 0.0) || !w_task.is_finite() || !w_sysid.is_finite() {
        return Err(ObjectiveError::Weights { w_task, w_sysid });
    }
    Ok(())
}

/// `w_task·J^task + w_sysid·J^sysId` on one shared model trajectory.
pub fn combined_loss<S: Scalar>(
    states: &[Vec<S>],
    sys_states: &[Vec<f64>],
    task: &TaskSpec,
    w_task: f64,
    w_sysid: f64,
) -> Result<S, ObjectiveError> {
    check_weights(w_task, w_sysid)?;
    let task_term = task_loss(states, task)?;
    let sysid_term = j_sysid(states, sys_states, &task.state_weights)?;
    Ok(task_term * w_task + sysid_term * w_sysid)
}

/// Plain-float `J^comb(θ, β)`.
#[allow(clippy::too_many_arguments)]
pub fn j_combined(
    model: &Model,
    policy: &Policy,
    beta: &[f64],
    theta: &[f64],
    sys_states: &[Vec<f64>],
    task: &TaskSpec,
    w_task: f64,
    w_sysid: f64,
) -> Result<f64, ObjectiveError> {
    check_weights(w_task, w_sysid)?;
    let traj = model.rollout(policy, theta, beta, &task.x0, task.horizon)?;
    combined_loss(&traj.states, sys_states, task, w_task, w_sysid)
}

/// Which scalar to differentiate.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    Task,
    SysId { sys: &'a Trajectory },
    Combined { sys: &'a Trajectory, w_task: f64, w_sysid: f64 },
}

/// Value and gradients of an objective; `grad_beta` is with respect to the
/// natural (not log) parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub grad_theta: Vec<f64>,
    pub grad_beta: Vec<f64>,
    pub trajectory: Trajectory,
}

/// Rolls the model out on a fresh tape from `x0` and backpropagates
/// `objective` through the whole horizon.
pub fn evaluate(
    model: &Model,
    policy: &Policy,
    beta: &[f64],
    theta: &[f64],
    task: &TaskSpec,
    x0: &[f64],
    objective: Objective<'_>,
) -> Result<Evaluation, ObjectiveError> {
    let tape = Tape::with_capacity(task.horizon * 64);
    let th = tape.leaves(theta)?;
    let be = tape.leaves(beta)?;
    let x0: Vec<_> = x0.iter().map(|v| tape.constant(*v)).collect();
    let traj = model.rollout(policy, &th, &be, &x0, task.horizon)?;
    let root = match objective {
        Objective::Task => task_loss(&traj.states, task)?,
        Objective::SysId { sys } => j_sysid(&traj.states, &sys.states, &task.state_weights)?,
        Objective::Combined { sys, w_task, w_sysid } => combined_loss(&traj.states, &sys.states, task, w_task, w_sysid)?,
    };
    let grads = tape.backward(root)?;
    Ok(Evaluation {
        value: root.value(),
        grad_theta: grads.wrt_all(&th),
        grad_beta: grads.wrt_all(&be),
        trajectory: traj.values(),
    })
}
