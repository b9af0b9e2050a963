use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::dynamics::{Deployment, DynamicsError, ModelParams, SystemRollout, Trajectory};
use crate::objectives::{evaluate, j_sysid, j_task_sys, Evaluation, Objective, ObjectiveError, TaskSpec};

use super::{
    terminate, AdamConfig, AdamState, IterationRecord, PhaseTrace, StopReason, Strategy, TunerError, TuningConfig,
    TuningProblem, TuningReport, Verdict,
};

/// Result of one inner descent.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOutcome {
    pub params: Vec<f64>,
    pub trace: PhaseTrace,
}

/// Parameters handed back to the outer loop by one strategy update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    /// Full natural-coordinate β.
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
    pub phases: Vec<PhaseTrace>,
}

enum EvalFailure {
    /// The iterate blew up in the model; treat as divergence.
    BlowUp,
    /// Nothing comparable to optimize against.
    Skip,
    Fatal(TunerError),
}

impl From<ObjectiveError> for EvalFailure {
    fn from(e: ObjectiveError) -> Self {
        match e {
            ObjectiveError::Dynamics(d) if d.truncated_at().is_some() => EvalFailure::BlowUp,
            ObjectiveError::Autodiff(_) => EvalFailure::BlowUp,
            ObjectiveError::EmptyComparison => EvalFailure::Skip,
            other => EvalFailure::Fatal(other.into()),
        }
    }
}

/// Adam descent with the convergence/divergence test, shared by every
/// strategy.
///
/// The objective is evaluated at each iterate; the first evaluation never
/// terminates. On divergence or a model blow-up the previous iterate is
/// returned. At most `max_epochs` updates are applied; after the last one the
/// objective is evaluated once more so the returned iterate always carries a
/// recorded loss.
pub fn descend(
    name: &str,
    initial: Vec<f64>,
    max_epochs: usize,
    rates: &[f64],
    adam: AdamConfig,
    mut objective: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>), ObjectiveError>,
    project: impl Fn(&mut [f64]),
) -> Result<PhaseOutcome, TunerError> {
    let mut state = AdamState::new(initial.len(), adam);
    let mut params = initial;
    let mut previous: Option<(Vec<f64>, f64)> = None;
    let mut losses = Vec::new();
    let mut updates = 0;

    let finish = |params: Vec<f64>, losses: Vec<f64>, updates, stop, final_loss| PhaseOutcome {
        params,
        trace: PhaseTrace { name: name.to_string(), losses, updates, stop, final_loss },
    };

    if params.is_empty() || max_epochs == 0 {
        return Ok(finish(params, losses, 0, StopReason::Skipped, None));
    }

    for epoch in 0..=max_epochs {
        let (value, grad) = match objective(&params).map_err(EvalFailure::from) {
            Ok(v) => v,
            Err(EvalFailure::Fatal(e)) => return Err(e),
            Err(EvalFailure::Skip) => return Ok(finish(params, losses, updates, StopReason::Skipped, None)),
            Err(EvalFailure::BlowUp) => {
                return Ok(match previous {
                    Some((p, j)) => finish(p, losses, updates, StopReason::BlowUp, Some(j)),
                    None => finish(params, losses, updates, StopReason::BlowUp, None),
                })
            }
        };
        losses.push(value);
        if let Some((prev_params, prev_value)) = &previous {
            match terminate(value, *prev_value) {
                Verdict::Converged => return Ok(finish(params, losses, updates, StopReason::Converged, Some(value))),
                Verdict::Diverged => {
                    let (p, j) = (prev_params.clone(), *prev_value);
                    return Ok(finish(p, losses, updates, StopReason::Diverged, Some(j)));
                }
                Verdict::Continue => {}
            }
        }
        if epoch == max_epochs {
            return Ok(finish(params, losses, updates, StopReason::MaxEpochs, Some(value)));
        }
        let before = params.clone();
        match state.update_with_rates(&mut params, &grad, rates) {
            Ok(()) => {}
            Err(TunerError::NonFiniteGradient(_)) => {
                return Ok(finish(before, losses, updates, StopReason::BlowUp, Some(value)));
            }
            Err(e) => return Err(e),
        }
        project(&mut params);
        updates += 1;
        previous = Some((before, value));
    }
    unreachable!("loop returns at the last epoch")
}

fn log_tunable(beta: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| beta[i].ln()).collect()
}

fn with_log_tunable(beta: &[f64], idx: &[usize], logs: &[f64]) -> Vec<f64> {
    let mut full = beta.to_vec();
    for (&i, l) in idx.iter().zip(logs) {
        full[i] = l.exp();
    }
    full
}

/// Chain rule to log coordinates: ∂J/∂log β = β·∂J/∂β.
fn log_gradient(eval: &Evaluation, beta: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| eval.grad_beta[i] * beta[i]).collect()
}

/// Joint descent of `w_task·J^task + w_sysid·J^sysId` in (θ, log β).
pub fn update_combined(
    problem: &TuningProblem,
    beta: &[f64],
    theta: &[f64],
    sys: &Trajectory,
    cfg: &TuningConfig,
) -> Result<UpdateOutcome, TunerError> {
    let idx = problem.mask.indices();
    let n_theta = theta.len();
    let mut initial = theta.to_vec();
    initial.extend(log_tunable(beta, &idx));
    let mut rates = vec![cfg.lr_theta; n_theta];
    rates.extend(std::iter::repeat(cfg.lr_beta).take(idx.len()));

    let objective = Objective::Combined { sys, w_task: cfg.w_task, w_sysid: cfg.w_sysid };
    let phase = descend(
        "joint",
        initial,
        cfg.epochs,
        &rates,
        cfg.adam,
        |p| {
            let (th, logs) = p.split_at(n_theta);
            let full = with_log_tunable(beta, &idx, logs);
            let eval = evaluate(&problem.model, &problem.policy, &full, th, &problem.task, &problem.task.x0, objective)?;
            let mut grad = eval.grad_theta.clone();
            grad.extend(log_gradient(&eval, &full, &idx));
            Ok((eval.value, grad))
        },
        |p| problem.policy.project(&mut p[..n_theta]),
    )?;
    let (th, logs) = phase.params.split_at(n_theta);
    Ok(UpdateOutcome { beta: with_log_tunable(beta, &idx, logs), theta: th.to_vec(), phases: vec![phase.trace] })
}

fn fit_beta(
    problem: &TuningProblem,
    beta: &[f64],
    theta: &[f64],
    data: &[(Vec<f64>, &Trajectory)],
    epochs: usize,
    cfg: &TuningConfig,
) -> Result<(Vec<f64>, PhaseTrace), TunerError> {
    let idx = problem.mask.indices();
    let rates = vec![cfg.lr_beta; idx.len()];
    let phase = descend(
        "beta",
        log_tunable(beta, &idx),
        epochs,
        &rates,
        cfg.adam,
        |logs| {
            let full = with_log_tunable(beta, &idx, logs);
            let mut value = 0.0;
            let mut grad = vec![0.0; idx.len()];
            for (x0, sys) in data {
                let eval = evaluate(&problem.model, &problem.policy, &full, theta, &problem.task, x0, Objective::SysId { sys })?;
                value += eval.value;
                for (g, d) in grad.iter_mut().zip(log_gradient(&eval, &full, &idx)) {
                    *g += d;
                }
            }
            let n = data.len() as f64;
            Ok((value / n, grad.into_iter().map(|g| g / n).collect()))
        },
        |_| {},
    )?;
    Ok((with_log_tunable(beta, &idx, &phase.params), phase.trace))
}

fn tune_theta(problem: &TuningProblem, beta: &[f64], theta: &[f64], epochs: usize, cfg: &TuningConfig) -> Result<(Vec<f64>, PhaseTrace), TunerError> {
    let rates = vec![cfg.lr_theta; theta.len()];
    let phase = descend(
        "theta",
        theta.to_vec(),
        epochs,
        &rates,
        cfg.adam,
        |th| {
            let eval = evaluate(&problem.model, &problem.policy, beta, th, &problem.task, &problem.task.x0, Objective::Task)?;
            Ok((eval.value, eval.grad_theta))
        },
        |p| problem.policy.project(p),
    )?;
    Ok((phase.params, phase.trace))
}

/// Fit β to the rollout with θ frozen (≤ K/2 epochs), then tune θ on the
/// refitted model (≤ K/2 epochs). Each phase has its own Adam state.
pub fn update_split_alternate(
    problem: &TuningProblem,
    beta: &[f64],
    theta: &[f64],
    sys: &Trajectory,
    cfg: &TuningConfig,
) -> Result<UpdateOutcome, TunerError> {
    let half = cfg.epochs / 2;
    let (beta_next, beta_trace) = fit_beta(problem, beta, theta, &[(problem.task.x0.clone(), sys)], half, cfg)?;
    let (theta_next, theta_trace) = tune_theta(problem, &beta_next, theta, half, cfg)?;
    Ok(UpdateOutcome { beta: beta_next, theta: theta_next, phases: vec![beta_trace, theta_trace] })
}

/// θ-only descent on the model with β frozen (K epochs).
fn update_difftune_model(problem: &TuningProblem, beta: &[f64], theta: &[f64], cfg: &TuningConfig) -> Result<UpdateOutcome, TunerError> {
    let (theta_next, trace) = tune_theta(problem, beta, theta, cfg.epochs, cfg)?;
    Ok(UpdateOutcome { beta: beta.to_vec(), theta: theta_next, phases: vec![trace] })
}

/// Task loss and its θ-gradient along a recorded deployment trajectory,
/// propagating `∂x_t/∂θ` forward with model Jacobians evaluated at the
/// recorded states.
///
/// `S_{t+1} = (∂f/∂x + ∂f/∂u·∂π/∂x) S_t + ∂f/∂u·∂π/∂θ`, `S_0 = 0`. The loss is
/// normalized by the task horizon, matching the deployment score.
pub fn sensitivity_gradient(
    problem: &TuningProblem,
    beta: &[f64],
    theta: &[f64],
    sys: &Trajectory,
) -> Result<(f64, Vec<f64>), TunerError> {
    let task = &problem.task;
    let n = problem.model.state_dim();
    let p = theta.len();
    let steps = sys.len().min(task.horizon);
    let mut sens = DMatrix::<f64>::zeros(n, p);
    let mut grad = vec![0.0; p];
    let mut value = 0.0;
    for t in 0..steps {
        let tape = Tape::new();
        let x = tape.leaves(&sys.states[t]).map_err(ObjectiveError::from)?;
        let th = tape.leaves(theta).map_err(ObjectiveError::from)?;
        let be: Vec<_> = beta.iter().map(|b| tape.constant(*b)).collect();
        let u = problem.policy.eval(&x, &th).map_err(DynamicsError::from)?;
        let next = problem.model.step(&x, &u, &be);
        let mut jx = DMatrix::<f64>::zeros(n, n);
        let mut jt = DMatrix::<f64>::zeros(n, p);
        for (i, fi) in next.iter().enumerate() {
            let g = tape.backward(*fi).map_err(ObjectiveError::from)?;
            for (j, xj) in x.iter().enumerate() {
                jx[(i, j)] = g.wrt(*xj);
            }
            for (j, tj) in th.iter().enumerate() {
                jt[(i, j)] = g.wrt(*tj);
            }
        }
        sens = &jx * &sens + jt;
        let x_next = &sys.states[t + 1];
        let target = task.reference.at(t + 1);
        for i in 0..n {
            let w = task.state_weights.get(i).copied().unwrap_or(1.0);
            let err = x_next[i] - target[i];
            value += w * err * err;
            for (j, g) in grad.iter_mut().enumerate() {
                *g += 2.0 * w * err * sens[(i, j)];
            }
        }
    }
    let horizon = task.horizon as f64;
    Ok((value / horizon, grad.into_iter().map(|g| g / horizon).collect()))
}

fn update_difftune_system(
    problem: &TuningProblem,
    beta: &[f64],
    theta: &[f64],
    sys: &Trajectory,
    adam: &mut AdamState,
    cfg: &TuningConfig,
) -> Result<UpdateOutcome, TunerError> {
    let mut trace = PhaseTrace { name: "theta_sys".into(), losses: Vec::new(), updates: 0, stop: StopReason::Skipped, final_loss: None };
    if sys.is_empty() {
        return Ok(UpdateOutcome { beta: beta.to_vec(), theta: theta.to_vec(), phases: vec![trace] });
    }
    let (value, grad) = sensitivity_gradient(problem, beta, theta, sys)?;
    trace.losses.push(value);
    let mut next = theta.to_vec();
    match adam.update(&mut next, &grad, cfg.lr_theta) {
        Ok(()) => {
            problem.policy.project(&mut next);
            trace.updates = 1;
            trace.stop = StopReason::MaxEpochs;
        }
        Err(TunerError::NonFiniteGradient(_)) => {
            next = theta.to_vec();
            trace.stop = StopReason::BlowUp;
        }
        Err(e) => return Err(e),
    }
    Ok(UpdateOutcome { beta: beta.to_vec(), theta: next, phases: vec![trace] })
}

fn collect(system: &mut dyn Deployment, problem: &TuningProblem, theta: &[f64], x0: &[f64]) -> Result<SystemRollout, TunerError> {
    let task = &problem.task;
    Ok(system.rollout(&problem.policy, theta, x0, task.horizon, task.dt)?)
}

fn post_sysid(problem: &TuningProblem, beta: &[f64], theta: &[f64], x0: &[f64], sys: &Trajectory) -> Option<f64> {
    let traj = problem.model.rollout(&problem.policy, theta, beta, x0, problem.task.horizon).ok()?;
    j_sysid(&traj.states, &sys.states, &problem.task.state_weights).ok()
}

fn check_inputs(problem: &TuningProblem, beta: &ModelParams, theta: &[f64], cfg: &TuningConfig) -> Result<(), TunerError> {
    cfg.validate()?;
    problem.task.validate()?;
    problem.mask.validate(beta)?;
    if beta.kind() != problem.model.kind {
        return Err(TunerError::Config(format!("β is for {} but the model is {}", beta.kind(), problem.model.kind)));
    }
    if theta.len() != problem.policy.param_dim() {
        return Err(TunerError::Shape { expected: problem.policy.param_dim(), got: theta.len() });
    }
    let task = &problem.task;
    problem
        .model
        .rollout(&problem.policy, theta, beta.values(), &task.x0, task.horizon)
        .map_err(|e| match e.truncated_at() {
            Some(_) => TunerError::NominalUnstable(e),
            None => TunerError::Dynamics(e),
        })?;
    Ok(())
}

struct BestTracker {
    index: usize,
    theta: Vec<f64>,
    value: f64,
}

impl BestTracker {
    fn offer(&mut self, index: usize, theta: &[f64], value: f64) {
        if value <= self.value {
            self.index = index;
            self.theta = theta.to_vec();
            self.value = value;
        }
    }
}

/// Iterative co-tuning: one deployment rollout per outer iteration, a
/// strategy update between rollouts, and best-iterate tracking on the
/// deployment score.
///
/// The collection rollout of iteration `l + 1` doubles as the evaluation of
/// θ_{l+1}; one final rollout scores θ_L. Total deployment rollouts: L + 1.
pub fn cotune(
    system: &mut dyn Deployment,
    problem: &TuningProblem,
    beta0: &ModelParams,
    theta0: &[f64],
    cfg: &TuningConfig,
) -> Result<TuningReport, TunerError> {
    check_inputs(problem, beta0, theta0, cfg)?;
    if cfg.strategy == Strategy::SysidThenTune {
        return sysid_then_tune_checked(system, problem, beta0, theta0, cfg);
    }
    let task = &problem.task;
    let mut beta = beta0.values().to_vec();
    let mut theta = theta0.to_vec();
    let mut iterations = Vec::with_capacity(cfg.outer_iterations + 1);
    let mut best: Option<BestTracker> = None;
    let mut rollouts = 0;
    // difftune_system makes one update per rollout, so its moments carry over
    let mut persistent_adam = AdamState::new(theta.len(), cfg.adam);

    for l in 0..=cfg.outer_iterations {
        let roll = collect(system, problem, &theta, &task.x0)?;
        rollouts += 1;
        let score = j_task_sys(&roll.trajectory.states, task)?;
        match best.as_mut() {
            Some(b) => b.offer(l, &theta, score),
            None => best = Some(BestTracker { index: l, theta: theta.clone(), value: score }),
        }
        let mut record = IterationRecord {
            iteration: l,
            j_task_sys: score,
            j_sysid_post: None,
            theta: theta.clone(),
            beta: beta.clone(),
            phases: Vec::new(),
            system_failed_at: roll.failed_at,
            trajectory: Some(roll.trajectory.clone()),
        };
        if l < cfg.outer_iterations {
            let sys = &roll.trajectory;
            let update = match cfg.strategy {
                Strategy::Combined => update_combined(problem, &beta, &theta, sys, cfg)?,
                Strategy::SplitAlternate => update_split_alternate(problem, &beta, &theta, sys, cfg)?,
                Strategy::DifftuneModel => update_difftune_model(problem, &beta, &theta, cfg)?,
                Strategy::DifftuneSystem => update_difftune_system(problem, &beta, &theta, sys, &mut persistent_adam, cfg)?,
                Strategy::SysidThenTune => unreachable!("handled above"),
            };
            record.j_sysid_post = post_sysid(problem, &update.beta, &theta, &task.x0, sys);
            record.phases = update.phases;
            beta = update.beta;
            theta = update.theta;
        }
        iterations.push(record);
    }
    let best = best.expect("at least one rollout");
    Ok(TuningReport {
        strategy: cfg.strategy,
        config: cfg.clone(),
        iterations,
        best_index: best.index,
        theta_best: best.theta,
        j_best: best.value,
        system_rollouts: rollouts,
    })
}

/// θ-only tuning on the nominal model; the deployment is used for scoring.
pub fn difftune_model_rollout(
    system: &mut dyn Deployment,
    problem: &TuningProblem,
    beta0: &ModelParams,
    theta0: &[f64],
    cfg: &TuningConfig,
) -> Result<TuningReport, TunerError> {
    cotune(system, problem, beta0, theta0, &cfg.clone().with_strategy(Strategy::DifftuneModel))
}

/// One sensitivity-propagation update per deployment rollout.
pub fn difftune_system_rollout(
    system: &mut dyn Deployment,
    problem: &TuningProblem,
    beta0: &ModelParams,
    theta0: &[f64],
    cfg: &TuningConfig,
) -> Result<TuningReport, TunerError> {
    cotune(system, problem, beta0, theta0, &cfg.clone().with_strategy(Strategy::DifftuneSystem))
}

/// Batch baseline: L rollouts of the nominal controller (the first from
/// `x0`, the rest from seeded perturbed starts), one β fit over all of them,
/// θ tuning on the identified model, and one final scoring rollout.
pub fn sysid_then_tune(
    system: &mut dyn Deployment,
    problem: &TuningProblem,
    beta0: &ModelParams,
    theta0: &[f64],
    cfg: &TuningConfig,
) -> Result<TuningReport, TunerError> {
    check_inputs(problem, beta0, theta0, cfg)?;
    sysid_then_tune_checked(system, problem, beta0, theta0, cfg)
}

fn perturbed_starts(task: &TaskSpec, cfg: &TuningConfig, count: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let spread = cfg.ic_perturbation;
    (0..count)
        .map(|i| {
            if i == 0 || spread == 0.0 {
                return task.x0.clone();
            }
            task.x0
                .iter()
                .enumerate()
                .map(|(j, x)| {
                    let scale = cfg.state_scale.get(j).copied().unwrap_or(1.0);
                    x + rng.gen_range(-spread..=spread) * scale
                })
                .collect()
        })
        .collect()
}

fn sysid_then_tune_checked(
    system: &mut dyn Deployment,
    problem: &TuningProblem,
    beta0: &ModelParams,
    theta0: &[f64],
    cfg: &TuningConfig,
) -> Result<TuningReport, TunerError> {
    let task = &problem.task;
    let cfg = cfg.clone().with_strategy(Strategy::SysidThenTune);
    let beta_nominal = beta0.values().to_vec();
    let record = |iteration, score, theta: &[f64], beta: &[f64], roll: &SystemRollout| IterationRecord {
        iteration,
        j_task_sys: score,
        j_sysid_post: None,
        theta: theta.to_vec(),
        beta: beta.to_vec(),
        phases: Vec::new(),
        system_failed_at: roll.failed_at,
        trajectory: Some(roll.trajectory.clone()),
    };

    let count = cfg.outer_iterations.max(1);
    let starts = perturbed_starts(task, &cfg, count);
    let mut rolls = Vec::with_capacity(count);
    for x0 in &starts {
        rolls.push(collect(system, problem, theta0, x0)?);
    }
    let nominal_score = j_task_sys(&rolls[0].trajectory.states, task)?;
    let mut best = BestTracker { index: 0, theta: theta0.to_vec(), value: nominal_score };

    // the nominal controller is only scored from x0; perturbed starts are data
    let mut iterations: Vec<IterationRecord> =
        (0..count).map(|l| record(l, nominal_score, theta0, &beta_nominal, &rolls[0])).collect();

    if cfg.outer_iterations == 0 {
        return Ok(TuningReport {
            strategy: cfg.strategy,
            config: cfg.clone(),
            iterations,
            best_index: 0,
            theta_best: best.theta,
            j_best: best.value,
            system_rollouts: rolls.len(),
        });
    }

    let budget = cfg.outer_iterations * cfg.epochs / 2;
    let data: Vec<(Vec<f64>, &Trajectory)> = starts.iter().cloned().zip(rolls.iter().map(|r| &r.trajectory)).collect();
    let (beta_fit, beta_trace) = fit_beta(problem, &beta_nominal, theta0, &data, budget, &cfg)?;
    let (theta_fit, theta_trace) = tune_theta(problem, &beta_fit, theta0, budget, &cfg)?;

    let last = iterations.last_mut().expect("count >= 1");
    last.phases = vec![beta_trace, theta_trace];
    let mut post = 0.0;
    let mut n = 0usize;
    for (x0, sys) in &data {
        if let Some(v) = post_sysid(problem, &beta_fit, theta0, x0, sys) {
            post += v;
            n += 1;
        }
    }
    last.j_sysid_post = (n > 0).then(|| post / n as f64);

    let final_roll = collect(system, problem, &theta_fit, &task.x0)?;
    let final_score = j_task_sys(&final_roll.trajectory.states, task)?;
    let l = cfg.outer_iterations;
    best.offer(l, &theta_fit, final_score);
    iterations.push(record(l, final_score, &theta_fit, &beta_fit, &final_roll));

    Ok(TuningReport {
        strategy: cfg.strategy,
        config: cfg.clone(),
        iterations,
        best_index: best.index,
        theta_best: best.theta,
        j_best: best.value,
        system_rollouts: rolls.len() + 1,
    })
}
