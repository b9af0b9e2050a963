use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::controllers::Policy;

use super::model::{integrate, Integrator, Trajectory, BLOWUP_LIMIT};
use super::{DynamicsError, ModelKind, ModelParams};

/// One rollout collected on a deployment system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemRollout {
    /// Observed states; truncated at the last admissible state on failure.
    pub trajectory: Trajectory,
    /// Step at which the state blew up, if it did.
    pub failed_at: Option<usize>,
}

impl SystemRollout {
    pub fn failed(&self) -> bool {
        self.failed_at.is_some()
    }
}

/// Inference-only access to a deployment-domain system.
pub trait Deployment {
    fn state_dim(&self) -> usize;

    /// Closed-loop rollout of `policy` from `x0` for `steps` steps.
    fn rollout(&mut self, policy: &Policy, theta: &[f64], x0: &[f64], steps: usize, dt: f64) -> Result<SystemRollout, DynamicsError>;
}

/// Black-box deployment system with hidden parameters.
///
/// The true parameters are fixed at construction and cannot be read back:
///
/// ```compile_fail
/// use cotune::dynamics::{Integrator, ModelKind, ModelParams, System};
/// let sys = System::new(ModelParams::defaults(ModelKind::Msd), vec![0.0; 2], Integrator::Rk4, 0).unwrap();
/// let leaked = sys.beta_true;
/// ```
#[derive(Debug, Clone)]
pub struct System {
    beta_true: ModelParams,
    integrator: Integrator,
    noise: Vec<Option<Normal<f64>>>,
    rng: ChaCha8Rng,
    state: Vec<f64>,
}

impl System {
    /// `noise_std` is either empty (noiseless) or one entry per state dim.
    pub fn new(beta_true: ModelParams, noise_std: Vec<f64>, integrator: Integrator, seed: u64) -> Result<Self, DynamicsError> {
        let dim = beta_true.kind().state_dim();
        let noise_std = if noise_std.is_empty() { vec![0.0; dim] } else { noise_std };
        if noise_std.len() != dim {
            return Err(DynamicsError::StateDim { expected: dim, got: noise_std.len() });
        }
        let noise = noise_std
            .iter()
            .map(|&s| {
                if !(s.is_finite() && s >= 0.0) {
                    Err(DynamicsError::InvalidNoise(s))
                } else if s == 0.0 {
                    Ok(None)
                } else {
                    Ok(Some(Normal::new(0.0, s).map_err(|_| DynamicsError::InvalidNoise(s))?))
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { beta_true, integrator, noise, rng: ChaCha8Rng::seed_from_u64(seed), state: vec![0.0; dim] })
    }

    pub fn kind(&self) -> ModelKind {
        self.beta_true.kind()
    }

    pub fn integrator(&self) -> Integrator {
        self.integrator
    }

    pub fn reset(&mut self, x0: &[f64]) -> Result<(), DynamicsError> {
        if x0.len() != self.state.len() {
            return Err(DynamicsError::StateDim { expected: self.state.len(), got: x0.len() });
        }
        self.state.copy_from_slice(x0);
        Ok(())
    }

    /// Advances the hidden state and returns a noisy observation of it.
    pub fn step(&mut self, u: &[f64], dt: f64) -> Result<Vec<f64>, DynamicsError> {
        let next = integrate(self.kind(), self.integrator, &self.state, u, self.beta_true.values(), dt);
        if let Some(bad) = next.iter().find(|v| !v.is_finite() || v.abs() > BLOWUP_LIMIT) {
            return Err(if bad.is_finite() {
                DynamicsError::BlowUp { step: 0 }
            } else {
                DynamicsError::NonFinite { step: 0 }
            });
        }
        self.state = next;
        Ok(self.observe())
    }

    fn observe(&mut self) -> Vec<f64> {
        let rng = &mut self.rng;
        self.state
            .iter()
            .zip(&self.noise)
            .map(|(x, n)| match n {
                Some(d) => x + d.sample(rng),
                None => *x,
            })
            .collect()
    }
}

impl Deployment for System {
    fn state_dim(&self) -> usize {
        self.state.len()
    }

    fn rollout(&mut self, policy: &Policy, theta: &[f64], x0: &[f64], steps: usize, dt: f64) -> Result<SystemRollout, DynamicsError> {
        if steps == 0 {
            return Err(DynamicsError::EmptyHorizon);
        }
        if !(dt > 0.0 && dt <= super::model::MAX_DT) {
            return Err(DynamicsError::InvalidDt(dt));
        }
        self.reset(x0)?;
        let mut states = vec![x0.to_vec()];
        let mut controls = Vec::with_capacity(steps);
        let mut failed_at = None;
        for t in 0..steps {
            let u = policy.eval(&states[t], theta)?;
            match self.step(&u, dt) {
                Ok(obs) => {
                    controls.push(u);
                    states.push(obs);
                }
                Err(DynamicsError::BlowUp { .. } | DynamicsError::NonFinite { .. }) => {
                    failed_at = Some(t + 1);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(SystemRollout { trajectory: Trajectory { states, controls, dt }, failed_at })
    }
}

/// Builds a deployment system from a kind name.
pub fn make_system(
    kind: &str,
    beta_true: ModelParams,
    noise_std: Vec<f64>,
    integrator: Integrator,
    seed: u64,
) -> Result<System, DynamicsError> {
    let kind: ModelKind = kind.parse()?;
    if beta_true.kind() != kind {
        return Err(DynamicsError::UnknownKind(format!("{kind} system with {} parameters", beta_true.kind())));
    }
    System::new(beta_true, noise_std, integrator, seed)
}

/// Wraps a deployment and counts rollouts requested from it.
#[derive(Debug)]
pub struct CountingDeployment<D> {
    inner: D,
    rollouts: usize,
}

impl<D: Deployment> CountingDeployment<D> {
    pub fn new(inner: D) -> Self {
        Self { inner, rollouts: 0 }
    }

    pub fn rollouts(&self) -> usize {
        self.rollouts
    }

    pub fn into_inner(self) -> D {
        self.inner
    }
}

impl<D: Deployment> Deployment for CountingDeployment<D> {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn rollout(&mut self, policy: &Policy, theta: &[f64], x0: &[f64], steps: usize, dt: f64) -> Result<SystemRollout, DynamicsError> {
        self.rollouts += 1;
        self.inner.rollout(policy, theta, x0, steps, dt)
    }
}
