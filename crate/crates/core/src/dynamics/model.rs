use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::controllers::Policy;

use super::{DynamicsError, ModelKind, ModelParams};

pub const GRAVITY: f64 = 9.81;

/// Largest admissible |state| entry before a rollout counts as blown up.
pub const BLOWUP_LIMIT: f64 = 1e6;

pub const MAX_DT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Velocities first, then positions with the new velocities.
    #[default]
    SemiImplicitEuler,
    Rk4,
}

/// Time-indexed states `x_0..x_T` and controls `u_0..u_{T-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S = f64> {
    pub states: Vec<Vec<S>>,
    pub controls: Vec<Vec<S>>,
    pub dt: f64,
}

impl<S: Scalar> Trajectory<S> {
    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn values(&self) -> Trajectory<f64> {
        let conv = |rows: &[Vec<S>]| rows.iter().map(|r| r.iter().map(Scalar::value).collect()).collect();
        Trajectory { states: conv(&self.states), controls: conv(&self.controls), dt: self.dt }
    }

    pub fn final_state(&self) -> &[S] {
        self.states.last().expect("trajectory has x_0")
    }
}

/// Generalized accelerations `[ẍ, θ̈]` of the cart-pole.
///
/// Classic cart-pole with the applied force `gear_ratio·u − cart_friction·ẋ`
/// and viscous pole damping `pole_friction·θ̇`. θ = 0 is upright.
pub fn cartpole_accel<S: Scalar>(x: &[S], u: S, beta: &[S]) -> [S; 2] {
    let (theta, xdot, thetadot) = (x[1], x[2], x[3]);
    let (mc, mp, l, gear, fc, fp) = (beta[0], beta[1], beta[2], beta[3], beta[4], beta[5]);
    let total = mc + mp;
    let force = gear * u - fc * xdot;
    let (s, c) = (theta.sin(), theta.cos());
    let pml = mp * l;
    let temp = (force + pml * thetadot.square() * s) / total;
    let numer = s * GRAVITY - c * temp - fp * thetadot / pml;
    let denom = l * (-(mp * c.square() / total) + 4.0 / 3.0);
    let thetaacc = numer / denom;
    let xacc = temp - pml * thetaacc * c / total;
    [xacc, thetaacc]
}

/// `m·p̈ + c·ṗ + k·p = u`.
pub fn msd_accel<S: Scalar>(x: &[S], u: S, beta: &[S]) -> [S; 1] {
    let (p, v) = (x[0], x[1]);
    let (m, k, c) = (beta[0], beta[1], beta[2]);
    [(u - c * v - k * p) / m]
}

fn accelerations<S: Scalar>(kind: ModelKind, x: &[S], u: &[S], beta: &[S]) -> Vec<S> {
    match kind {
        ModelKind::Cartpole => cartpole_accel(x, u[0], beta).to_vec(),
        ModelKind::Msd => msd_accel(x, u[0], beta).to_vec(),
    }
}

/// One integration step of `kind`. States are `[positions.., velocities..]`.
pub fn integrate<S: Scalar>(kind: ModelKind, integrator: Integrator, x: &[S], u: &[S], beta: &[S], dt: f64) -> Vec<S> {
    let half = x.len() / 2;
    match integrator {
        Integrator::SemiImplicitEuler => {
            let acc = accelerations(kind, x, u, beta);
            let v: Vec<S> = x[half..].iter().zip(&acc).map(|(v, a)| *v + *a * dt).collect();
            let q = x[..half].iter().zip(&v).map(|(q, v)| *q + *v * dt);
            q.chain(v.iter().copied()).collect()
        }
        Integrator::Rk4 => {
            let deriv = |s: &[S]| -> Vec<S> {
                let acc = accelerations(kind, s, u, beta);
                s[half..].iter().copied().chain(acc).collect()
            };
            let axpy = |a: &[S], b: &[S], h: f64| -> Vec<S> { a.iter().zip(b).map(|(a, b)| *a + *b * h).collect() };
            let k1 = deriv(x);
            let k2 = deriv(&axpy(x, &k1, dt / 2.0));
            let k3 = deriv(&axpy(x, &k2, dt / 2.0));
            let k4 = deriv(&axpy(x, &k3, dt));
            (0..x.len())
                .map(|i| x[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0))
                .collect()
        }
    }
}

fn check_dt(dt: f64) -> Result<(), DynamicsError> {
    if dt > 0.0 && dt <= MAX_DT {
        Ok(())
    } else {
        Err(DynamicsError::InvalidDt(dt))
    }
}

fn checked_step(kind: ModelKind, x: &[f64], u: f64, beta: &ModelParams, dt: f64) -> Result<Vec<f64>, DynamicsError> {
    check_dt(dt)?;
    if beta.kind() != kind || x.len() != kind.state_dim() {
        return Err(DynamicsError::StateDim { expected: kind.state_dim(), got: x.len() });
    }
    let next = integrate(kind, Integrator::SemiImplicitEuler, x, &[u], beta.values(), dt);
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(DynamicsError::NonFinite { step: 0 })
    }
}

/// Semi-implicit Euler step of the cart-pole.
pub fn cartpole_step(x: &[f64], u: f64, beta: &ModelParams, dt: f64) -> Result<Vec<f64>, DynamicsError> {
    checked_step(ModelKind::Cartpole, x, u, beta, dt)
}

/// Semi-implicit Euler step of the mass-spring-damper.
pub fn msd_step(x: &[f64], u: f64, beta: &ModelParams, dt: f64) -> Result<Vec<f64>, DynamicsError> {
    checked_step(ModelKind::Msd, x, u, beta, dt)
}

/// Differentiable discrete-time model `x_{t+1} = f(x_t, u_t; β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kind: ModelKind,
    pub integrator: Integrator,
    pub dt: f64,
}

impl Model {
    pub fn new(kind: ModelKind, integrator: Integrator, dt: f64) -> Result<Self, DynamicsError> {
        check_dt(dt)?;
        Ok(Self { kind, integrator, dt })
    }

    pub fn euler(kind: ModelKind, dt: f64) -> Result<Self, DynamicsError> {
        Self::new(kind, Integrator::SemiImplicitEuler, dt)
    }

    pub fn state_dim(&self) -> usize {
        self.kind.state_dim()
    }

    pub fn step<S: Scalar>(&self, x: &[S], u: &[S], beta: &[S]) -> Vec<S> {
        integrate(self.kind, self.integrator, x, u, beta, self.dt)
    }

    /// Closed-loop unroll `x_{t+1} = f(x_t, π(x_t; θ); β)` for `steps` steps.
    pub fn rollout<S: Scalar>(
        &self,
        policy: &Policy,
        theta: &[S],
        beta: &[S],
        x0: &[S],
        steps: usize,
    ) -> Result<Trajectory<S>, DynamicsError> {
        if steps == 0 {
            return Err(DynamicsError::EmptyHorizon);
        }
        if x0.len() != self.state_dim() {
            return Err(DynamicsError::StateDim { expected: self.state_dim(), got: x0.len() });
        }
        let mut states = Vec::with_capacity(steps + 1);
        let mut controls = Vec::with_capacity(steps);
        states.push(x0.to_vec());
        for t in 0..steps {
            let x = &states[t];
            let u = policy.eval(x, theta)?;
            let next = self.step(x, &u, beta);
            if let Some(bad) = next.iter().find(|v| !v.value().is_finite() || v.value().abs() > BLOWUP_LIMIT) {
                return Err(if bad.value().is_finite() {
                    DynamicsError::BlowUp { step: t + 1 }
                } else {
                    DynamicsError::NonFinite { step: t + 1 }
                });
            }
            controls.push(u);
            states.push(next);
        }
        Ok(Trajectory { states, controls, dt: self.dt })
    }
}
