//! Parameterized dynamics models and the black-box deployment system.
//!
//! Models are generic over [`Scalar`](crate::autodiff::Scalar) so the same
//! code runs on plain floats or on a tape. The [`System`] integrates with its
//! own hidden parameters and integrator and only hands out observations.

mod model;
mod params;
mod system;

pub use model::{
    cartpole_accel, cartpole_step, integrate, msd_accel, msd_step, Integrator, Model, Trajectory, BLOWUP_LIMIT,
    GRAVITY, MAX_DT,
};
pub use params::{ModelKind, ModelParams, TunableMask};
pub use system::{make_system, CountingDeployment, Deployment, System, SystemRollout};

use thiserror::Error;

use crate::controllers::ControllerError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("unknown model kind `{0}`")]
    UnknownKind(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("{kind} expects {expected} parameters, got {got}")]
    ParamCount { kind: ModelKind, expected: usize, got: usize },
    #[error("parameter `{name}` has invalid value {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("time step {0} outside (0, 0.05]")]
    InvalidDt(f64),
    #[error("invalid observation noise std {0}")]
    InvalidNoise(f64),
    #[error("expected state dimension {expected}, got {got}")]
    StateDim { expected: usize, got: usize },
    #[error("horizon must be at least one step")]
    EmptyHorizon,
    #[error("state exceeded the blow-up limit at step {step}")]
    BlowUp { step: usize },
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
    #[error(transparent)]
    Policy(#[from] ControllerError),
}

impl DynamicsError {
    /// Step index of a blow-up, if this error is one.
    pub fn truncated_at(&self) -> Option<usize> {
        match self {
            DynamicsError::BlowUp { step } | DynamicsError::NonFinite { step } => Some(*step),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests;
