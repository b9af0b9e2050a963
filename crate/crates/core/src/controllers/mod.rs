//! Differentiable policies and nominal-controller synthesis.

mod lqr;
mod policy;
mod synthesis;

pub use lqr::{
    closed_loop, linearize, solve_dare, spectral_radius, synthesize_lqr, LinearizedModel, RiccatiSolution,
    EQUILIBRIUM_TOL, RICCATI_MAX_ITERS, RICCATI_TOL,
};
pub use policy::{linear_policy, mlp_policy, param_count, pd_policy, Policy, DEFAULT_U_MAX};
pub use synthesis::{synthesize_mlp_nominal, SynthesisSettings};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::objectives::ObjectiveError;

/// Flat controller parameters θ together with their layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub layout: Policy,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("policy expects state dimension {expected}, got {got}")]
    StateDim { expected: usize, got: usize },
    #[error("policy expects {expected} parameters, got {got}")]
    ParamDim { expected: usize, got: usize },
    #[error("invalid network architecture {0:?}")]
    Architecture(Vec<usize>),
    #[error("control saturation must be positive, got {0}")]
    InvalidSaturation(f64),
    #[error("linearization point is not an equilibrium (residual {0:e})")]
    NotEquilibrium(f64),
    #[error("matrix dimensions are inconsistent")]
    MatrixShape,
    #[error("R + BᵀPB is singular")]
    Singular,
    #[error("Riccati iteration did not converge after {iterations} iterations (last change {delta:e})")]
    RiccatiDiverged { iterations: usize, delta: f64 },
    #[error("synthesis stopped at loss {final_loss} above threshold {threshold}")]
    SynthesisFailed { final_loss: f64, threshold: f64 },
    #[error("objective evaluation failed: {0}")]
    Evaluation(Box<ObjectiveError>),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[cfg(test)]
mod tests;
