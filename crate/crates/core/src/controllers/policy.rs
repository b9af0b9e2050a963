use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;

use super::ControllerError;

/// Default control saturation for the MLP policy (N).
pub const DEFAULT_U_MAX: f64 = 10.0;

/// Differentiable state-feedback policy `u = π(x; θ)`.
///
/// θ is always a flat vector; its layout depends on the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    /// `u = −K x` with `K` (control_dim × state_dim) stored row-major in θ.
    Linear { state_dim: usize, control_dim: usize },
    /// `u_i = k_p,i (p*_i − p_i) + k_d,i (v*_i − v_i)`, θ = `[k_p,0, k_d,0, k_p,1, ..]`.
    Pd { position: Vec<usize>, velocity: Vec<usize>, target_position: Vec<f64>, target_velocity: Vec<f64> },
    /// Fully connected tanh network with output `u_max·tanh(z)`.
    Mlp { arch: Vec<usize>, u_max: f64 },
}

impl Policy {
    pub fn linear(state_dim: usize, control_dim: usize) -> Self {
        Policy::Linear { state_dim, control_dim }
    }

    /// PD regulation of the given position/velocity state indices to zero.
    pub fn pd(position: Vec<usize>, velocity: Vec<usize>) -> Self {
        let n = position.len();
        Policy::Pd { position, velocity, target_position: vec![0.0; n], target_velocity: vec![0.0; n] }
    }

    /// `arch` is the full layer list, input and output included.
    pub fn mlp(arch: Vec<usize>, u_max: f64) -> Result<Self, ControllerError> {
        param_count(&arch)?;
        if arch.len() < 2 {
            return Err(ControllerError::Architecture(arch));
        }
        if !(u_max.is_finite() && u_max > 0.0) {
            return Err(ControllerError::InvalidSaturation(u_max));
        }
        Ok(Policy::Mlp { arch, u_max })
    }

    pub fn param_dim(&self) -> usize {
        match self {
            Policy::Linear { state_dim, control_dim } => state_dim * control_dim,
            Policy::Pd { position, .. } => 2 * position.len(),
            Policy::Mlp { arch, .. } => param_count(arch).unwrap_or(0),
        }
    }

    pub fn control_dim(&self) -> usize {
        match self {
            Policy::Linear { control_dim, .. } => *control_dim,
            Policy::Pd { position, .. } => position.len(),
            Policy::Mlp { arch, .. } => *arch.last().unwrap_or(&0),
        }
    }

    pub fn eval<S: Scalar>(&self, x: &[S], theta: &[S]) -> Result<Vec<S>, ControllerError> {
        match self {
            Policy::Linear { state_dim, control_dim } => {
                if x.len() != *state_dim {
                    return Err(ControllerError::StateDim { expected: *state_dim, got: x.len() });
                }
                if theta.len() != state_dim * control_dim {
                    return Err(ControllerError::ParamDim { expected: state_dim * control_dim, got: theta.len() });
                }
                Ok(linear_policy(x, theta, *control_dim))
            }
            Policy::Pd { position, velocity, target_position, target_velocity } => {
                if theta.len() != 2 * position.len() {
                    return Err(ControllerError::ParamDim { expected: 2 * position.len(), got: theta.len() });
                }
                if let Some(&i) = position.iter().chain(velocity).find(|&&i| i >= x.len()) {
                    return Err(ControllerError::StateDim { expected: i + 1, got: x.len() });
                }
                Ok((0..position.len())
                    .map(|i| {
                        let ep = -(x[position[i]] - target_position[i]);
                        let ev = -(x[velocity[i]] - target_velocity[i]);
                        pd_policy(ep, ev, theta[2 * i], theta[2 * i + 1])
                    })
                    .collect())
            }
            Policy::Mlp { arch, u_max } => mlp_policy(x, theta, arch, *u_max),
        }
    }

    /// Projects θ onto the admissible set (non-negative PD gains).
    pub fn project(&self, theta: &mut [f64]) {
        if let Policy::Pd { .. } = self {
            for g in theta.iter_mut() {
                *g = g.max(0.0);
            }
        }
    }

    /// Seeded initial θ. MLP weights and biases are uniform in ±1/√fan_in;
    /// linear and PD gains start at zero.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        match self {
            Policy::Mlp { arch, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut theta = Vec::with_capacity(self.param_dim());
                for w in arch.windows(2) {
                    let (fan_in, fan_out) = (w[0], w[1]);
                    let s = 1.0 / (fan_in as f64).sqrt();
                    for _ in 0..(fan_in * fan_out + fan_out) {
                        theta.push(rng.gen_range(-s..=s));
                    }
                }
                theta
            }
            _ => vec![0.0; self.param_dim()],
        }
    }
}

/// `u = −K x`, `K` row-major in θ.
pub fn linear_policy<S: Scalar>(x: &[S], theta: &[S], control_dim: usize) -> Vec<S> {
    let n = x.len();
    (0..control_dim)
        .map(|j| {
            let zero = x[0].lift(0.0);
            -S::affine(&theta[j * n..(j + 1) * n], x, zero)
        })
        .collect()
}

/// `u = k_p·e_p + k_d·e_v` for one actuated degree of freedom.
pub fn pd_policy<S: Scalar>(position_error: S, velocity_error: S, kp: S, kd: S) -> S {
    kp * position_error + kd * velocity_error
}

/// Σ (n_i·n_{i+1} + n_{i+1}) over consecutive layers.
pub fn param_count(arch: &[usize]) -> Result<usize, ControllerError> {
    if arch.is_empty() || arch.contains(&0) {
        return Err(ControllerError::Architecture(arch.to_vec()));
    }
    Ok(arch.windows(2).map(|w| w[0] * w[1] + w[1]).sum())
}

pub fn mlp_policy<S: Scalar>(x: &[S], theta: &[S], arch: &[usize], u_max: f64) -> Result<Vec<S>, ControllerError> {
    let expected = param_count(arch)?;
    if theta.len() != expected {
        return Err(ControllerError::ParamDim { expected, got: theta.len() });
    }
    if x.len() != arch[0] {
        return Err(ControllerError::StateDim { expected: arch[0], got: x.len() });
    }
    let layers = arch.len() - 1;
    let mut offset = 0;
    let mut h = x.to_vec();
    for (l, w) in arch.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let weights = &theta[offset..offset + n_in * n_out];
        let biases = &theta[offset + n_in * n_out..offset + n_in * n_out + n_out];
        offset += n_in * n_out + n_out;
        let z: Vec<S> = (0..n_out).map(|j| S::affine(&weights[j * n_in..(j + 1) * n_in], &h, biases[j])).collect();
        h = if l + 1 < layers {
            z.into_iter().map(Scalar::tanh).collect()
        } else {
            z.into_iter().map(|z| z.tanh() * u_max).collect()
        };
    }
    Ok(h)
}
