use nalgebra::DMatrix;

use crate::autodiff::Tape;
use crate::dynamics::{Model, ModelParams};

use super::{ControllerError, Policy, PolicyParams};

/// Equilibrium residual above which [`linearize`] refuses the point.
pub const EQUILIBRIUM_TOL: f64 = 1e-8;
pub const RICCATI_TOL: f64 = 1e-10;
pub const RICCATI_MAX_ITERS: usize = 10_000;

/// Discrete-time linearization `δx⁺ = A δx + B δu` about an equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub x_eq: Vec<f64>,
    pub u_eq: Vec<f64>,
}

/// Jacobians of one model step at `(x_eq, u_eq)`, one reverse sweep per
/// output row.
pub fn linearize(model: &Model, x_eq: &[f64], u_eq: &[f64], beta: &ModelParams) -> Result<LinearizedModel, ControllerError> {
    let n = model.state_dim();
    let m = model.kind.control_dim();
    if x_eq.len() != n || u_eq.len() != m {
        return Err(ControllerError::StateDim { expected: n, got: x_eq.len() });
    }
    let tape = Tape::new();
    let x = tape.leaves(x_eq)?;
    let u = tape.leaves(u_eq)?;
    let b: Vec<_> = beta.values().iter().map(|v| tape.constant(*v)).collect();
    let next = model.step(&x, &u, &b);
    tape.check()?;

    let residual = next.iter().zip(x_eq).map(|(f, x)| (f.value() - x).powi(2)).sum::<f64>().sqrt();
    if residual > EQUILIBRIUM_TOL {
        return Err(ControllerError::NotEquilibrium(residual));
    }

    let mut a = DMatrix::zeros(n, n);
    let mut bm = DMatrix::zeros(n, m);
    for (i, fi) in next.iter().enumerate() {
        let g = tape.backward(*fi)?;
        for (j, xj) in x.iter().enumerate() {
            a[(i, j)] = g.wrt(*xj);
        }
        for (j, uj) in u.iter().enumerate() {
            bm[(i, j)] = g.wrt(*uj);
        }
    }
    Ok(LinearizedModel { a, b: bm, x_eq: x_eq.to_vec(), u_eq: u_eq.to_vec() })
}

/// Stabilizing solution of the discrete algebraic Riccati equation.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub cost_to_go: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub iterations: usize,
}

/// Fixed-point iteration `P ← Q + Aᵀ(P − PB(R + BᵀPB)⁻¹BᵀP)A` from `P = Q`.
pub fn solve_dare(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<RiccatiSolution, ControllerError> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(ControllerError::MatrixShape);
    }
    let gain_of = |p: &DMatrix<f64>| -> Result<DMatrix<f64>, ControllerError> {
        let s = r + b.transpose() * p * b;
        let s_inv = s.try_inverse().ok_or(ControllerError::Singular)?;
        Ok(s_inv * b.transpose() * p * a)
    };
    let mut p = q.clone();
    for iter in 1..=RICCATI_MAX_ITERS {
        let k = gain_of(&p)?;
        // P − PB(R + BᵀPB)⁻¹BᵀPA = P(A − BK) folded into Aᵀ(·)
        let next = q + a.transpose() * (&p * a - &p * b * &k);
        let next = (&next + next.transpose()) * 0.5;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(ControllerError::RiccatiDiverged { iterations: iter, delta: f64::INFINITY });
        }
        let delta = (&next - &p).amax();
        p = next;
        if delta < RICCATI_TOL {
            let gain = gain_of(&p)?;
            return Ok(RiccatiSolution { cost_to_go: p, gain, iterations: iter });
        }
        if iter == RICCATI_MAX_ITERS {
            return Err(ControllerError::RiccatiDiverged { iterations: iter, delta });
        }
    }
    unreachable!()
}

/// Infinite-horizon discrete LQR gain packed as linear-policy parameters.
pub fn synthesize_lqr(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<PolicyParams, ControllerError> {
    let sol = solve_dare(a, b, q, r)?;
    let (m, n) = sol.gain.shape();
    let theta = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| sol.gain[(i, j)]).collect();
    Ok(PolicyParams { layout: Policy::linear(n, m), theta })
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// `A − B·K` for a linear policy θ.
pub fn closed_loop(lin: &LinearizedModel, theta: &[f64]) -> DMatrix<f64> {
    let (n, m) = (lin.a.nrows(), lin.b.ncols());
    let k = DMatrix::from_row_slice(m, n, theta);
    &lin.a - &lin.b * k
}
