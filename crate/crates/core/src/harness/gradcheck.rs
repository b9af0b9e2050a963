use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{central_difference, grad_check, relative_error};
use crate::controllers::{linearize, synthesize_lqr, Policy};
use crate::dynamics::{Integrator, Model, ModelKind, ModelParams};
use crate::objectives::{evaluate, j_task_model, Objective, TaskSpec};

/// Steps of each checked rollout.
pub const GRADCHECK_HORIZON: usize = 50;
pub const GRADCHECK_TOL: f64 = 1e-4;
const FLOOR: f64 = 1e-10;

/// Outcome of one gradient comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckCase {
    pub name: String,
    pub seed: u64,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradcheckReport {
    pub cases: Vec<GradcheckCase>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        !self.cases.is_empty() && self.cases.iter().all(|c| c.passed)
    }

    pub fn worst(&self) -> Option<&GradcheckCase> {
        self.cases.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let failed = self.cases.iter().filter(|c| !c.passed).count();
        writeln!(f, "{} cases, {} failed", self.cases.len(), failed)?;
        for c in self.cases.iter().filter(|c| !c.passed) {
            writeln!(f, "  FAIL {} seed {}: max relative error {:e}", c.name, c.seed, c.max_rel_error)?;
        }
        if let Some(w) = self.worst() {
            writeln!(f, "worst: {} seed {} ({:e})", w.name, w.seed, w.max_rel_error)?;
        }
        Ok(())
    }
}

fn max_rel(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic.iter().zip(numeric).map(|(a, n)| relative_error(*a, *n, FLOOR)).fold(0.0, f64::max)
}

fn random_params(kind: ModelKind, rng: &mut ChaCha8Rng) -> ModelParams {
    // positive frictions so every entry carries a gradient
    let values = kind
        .default_values()
        .iter()
        .map(|v| if *v > 0.0 { v * rng.gen_range(0.8..1.2) } else { rng.gen_range(0.05..0.2) })
        .collect();
    ModelParams::new(kind, values).expect("perturbed defaults stay valid")
}

fn nominal_gains(kind: ModelKind, model: &Model, beta: &ModelParams) -> Vec<f64> {
    let n = kind.state_dim();
    let lin = linearize(model, &vec![0.0; n], &[0.0], beta).expect("origin is an equilibrium");
    synthesize_lqr(&lin.a, &lin.b, &DMatrix::identity(n, n), &DMatrix::from_element(1, 1, 1.0)).expect("stabilizable").theta
}

/// ∇_θ and ∇_β of a 50-step task loss against central differences for one
/// model kind and seed. Odd seeds use RK4, even seeds semi-implicit Euler.
pub fn rollout_gradcheck(kind: ModelKind, seed: u64) -> Vec<GradcheckCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let integrator = if seed % 2 == 0 { Integrator::SemiImplicitEuler } else { Integrator::Rk4 };
    let dt = 0.02;
    let model = Model::new(kind, integrator, dt).expect("valid step");
    let beta = random_params(kind, &mut rng);
    let policy = Policy::linear(kind.state_dim(), 1);
    let theta: Vec<f64> = nominal_gains(kind, &model, &beta).iter().map(|k| k * rng.gen_range(0.9..1.1)).collect();
    let x0: Vec<f64> = match kind {
        ModelKind::Cartpole => vec![rng.gen_range(-0.1..0.1), rng.gen_range(-0.2..0.2), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)],
        ModelKind::Msd => vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
    };
    let task = TaskSpec::stabilize(x0, GRADCHECK_HORIZON, dt);
    let h = |p: f64| 1e-5 * p.abs().max(1.0);
    let label = |wrt: &str| format!("{kind}/{wrt}/{}", if seed % 2 == 0 { "euler" } else { "rk4" });

    let case = |name: String, analytic: Option<Vec<f64>>, numeric: Vec<f64>| {
        let err = analytic.map_or(f64::INFINITY, |a| max_rel(&a, &numeric));
        GradcheckCase { name, seed, max_rel_error: err, passed: err <= GRADCHECK_TOL }
    };
    let eval = evaluate(&model, &policy, beta.values(), &theta, &task, &task.x0, Objective::Task).ok();
    let loss_theta = |th: &[f64]| j_task_model(&model, &policy, beta.values(), th, &task).unwrap_or(f64::NAN);
    let loss_beta = |b: &[f64]| j_task_model(&model, &policy, b, &theta, &task).unwrap_or(f64::NAN);
    vec![
        case(label("theta"), eval.as_ref().map(|e| e.grad_theta.clone()), central_difference(loss_theta, &theta, h)),
        case(label("beta"), eval.as_ref().map(|e| e.grad_beta.clone()), central_difference(loss_beta, beta.values(), h)),
    ]
}

/// Finite-difference checks of the tape primitives on a composite function.
pub fn primitive_gradcheck(seed: u64) -> GradcheckCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point: Vec<f64> = (0..3).map(|_| rng.gen_range(0.5..2.0)).collect();
    let passed = grad_check(
        |_, v| {
            let (a, b, c) = (v[0], v[1], v[2]);
            (a * b).sin() + (b / c).cos() * a.tanh() + (a - c).exp() * b.ln() + (c * 0.5).square() - (-a) / (b + 1.0)
        },
        &point,
        1e-6,
        GRADCHECK_TOL,
    );
    GradcheckCase { name: "autodiff/primitives".into(), seed, max_rel_error: if passed { 0.0 } else { f64::INFINITY }, passed }
}

/// Primitive checks plus rollout checks for both model kinds at `seeds`
/// seeds.
pub fn gradcheck_suite(seeds: u64) -> GradcheckReport {
    let mut cases = Vec::new();
    for seed in 0..seeds {
        cases.push(primitive_gradcheck(seed));
        for kind in [ModelKind::Cartpole, ModelKind::Msd] {
            cases.extend(rollout_gradcheck(kind, seed));
        }
    }
    GradcheckReport { cases }
}

