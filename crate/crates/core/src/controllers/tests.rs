use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;

use super::*;
use crate::autodiff::{grad_check, Tape};
use crate::dynamics::{Model, ModelKind, ModelParams};
use crate::objectives::{j_task_model, Reference, TaskKind, TaskSpec};

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn cartpole_lin() -> LinearizedModel {
    let model = Model::euler(ModelKind::Cartpole, 0.02).unwrap();
    linearize(&model, &[0.0; 4], &[0.0], &ModelParams::defaults(ModelKind::Cartpole)).unwrap()
}

/// `point` is `x` followed by θ; checks ∂u₀/∂x and ∂u₀/∂θ.
fn first_control_grad_ok(policy: &Policy, point: &[f64], state_dim: usize) -> bool {
    grad_check(|_, v| policy.eval(&v[..state_dim], &v[state_dim..]).unwrap()[0], point, 1e-6, 1e-4)
}

#[test]
fn linear_policy_examples() {
    let p = Policy::linear(4, 1);
    assert_eq!(p.eval(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![-10.0]);
    assert_eq!(p.eval(&[0.3, -1.0, 2.0, 5.0], &[0.0; 4]).unwrap(), vec![0.0]);
    assert_eq!(p.eval(&[0.0; 4], &[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.0]);
    assert_eq!(p.eval(&[1.0; 3], &[1.0; 4]), Err(ControllerError::StateDim { expected: 4, got: 3 }));
    assert_eq!(p.eval(&[1.0; 4], &[1.0; 5]), Err(ControllerError::ParamDim { expected: 4, got: 5 }));
}

#[test]
fn pd_policy_examples() {
    let p = Policy::pd(vec![0], vec![1]);
    assert_eq!(p.eval(&[0.0, 0.0], &[3.0, 2.0]).unwrap(), vec![0.0]);
    // position error 0.5 below the target
    assert_eq!(p.eval(&[-0.5, 0.0], &[1.0, 0.0]).unwrap(), vec![0.5]);
    let tracking = Policy::Pd { position: vec![0], velocity: vec![1], target_position: vec![1.0], target_velocity: vec![0.2] };
    assert_eq!(tracking.eval(&[1.0, 0.2], &[5.0, 5.0]).unwrap(), vec![0.0]);

    let tape = Tape::new();
    let gains = tape.leaves(&[2.0, 0.5]).unwrap();
    let x = [tape.constant(0.25), tape.constant(-1.0)];
    let u = p.eval(&x, &gains).unwrap();
    let g = tape.backward(u[0]).unwrap();
    assert_eq!(g.wrt(gains[0]), -0.25);
    assert_eq!(g.wrt(gains[1]), 1.0);
}

#[test]
fn pd_projection_clamps_negative_gains() {
    let p = Policy::pd(vec![0], vec![1]);
    let mut theta = vec![-1.0, 0.5];
    p.project(&mut theta);
    assert_eq!(theta, vec![0.0, 0.5]);
    let mut linear = vec![-1.0, 0.5];
    Policy::linear(2, 1).project(&mut linear);
    assert_eq!(linear, vec![-1.0, 0.5]);
}

#[test]
fn param_count_examples() {
    assert_eq!(param_count(&[4, 32, 32, 1]), Ok(1249));
    assert_eq!(param_count(&[4, 1]), Ok(5));
    assert_eq!(param_count(&[1, 1]), Ok(2));
    assert!(param_count(&[]).is_err());
    assert!(param_count(&[4, 0, 1]).is_err());
    assert_eq!(Policy::mlp(vec![4, 32, 32, 1], 10.0).unwrap().param_dim(), 1249);
    assert!(Policy::mlp(vec![4], 10.0).is_err());
    assert!(Policy::mlp(vec![4, 1], 0.0).is_err());
}

#[test]
fn mlp_hand_evaluated_networks() {
    let single = Policy::mlp(vec![1, 1], 10.0).unwrap();
    assert_relative_eq!(single.eval(&[0.3], &[1.0, 0.0]).unwrap()[0], 10.0 * 0.3f64.tanh(), max_relative = 1e-15);
    let two = Policy::mlp(vec![1, 1, 1], 2.0).unwrap();
    let expected = 2.0 * (0.3f64.tanh() * 1.0 + 0.0).tanh();
    assert_relative_eq!(two.eval(&[0.3], &[1.0, 0.0, 1.0, 0.0]).unwrap()[0], expected, max_relative = 1e-15);
    let with_bias = 2.0 * (-0.5 * (0.7 * 0.3f64 + 0.1).tanh() + 0.2).tanh();
    assert_relative_eq!(two.eval(&[0.3], &[0.7, 0.1, -0.5, 0.2]).unwrap()[0], with_bias, max_relative = 1e-15);
}

#[test]
fn mlp_zero_weights_give_zero_control() {
    let p = Policy::mlp(vec![4, 32, 32, 1], 10.0).unwrap();
    assert_eq!(p.eval(&[0.4, -1.0, 2.0, 3.0], &vec![0.0; 1249]).unwrap(), vec![0.0]);
    assert!(p.eval(&[0.0; 4], &vec![0.0; 1248]).is_err());
}

#[test]
fn mlp_init_is_seeded_and_scaled() {
    let p = Policy::mlp(vec![4, 32, 32, 1], 10.0).unwrap();
    let a = p.init_params(5);
    assert_eq!(a, p.init_params(5));
    assert_ne!(a, p.init_params(6));
    assert_eq!(a.len(), 1249);
    // first layer: fan_in 4 → |w| ≤ 0.5; later layers: fan_in 32
    assert!(a[..160].iter().all(|w| w.abs() <= 0.5));
    assert!(a[160..].iter().all(|w| w.abs() <= 1.0 / 32f64.sqrt()));
}

#[test]
fn mlp_gradients_match_differences() {
    let p = Policy::mlp(vec![4, 8, 8, 1], 10.0).unwrap();
    let theta = p.init_params(1);
    let x = [0.1, -0.2, 0.3, 0.05];
    let point: Vec<f64> = x.iter().chain(&theta).copied().collect();
    assert!(first_control_grad_ok(&p, &point, 4));
}

#[test]
fn linearize_msd_matches_hand_derived_euler() {
    let dt = 0.02;
    let model = Model::euler(ModelKind::Msd, dt).unwrap();
    let beta = ModelParams::new(ModelKind::Msd, vec![1.0, 1.0, 0.0]).unwrap();
    let lin = linearize(&model, &[0.0, 0.0], &[0.0], &beta).unwrap();
    let a = DMatrix::from_row_slice(2, 2, &[1.0 - dt * dt, dt, -dt, 1.0]);
    let b = DMatrix::from_row_slice(2, 1, &[dt * dt, dt]);
    assert!((&lin.a - a).amax() < 1e-15);
    assert!((&lin.b - b).amax() < 1e-15);
}

#[test]
fn linearize_double_integrator() {
    let dt = 0.05;
    let model = Model::euler(ModelKind::Msd, dt).unwrap();
    // a unit mass with neither spring nor damper is a double integrator
    let beta = ModelParams::new(ModelKind::Msd, vec![1.0, 0.0, 0.0]).unwrap();
    let lin = linearize(&model, &[0.7, 0.0], &[0.0], &beta).unwrap();
    assert!((&lin.a - DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0])).amax() < 1e-15);
    assert!((&lin.b - DMatrix::from_row_slice(2, 1, &[dt * dt, dt])).amax() < 1e-15);
}

#[test]
fn linearize_columns_match_differences() {
    let model = Model::euler(ModelKind::Cartpole, 0.02).unwrap();
    let beta = ModelParams::defaults(ModelKind::Cartpole).with("cart_friction", 0.3).unwrap().with("pole_friction", 0.02).unwrap();
    let lin = linearize(&model, &[0.0; 4], &[0.0], &beta).unwrap();
    let h = 1e-6;
    for j in 0..5 {
        let mut up = vec![0.0; 5];
        let mut down = vec![0.0; 5];
        up[j] = h;
        down[j] = -h;
        let f_up = model.step(&up[..4], &up[4..], beta.values());
        let f_down = model.step(&down[..4], &down[4..], beta.values());
        for i in 0..4 {
            let fd = (f_up[i] - f_down[i]) / (2.0 * h);
            let ad = if j < 4 { lin.a[(i, j)] } else { lin.b[(i, 0)] };
            assert!((fd - ad).abs() <= 1e-6, "({i},{j}): {ad} vs {fd}");
        }
    }
}

#[test]
fn linearize_rejects_non_equilibrium() {
    let model = Model::euler(ModelKind::Cartpole, 0.02).unwrap();
    let err = linearize(&model, &[0.0, 0.3, 0.0, 0.0], &[0.0], &ModelParams::defaults(ModelKind::Cartpole)).unwrap_err();
    assert!(matches!(err, ControllerError::NotEquilibrium(r) if r > 1e-3));
}

#[test]
fn scalar_riccati_has_golden_ratio_solution() {
    let sol = solve_dare(&scalar(1.0), &scalar(1.0), &scalar(1.0), &scalar(1.0)).unwrap();
    assert!((sol.cost_to_go[(0, 0)] - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-9);
    let k = synthesize_lqr(&scalar(1.0), &scalar(1.0), &scalar(1.0), &scalar(1.0)).unwrap();
    assert!((k.theta[0] - 0.6180339887).abs() < 1e-6);
    assert_eq!(k.layout, Policy::linear(1, 1));
}

#[test]
fn cheap_control_limit_is_deadbeat() {
    let k = synthesize_lqr(&scalar(1.5), &scalar(1.0), &scalar(1.0), &scalar(1e-8)).unwrap();
    assert!((k.theta[0] - 1.5).abs() < 1e-6, "{}", k.theta[0]);
}

#[test]
fn unstabilizable_pair_is_reported() {
    let err = solve_dare(&scalar(2.0), &scalar(0.0), &scalar(1.0), &scalar(1.0)).unwrap_err();
    assert!(matches!(err, ControllerError::RiccatiDiverged { .. }));
    assert_eq!(solve_dare(&scalar(1.0), &scalar(1.0), &DMatrix::identity(2, 2), &scalar(1.0)).unwrap_err(), ControllerError::MatrixShape);
}

#[test]
fn cartpole_lqr_stabilizes_the_linearization() {
    let lin = cartpole_lin();
    let open = spectral_radius(&lin.a);
    assert!(open > 1.0, "upright cart-pole should be open-loop unstable, got {open}");
    for r in [0.1, 1.0, 10.0] {
        let k = synthesize_lqr(&lin.a, &lin.b, &DMatrix::identity(4, 4), &scalar(r)).unwrap();
        let rho = spectral_radius(&closed_loop(&lin, &k.theta));
        assert!(rho < 1.0, "R={r}: {rho}");
    }
}

#[test]
fn lqr_gain_is_invariant_to_cost_scaling() {
    let lin = cartpole_lin();
    let q = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 0.5, 0.1]));
    let base = synthesize_lqr(&lin.a, &lin.b, &q, &scalar(3.0)).unwrap();
    for c in [0.01, 7.0, 100.0] {
        let scaled = synthesize_lqr(&lin.a, &lin.b, &(&q * c), &scalar(3.0 * c)).unwrap();
        for (a, b) in base.theta.iter().zip(&scaled.theta) {
            assert!((a - b).abs() <= 1e-8, "c={c}: {a} vs {b}");
        }
    }
}

fn msd_setpoint_task() -> TaskSpec {
    TaskSpec {
        kind: TaskKind::Track,
        x0: vec![0.0, 0.0],
        horizon: 100,
        dt: 0.05,
        reference: Reference::Constant(vec![1.0, 0.0]),
        state_weights: Vec::new(),
    }
}

#[test]
fn mlp_synthesis_on_msd_setpoint() {
    let model = Model::euler(ModelKind::Msd, 0.05).unwrap();
    let beta = ModelParams::defaults(ModelKind::Msd);
    let task = msd_setpoint_task();
    let arch = [2, 8, 1];
    let layout = Policy::mlp(arch.to_vec(), 10.0).unwrap();
    let j_init = j_task_model(&model, &layout, beta.values(), &layout.init_params(0), &task).unwrap();
    let settings = SynthesisSettings { epochs: 1500, threshold: 0.1 * j_init, seed: 0, ..Default::default() };
    let nominal = synthesize_mlp_nominal(&model, &beta, &task, &arch, 10.0, &settings).unwrap();
    let j_tuned = j_task_model(&model, &nominal.layout, beta.values(), &nominal.theta, &task).unwrap();
    assert!(j_tuned <= 0.1 * j_init, "{j_tuned} vs {j_init}");
    assert!(model.rollout(&nominal.layout, &nominal.theta, beta.values(), &task.x0, task.horizon).is_ok());

    let again = synthesize_mlp_nominal(&model, &beta, &task, &arch, 10.0, &settings).unwrap();
    assert_eq!(nominal, again);
}

#[test]
fn mlp_synthesis_reports_unreachable_threshold() {
    let model = Model::euler(ModelKind::Msd, 0.05).unwrap();
    let beta = ModelParams::defaults(ModelKind::Msd);
    let settings = SynthesisSettings { epochs: 5, threshold: 0.0, ..Default::default() };
    let err = synthesize_mlp_nominal(&model, &beta, &msd_setpoint_task(), &[2, 4, 1], 10.0, &settings).unwrap_err();
    assert!(matches!(err, ControllerError::SynthesisFailed { threshold, .. } if threshold == 0.0));
}

#[test]
fn curriculum_horizon_doubles_up_to_task_horizon() {
    let s = SynthesisSettings { initial_horizon: 50, stage_epochs: 10, ..Default::default() };
    let hs: Vec<usize> = [0, 9, 10, 20, 30, 40, 1000].iter().map(|&e| s.horizon_at(e, 250)).collect();
    assert_eq!(hs, vec![50, 50, 100, 200, 250, 250, 250]);
    assert_eq!(s.horizon_at(0, 30), 30);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn policy_gradients_match_differences(
        x in prop::collection::vec(-1.0f64..1.0, 4),
        k in prop::collection::vec(-5.0f64..5.0, 4),
        seed in 0u64..1000,
    ) {
        let point: Vec<f64> = x.iter().chain(&k).copied().collect();
        let linear_ok = first_control_grad_ok(&Policy::linear(4, 1), &point, 4);
        prop_assert!(linear_ok);
        let pd_ok = first_control_grad_ok(&Policy::pd(vec![0], vec![2]), &point[..6], 4);
        prop_assert!(pd_ok);
        let mlp = Policy::mlp(vec![4, 6, 1], 10.0).unwrap();
        let point: Vec<f64> = x.iter().copied().chain(mlp.init_params(seed)).collect();
        let mlp_ok = first_control_grad_ok(&mlp, &point, 4);
        prop_assert!(mlp_ok);
    }
}
