//! θ-only tuning two ways: many gradient steps on the nominal model, or one
//! step per deployment rollout using sensitivities along the measured states.

use nalgebra::DMatrix;

use cotune::controllers::{linearize, synthesize_lqr};
use cotune::dynamics::{Integrator, Model, ModelKind, ModelParams, System, TunableMask};
use cotune::objectives::TaskSpec;
use cotune::tuner::{difftune_model_rollout, difftune_system_rollout, TuningConfig, TuningProblem};

fn main() {
    let kind = ModelKind::Cartpole;
    let model = Model::euler(kind, 0.02).unwrap();
    let beta = ModelParams::defaults(kind);
    let lin = linearize(&model, &[0.0; 4], &[0.0], &beta).unwrap();
    let nominal = synthesize_lqr(&lin.a, &lin.b, &DMatrix::identity(4, 4), &DMatrix::from_element(1, 1, 10.0)).unwrap();
    let problem = TuningProblem {
        model,
        policy: nominal.layout.clone(),
        task: TaskSpec::stabilize(vec![0.0, 0.2, 0.0, 0.0], 250, 0.02),
        mask: TunableMask::none(kind),
    };
    let truth = beta.scale_masses(1.3).unwrap();
    let cfg = TuningConfig { outer_iterations: 10, ..Default::default() };

    let mut system = System::new(truth.clone(), vec![1e-3; 4], Integrator::Rk4, 0).unwrap();
    let on_model = difftune_model_rollout(&mut system, &problem, &beta, &nominal.theta, &cfg).unwrap();
    let mut system = System::new(truth, vec![1e-3; 4], Integrator::Rk4, 0).unwrap();
    let on_system = difftune_system_rollout(&mut system, &problem, &beta, &nominal.theta, &cfg).unwrap();

    println!("{:>4} {:>14} {:>14}", "l", "model steps", "system steps");
    for (a, b) in on_model.iterations.iter().zip(&on_system.iterations) {
        println!("{:>4} {:>14.5} {:>14.5}", a.iteration, a.j_task_sys, b.j_task_sys);
    }
    println!("gradient updates: {} vs {}", on_model.total_updates(), on_system.total_updates());
}
