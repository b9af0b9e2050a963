//! Transfer a cart-pole LQR controller to a system with 30% heavier cart
//! and pole by co-tuning masses and gains.

use nalgebra::DMatrix;

use cotune::controllers::{linearize, synthesize_lqr};
use cotune::dynamics::{Integrator, Model, ModelKind, ModelParams, System, TunableMask};
use cotune::objectives::TaskSpec;
use cotune::tuner::{cotune, Strategy, TuningConfig, TuningProblem};

fn main() {
    let kind = ModelKind::Cartpole;
    let model = Model::euler(kind, 0.02).unwrap();
    let beta = ModelParams::defaults(kind);
    let lin = linearize(&model, &[0.0; 4], &[0.0], &beta).unwrap();
    let nominal = synthesize_lqr(&lin.a, &lin.b, &DMatrix::identity(4, 4), &DMatrix::from_element(1, 1, 10.0)).unwrap();
    println!("nominal K = {:.4?}", nominal.theta);

    let truth = beta.scale_masses(1.3).unwrap();
    let mut system = System::new(truth.clone(), vec![1e-3; 4], Integrator::Rk4, 0).unwrap();
    let problem = TuningProblem {
        model,
        policy: nominal.layout.clone(),
        task: TaskSpec::stabilize(vec![0.0, 0.2, 0.0, 0.0], 250, 0.02),
        mask: TunableMask::masses(kind),
    };
    let cfg = TuningConfig { strategy: Strategy::SplitAlternate, ..Default::default() };
    let report = cotune(&mut system, &problem, &beta, &nominal.theta, &cfg).unwrap();

    for it in &report.iterations {
        println!(
            "l={} J_task(sys)={:.5} masses=({:.4}, {:.4}) {}",
            it.iteration,
            it.j_task_sys,
            it.beta[0],
            it.beta[1],
            it.termination()
        );
    }
    println!("true masses = ({}, {})", truth.values()[0], truth.values()[1]);
    println!(
        "best J {:.5} at l={} ({:.1}% below nominal), tuned K = {:.4?}",
        report.j_best,
        report.best_index,
        100.0 * (1.0 - report.j_best / report.j_nominal()),
        report.theta_best
    );
}
