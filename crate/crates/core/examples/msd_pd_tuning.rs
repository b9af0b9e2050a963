//! PD regulation of a mass-spring-damper whose mass and damping differ
//! from the model.

use cotune::controllers::Policy;
use cotune::dynamics::{Integrator, Model, ModelKind, ModelParams, System, TunableMask};
use cotune::objectives::TaskSpec;
use cotune::tuner::{cotune, Strategy, TuningConfig, TuningProblem};

fn main() {
    let kind = ModelKind::Msd;
    let beta = ModelParams::defaults(kind);
    let truth = beta.perturbed(&[("mass", 1.3), ("damping", 1.5)]).unwrap();
    let problem = TuningProblem {
        model: Model::euler(kind, 0.02).unwrap(),
        policy: Policy::pd(vec![0], vec![1]),
        task: TaskSpec::stabilize(vec![1.0, 0.0], 200, 0.02),
        mask: TunableMask::from_names(kind, &["mass", "damping"]).unwrap(),
    };
    let gains = [2.0, 1.0];
    let mut system = System::new(truth.clone(), vec![1e-3; 2], Integrator::Rk4, 0).unwrap();
    let cfg = TuningConfig { strategy: Strategy::Combined, ..Default::default() };
    let report = cotune(&mut system, &problem, &beta, &gains, &cfg).unwrap();

    for it in &report.iterations {
        println!("l={} J={:.5} (kp, kd)=({:.3}, {:.3}) beta={:.3?}", it.iteration, it.j_task_sys, it.theta[0], it.theta[1], it.beta);
    }
    println!("true beta = {:?}", truth.values());
}
