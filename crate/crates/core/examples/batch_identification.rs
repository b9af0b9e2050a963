//! Identify the masses from several nominal-controller rollouts, then tune
//! on the identified model.

use nalgebra::DMatrix;

use cotune::controllers::{linearize, synthesize_lqr};
use cotune::dynamics::{CountingDeployment, Integrator, Model, ModelKind, ModelParams, System, TunableMask};
use cotune::objectives::TaskSpec;
use cotune::tuner::{sysid_then_tune, TuningConfig, TuningProblem};

fn main() {
    let kind = ModelKind::Cartpole;
    let model = Model::euler(kind, 0.02).unwrap();
    let beta = ModelParams::defaults(kind);
    let lin = linearize(&model, &[0.0; 4], &[0.0], &beta).unwrap();
    let nominal = synthesize_lqr(&lin.a, &lin.b, &DMatrix::identity(4, 4), &DMatrix::from_element(1, 1, 10.0)).unwrap();

    let mut task = TaskSpec::stabilize(vec![0.0, 0.2, 0.0, 0.0], 250, 0.02);
    task.state_weights = vec![10.0; 4];
    let problem = TuningProblem { model, policy: nominal.layout.clone(), task, mask: TunableMask::masses(kind) };

    let truth = beta.scale_masses(1.3).unwrap();
    let mut system = CountingDeployment::new(System::new(truth.clone(), vec![1e-3; 4], Integrator::Rk4, 0).unwrap());
    let report = sysid_then_tune(&mut system, &problem, &beta, &nominal.theta, &TuningConfig::default()).unwrap();

    let fitted = &report.iterations.last().unwrap().beta;
    for name in kind.mass_params() {
        let i = kind.param_index(name).unwrap();
        println!("{name}: nominal {:.4}, fitted {:.4}, true {:.4}", beta.values()[i], fitted[i], truth.values()[i]);
    }
    println!("deployment rollouts used: {}", system.rollouts());
    println!("J_task(sys): nominal {:.5}, tuned {:.5}", report.j_nominal(), report.j_best);
}
