//! Every update strategy on the same mismatched cart-pole, several seeds.

use nalgebra::DMatrix;

use cotune::controllers::{linearize, synthesize_lqr};
use cotune::dynamics::{Integrator, Model, ModelKind, ModelParams, System, TunableMask};
use cotune::harness::median;
use cotune::objectives::TaskSpec;
use cotune::tuner::{cotune, Strategy, TuningConfig, TuningProblem};

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
        mask: TunableMask::masses(kind),
    };
    let truth = beta.scale_masses(1.3).unwrap();

    println!("{:<16} {:>10} {:>10} {:>8}", "strategy", "nominal", "best", "updates");
    for strategy in Strategy::ALL {
        let mut best = Vec::new();
        let mut nominal_j = Vec::new();
        let mut updates = 0;
        for seed in 0..5 {
            let mut system = System::new(truth.clone(), vec![1e-3; 4], Integrator::Rk4, seed).unwrap();
            let cfg = TuningConfig { strategy, seed, ..Default::default() };
            let report = cotune(&mut system, &problem, &beta, &nominal.theta, &cfg).unwrap();
            best.push(report.j_best);
            nominal_j.push(report.j_nominal());
            updates += report.total_updates();
        }
        println!("{:<16} {:>10.5} {:>10.5} {:>8}", strategy.as_str(), median(&nominal_j), median(&best), updates / 5);
    }
}
