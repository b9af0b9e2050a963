//! Relative improvement of co-tuning over θ-only tuning as the mass
//! mismatch grows.

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

    println!("{:>7} {:>16} {:>16}", "factor", "split_alternate", "difftune_model");
    for factor in [1.15, 1.30, 1.45, 1.60] {
        let truth = beta.scale_masses(factor).unwrap();
        let reduction = |strategy| {
            let r: Vec<f64> = (0..5)
                .map(|seed| {
                    let mut system = System::new(truth.clone(), vec![1e-3; 4], Integrator::Rk4, seed).unwrap();
                    let cfg = TuningConfig { strategy, seed, ..Default::default() };
                    let report = cotune(&mut system, &problem, &beta, &nominal.theta, &cfg).unwrap();
                    1.0 - report.j_best / report.j_nominal()
                })
                .collect();
            median(&r)
        };
        println!("{factor:>7.2} {:>16.3} {:>16.3}", reduction(Strategy::SplitAlternate), reduction(Strategy::DifftuneModel));
    }
}
