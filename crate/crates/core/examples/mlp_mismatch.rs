//! Train an MLP controller on the nominal cart-pole, then transfer it to a
//! system four times as heavy, where it initially fails.

use cotune::controllers::{synthesize_mlp_nominal, SynthesisSettings};
use cotune::dynamics::{Integrator, Model, ModelKind, ModelParams, System, TunableMask};
use cotune::objectives::TaskSpec;
use cotune::tuner::{cotune, Strategy, TuningConfig, TuningProblem, DEFAULT_LR_THETA_MLP};

fn main() {
    let kind = ModelKind::Cartpole;
    let model = Model::euler(kind, 0.02).unwrap();
    let beta = ModelParams::defaults(kind);
    let mut task = TaskSpec::stabilize(vec![0.0, 0.05, 0.0, 0.0], 250, 0.02);
    task.state_weights = vec![1000.0; 4];

    let settings = SynthesisSettings { threshold: 10.0, ..Default::default() };
    let nominal = synthesize_mlp_nominal(&model, &beta, &task, &[4, 32, 32, 1], 10.0, &settings).unwrap();
    println!("synthesized MLP with {} parameters", nominal.theta.len());

    let problem = TuningProblem { model, policy: nominal.layout.clone(), task, mask: TunableMask::masses(kind) };
    for strategy in [Strategy::SplitAlternate, Strategy::DifftuneModel] {
        let mut system = System::new(beta.scale_masses(4.0).unwrap(), vec![1e-3; 4], Integrator::Rk4, 0).unwrap();
        let cfg = TuningConfig { strategy, lr_theta: DEFAULT_LR_THETA_MLP, ..Default::default() };
        let report = cotune(&mut system, &problem, &beta, &nominal.theta, &cfg).unwrap();
        let trace: Vec<String> = report.iterations.iter().map(|it| format!("{:.1}", it.j_task_sys)).collect();
        println!("{strategy}: J_task(sys) per iteration [{}]", trace.join(", "));
        if let Some(last) = report.iterations.iter().rev().find(|it| !it.phases.is_empty()) {
            println!("  masses after tuning ({:.3}, {:.3})", last.beta[0], last.beta[1]);
        }
    }
}
