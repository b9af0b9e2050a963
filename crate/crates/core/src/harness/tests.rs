use super::*;
use crate::dynamics::ModelKind;
use crate::objectives::j_task_sys;
use crate::tuner::{Strategy, DEFAULT_LR_THETA, DEFAULT_LR_THETA_MLP};

const MINIMAL: &str = r#"
id = "minimal"

[system]
kind = "cartpole"
factors = { cart_mass = 1.3, pole_mass = 1.3 }

[controller]
kind = "lqr"
q = [1.0, 1.0, 1.0, 1.0]
r = [10.0]

[task]
x0 = [0.0, 0.2, 0.0, 0.0]
horizon = 250
dt = 0.02
"#;

fn minimal() -> ExperimentConfig {
    ExperimentConfig::from_toml(MINIMAL).unwrap()
}

fn small(strategies: Vec<Strategy>, seeds: Vec<u64>) -> ExperimentConfig {
    let mut cfg = minimal();
    cfg.task.horizon = 100;
    cfg.tuning.outer_iterations = 3;
    cfg.tuning.epochs = 20;
    cfg.system.noise_std = vec![1e-3; 4];
    cfg.run.strategies = strategies;
    cfg.run.seeds = seeds;
    cfg
}

fn quiet() -> RunOptions {
    RunOptions { quiet: true }
}

#[test]
fn minimal_config_fills_defaults() {
    let cfg = minimal();
    assert_eq!((cfg.tuning.outer_iterations, cfg.tuning.epochs), (5, 100));
    assert_eq!((cfg.tuning.w_task, cfg.tuning.w_sysid), (1.0, 1.0));
    assert_eq!(cfg.tuning.lr_theta, DEFAULT_LR_THETA);
    assert_eq!(cfg.run.strategies, vec![Strategy::SplitAlternate]);
    assert_eq!(cfg.run.seeds, vec![0]);
    assert_eq!(cfg.mask().unwrap(), crate::dynamics::TunableMask::masses(ModelKind::Cartpole));
}

#[test]
fn mass_factor_scales_the_true_masses() {
    let cfg = minimal();
    let nominal = cfg.nominal_params().unwrap();
    let truth = cfg.true_params().unwrap();
    assert_eq!(truth.get("cart_mass").unwrap(), 1.3 * nominal.get("cart_mass").unwrap());
    assert_eq!(truth.get("pole_mass").unwrap(), 1.3 * nominal.get("pole_mass").unwrap());
    assert_eq!(truth.get("pole_half_length"), nominal.get("pole_half_length"));
}

#[test]
fn unknown_keys_are_rejected_by_name() {
    let top = format!("foo = 1\n{MINIMAL}");
    let err = ExperimentConfig::from_toml(&top).unwrap_err();
    assert!(err.to_string().contains("foo"), "{err}");
    assert!(err.is_validation());

    let nested = MINIMAL.replace("horizon = 250", "horizon = 250\nfoo = 2");
    let err = ExperimentConfig::from_toml(&nested).unwrap_err();
    assert!(err.to_string().contains("foo"), "{err}");

    let tuning = format!("{MINIMAL}\n[tuning]\nlearning_rate = 0.1\n");
    assert!(ExperimentConfig::from_toml(&tuning).unwrap_err().to_string().contains("learning_rate"));
}

#[test]
fn syntax_errors_report_the_line() {
    let broken = MINIMAL.replace("dt = 0.02", "dt = = 0.02");
    let expected = broken.lines().position(|l| l.contains("= =")).unwrap() + 1;
    match ExperimentConfig::from_toml(&broken).unwrap_err() {
        HarnessError::Parse { line, .. } => assert_eq!(line, Some(expected)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn validation_lists_every_violation_with_its_path() {
    let text = MINIMAL
        .replace("cart_mass = 1.3", "cart_mass = -1.3")
        .replace("x0 = [0.0, 0.2, 0.0, 0.0]", "x0 = [0.0, 0.2]")
        .replace("dt = 0.02", "dt = 0.5")
        .replace("r = [10.0]", "r = [0.0]");
    let HarnessError::Validation(v) = ExperimentConfig::from_toml(&text).unwrap_err() else { panic!("expected validation") };
    for path in ["system.factors.cart_mass", "task.x0", "task.dt", "controller.r"] {
        assert!(v.iter().any(|m| m.starts_with(path)), "{path} missing from {v:?}");
    }
}

#[test]
fn negative_nominal_mass_names_the_field() {
    let text = format!("{MINIMAL}\n[model]\nparams = {{ pole_mass = -0.1 }}\n");
    let HarnessError::Validation(v) = ExperimentConfig::from_toml(&text).unwrap_err() else { panic!("expected validation") };
    assert!(v.iter().any(|m| m.starts_with("model.params.pole_mass")), "{v:?}");
}

#[test]
fn zero_valued_tunable_entry_is_rejected() {
    let text = format!("{MINIMAL}\n[model]\ntunable = [\"cart_friction\"]\n");
    let HarnessError::Validation(v) = ExperimentConfig::from_toml(&text).unwrap_err() else { panic!("expected validation") };
    assert!(v.iter().any(|m| m.starts_with("model.tunable")), "{v:?}");
}

#[test]
fn config_round_trips_through_toml() {
    for (name, _) in CANNED {
        let cfg = canned_config(name).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again, "{name}");
    }
}

#[test]
fn mlp_controller_defaults_to_the_mlp_rate() {
    let cfg = canned_config("fig5d_mlp").unwrap();
    assert_eq!(cfg.tuning.lr_theta, DEFAULT_LR_THETA_MLP);
    let text = format!("{}\n[tuning]\nlr_theta = 0.05\n", include_str!("../../configs/fig5d_mlp.toml"));
    assert_eq!(ExperimentConfig::from_toml(&text).unwrap().tuning.lr_theta, 0.05);
    let ControllerConfig::Mlp { hidden, .. } = &cfg.controller else { panic!("expected mlp") };
    assert_eq!(mlp_arch(ModelKind::Cartpole, hidden), vec![4, 32, 32, 1]);
}

#[test]
fn every_figure_resolves() {
    assert_eq!(figure_configs("fig8").unwrap().len(), 7);
    for fig in ["fig5a", "fig5b", "fig5d"] {
        assert_eq!(figure_configs(fig).unwrap().len(), 1);
    }
    assert!(matches!(figure_configs("fig9"), Err(HarnessError::UnknownFigure(_))));
    let all = canned_config("fig8_all").unwrap();
    assert_eq!(all.mask().unwrap().count(), 5);
}

#[test]
fn single_cell_run_records_l_plus_one_rollouts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = minimal();
    cfg.run.seeds = vec![0];
    let outcome = run_experiment(&cfg, dir.path(), quiet()).unwrap();
    assert_eq!(outcome.rows.len(), 6);
    assert_eq!(outcome.rows.iter().map(|r| r.iter).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4, 5]);
    let report = outcome.cells[0].report.as_ref().unwrap();
    assert_eq!(report.system_rollouts, 6);
    assert_eq!(outcome.rows.last().unwrap().term_reason, "final");
}

#[test]
fn nominal_row_is_shared_by_every_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Strategy::ALL.to_vec(), vec![0, 1]);
    let outcome = run_experiment(&cfg, dir.path(), quiet()).unwrap();
    for seed in [0, 1] {
        let nominal: Vec<f64> =
            outcome.rows.iter().filter(|r| r.seed == seed && r.iter == 0).map(|r| r.j_task_sys.unwrap()).collect();
        assert_eq!(nominal.len(), 5);
        assert!(nominal.iter().all(|j| *j == nominal[0]), "{nominal:?}");
    }
}

#[test]
fn reruns_write_identical_csv() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = small(vec![Strategy::SplitAlternate, Strategy::Combined], vec![0, 3]);
    run_experiment(&cfg, a.path(), quiet()).unwrap();
    run_experiment(&cfg, b.path(), quiet()).unwrap();
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join(RESULTS_FILE)).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn results_header_is_fixed() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&small(vec![Strategy::DifftuneSystem], vec![0]), dir.path(), quiet()).unwrap();
    let text = std::fs::read_to_string(dir.path().join(RESULTS_FILE)).unwrap();
    assert_eq!(text.lines().next().unwrap(), "experiment,strategy,seed,iter,j_task_sys,j_sysid,term_reason,wall_ms");
    assert_eq!(RESULTS_HEADER, "experiment,strategy,seed,iter,j_task_sys,j_sysid,term_reason,wall_ms");
}

#[test]
fn trajectory_dumps_reproduce_the_recorded_scores() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(vec![Strategy::SplitAlternate], vec![2]);
    let outcome = run_experiment(&cfg, dir.path(), quiet()).unwrap();
    let task = cfg.task.spec();
    for row in &outcome.rows {
        let path = cell_dir(dir.path(), Strategy::SplitAlternate, 2).join(format!("iter_{}.csv", row.iter));
        let states = read_trajectory_states(&path).unwrap();
        let rescored = j_task_sys(&states, &task).unwrap();
        let recorded = row.j_task_sys.unwrap();
        assert!((rescored - recorded).abs() <= 1e-9 * recorded, "{rescored} vs {recorded}");
    }
    let report = std::fs::read_to_string(cell_dir(dir.path(), Strategy::SplitAlternate, 2).join("report.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(json["iterations"].as_array().unwrap().len(), 4);
    assert!(json["iterations"][1]["beta"].is_array());
}

#[test]
fn failed_synthesis_becomes_an_error_row() {
    let dir = tempfile::tempdir().unwrap();
    let text = include_str!("../../configs/fig5d_mlp.toml")
        .replace("synthesis = { threshold = 10.0 }", "synthesis = { threshold = 1e-12, epochs = 2 }")
        .replace("seeds = [0, 1, 2, 3, 4]", "seeds = [0]");
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let outcome = run_experiment(&cfg, dir.path(), quiet()).unwrap();
    assert_eq!(outcome.rows.len(), 2);
    assert!(outcome.rows.iter().all(|r| r.is_error() && r.j_task_sys.is_none()));
    let back = read_results(&dir.path().join(RESULTS_FILE)).unwrap();
    assert_eq!(back, outcome.rows);
}

fn row(experiment: &str, strategy: &str, seed: u64, iter: usize, j: f64) -> ResultRow {
    ResultRow {
        experiment: experiment.into(),
        strategy: strategy.into(),
        seed,
        iter,
        j_task_sys: Some(j),
        j_sysid: None,
        term_reason: String::new(),
        wall_ms: 0,
    }
}

#[test]
fn single_run_reduction_formula() {
    let rows = vec![row("e", "split_alternate", 0, 0, 2.0), row("e", "split_alternate", 0, 1, 0.5), row("e", "split_alternate", 0, 2, 0.8)];
    let s = summarize(&rows).unwrap();
    assert_eq!(s.strategies.len(), 1);
    let st = &s.strategies[0];
    assert_eq!(st.median_best, 0.5);
    assert_eq!(st.median_reduction, (2.0 - 0.5) / 2.0);
    assert_eq!(st.iqr_best, 0.0);
}

#[test]
fn win_rates_count_ties_half() {
    let rows = vec![
        row("e", "a", 0, 0, 1.0),
        row("e", "a", 0, 1, 0.5),
        row("e", "b", 0, 0, 1.0),
        row("e", "b", 0, 1, 0.7),
        row("e", "a", 1, 0, 1.0),
        row("e", "a", 1, 1, 0.6),
        row("e", "b", 1, 0, 1.0),
        row("e", "b", 1, 1, 0.6),
    ];
    let s = summarize(&rows).unwrap();
    assert_eq!(s.get("a").unwrap().win_rate["b"], 0.75);
    assert_eq!(s.get("b").unwrap().win_rate["a"], 0.25);
    let table = s.to_table();
    assert!(table.contains("win_vs_b"));
    assert!(s.to_csv().starts_with("strategy,runs,failed,median_best"));
}

#[test]
fn mixed_experiments_are_refused() {
    let rows = vec![row("e1", "a", 0, 0, 1.0), row("e2", "a", 0, 0, 1.0)];
    assert!(matches!(summarize(&rows), Err(HarnessError::MixedExperiments(_))));
    assert!(matches!(summarize(&[]), Err(HarnessError::NoResults)));
}

#[test]
fn quantiles_interpolate_linearly() {
    let v = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(quantile(&v, 0.5), 2.5);
    assert_eq!(quantile(&v, 0.25), 1.75);
    assert_eq!(quantile(&v, 0.75), 3.25);
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert!(quantile(&[], 0.5).is_nan());
}

#[test]
fn output_directory_precedence() {
    let mut cfg = minimal();
    std::env::remove_var(OUT_ENV);
    assert_eq!(resolve_out_dir(&cfg, None), std::path::PathBuf::from("results/minimal"));
    cfg.run.out = Some("from_config".into());
    assert_eq!(resolve_out_dir(&cfg, None), std::path::PathBuf::from("from_config"));
    assert_eq!(resolve_out_dir(&cfg, Some(std::path::Path::new("cli"))), std::path::PathBuf::from("cli"));
    std::env::set_var(OUT_ENV, "from_env");
    assert_eq!(resolve_out_dir(&cfg, Some(std::path::Path::new("cli"))), std::path::PathBuf::from("from_env"));
    std::env::remove_var(OUT_ENV);
}

#[test]
fn gradcheck_suite_passes() {
    let report = gradcheck_suite(4);
    assert!(report.passed(), "{report}");
    assert_eq!(report.cases.len(), 4 * 5);
}
