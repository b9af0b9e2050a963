use std::fs;
use std::process::Command;

fn cotune() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cotune"));
    cmd.env_remove("COTUNE_OUT");
    cmd
}

const SMALL: &str = r#"
id = "cli_small"

[system]
kind = "cartpole"
factors = { cart_mass = 1.3, pole_mass = 1.3 }
noise_std = [0.001, 0.001, 0.001, 0.001]

[controller]
kind = "lqr"
q = [1.0, 1.0, 1.0, 1.0]
r = [10.0]

[task]
x0 = [0.0, 0.2, 0.0, 0.0]
horizon = 100
dt = 0.02

[tuning]
outer_iterations = 2
epochs = 10

[run]
strategies = ["split_alternate", "difftune_model"]
seeds = [0, 1]
"#;

#[test]
fn run_writes_results_and_compare_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    fs::write(&config, SMALL).unwrap();
    let out = dir.path().join("out");
    let status = cotune().arg("run").arg(&config).arg("--out").arg(&out).arg("--quiet").status().unwrap();
    assert!(status.success());

    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(results.starts_with("experiment,strategy,seed,iter"));
    // 2 strategies × 2 seeds × 3 iterations
    assert_eq!(results.lines().count(), 1 + 12);
    assert!(out.join("runs/split_alternate/seed_1/report.json").exists());
    assert!(out.join("runs/split_alternate/seed_1/iter_2.csv").exists());

    let compare = cotune().arg("compare").arg(&out).output().unwrap();
    assert!(compare.status.success());
    let table = String::from_utf8(compare.stdout).unwrap();
    assert!(table.contains("split_alternate") && table.contains("difftune_model"));
}

#[test]
fn env_var_overrides_out_flag() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    fs::write(&config, SMALL).unwrap();
    let env_out = dir.path().join("from_env");
    let flag_out = dir.path().join("from_flag");
    let status = cotune()
        .env("COTUNE_OUT", &env_out)
        .args(["run", "--quiet", "--seed-override", "3"])
        .arg(&config)
        .arg("--out")
        .arg(&flag_out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(env_out.join("results.csv").exists());
    assert!(!flag_out.exists());
    assert!(env_out.join("runs/difftune_model/seed_3").exists());
}

#[test]
fn invalid_config_exits_with_one_and_names_fields() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    let bad = SMALL.replace("horizon = 100", "horizon = 0").replace("dt = 0.02", "dt = -0.02");
    fs::write(&config, bad).unwrap();
    let out = cotune().arg("run").arg(&config).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("task.horizon"), "{err}");
    assert!(err.contains("task.dt"), "{err}");
}

#[test]
fn unknown_key_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, SMALL.replace("horizon = 100", "horizon = 100\nhorizn = 100")).unwrap();
    let out = cotune().arg("run").arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("line"));
}

#[test]
fn compare_on_empty_dir_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = cotune().arg("compare").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_figure_is_rejected() {
    let out = cotune().args(["reproduce", "fig9"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gradcheck_passes() {
    let out = cotune().args(["gradcheck", "--seeds", "3"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("0 failed"));
}
