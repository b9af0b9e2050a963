use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controllers::{linearize, synthesize_lqr, synthesize_mlp_nominal, SynthesisSettings};
use crate::dynamics::{System, Trajectory};
use crate::tuner::{cotune, Strategy, TuningReport};

use super::config::{mlp_arch, ControllerConfig, ExperimentConfig};
use super::HarnessError;

/// Env var that overrides every other choice of output directory.
pub const OUT_ENV: &str = "COTUNE_OUT";

pub const RESULTS_FILE: &str = "results.csv";

/// Exact header of the results file.
pub const RESULTS_HEADER: &str = "experiment,strategy,seed,iter,j_task_sys,j_sysid,term_reason,wall_ms";

/// One outer iteration of one (strategy, seed) run. `iter = 0` is the
/// nominal controller's deployment score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub strategy: String,
    pub seed: u64,
    pub iter: usize,
    pub j_task_sys: Option<f64>,
    /// `J^sysId` of the updated model against this iteration's rollout.
    pub j_sysid: Option<f64>,
    /// Per-phase stop reasons, `final` for the scoring rollout, or `error: ..`.
    pub term_reason: String,
    pub wall_ms: u64,
}

impl ResultRow {
    pub fn is_error(&self) -> bool {
        self.term_reason.starts_with("error")
    }
}

/// Outcome of one (strategy, seed) cell.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub strategy: Strategy,
    pub seed: u64,
    pub report: Result<TuningReport, String>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub out_dir: PathBuf,
    pub rows: Vec<ResultRow>,
    pub cells: Vec<CellOutcome>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub quiet: bool,
}

/// Output directory: `COTUNE_OUT`, else `cli`, else the config's
/// `run.out`, else `results/<id>`.
pub fn resolve_out_dir(cfg: &ExperimentConfig, cli: Option<&Path>) -> PathBuf {
    if let Some(env) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(env);
    }
    cli.map(Path::to_path_buf)
        .or_else(|| cfg.run.out.clone())
        .unwrap_or_else(|| PathBuf::from("results").join(&cfg.id))
}

/// Nominal θ̃ for one run seed, designed on the nominal model.
pub fn synthesize_nominal(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<f64>, HarnessError> {
    let model = cfg.model()?;
    let beta = cfg.nominal_params()?;
    let kind = cfg.kind();
    Ok(match &cfg.controller {
        ControllerConfig::Lqr { q, r } => {
            let lin = linearize(&model, &vec![0.0; kind.state_dim()], &vec![0.0; kind.control_dim()], &beta)?;
            let q = DMatrix::from_diagonal(&q.clone().into());
            let r = DMatrix::from_diagonal(&r.clone().into());
            synthesize_lqr(&lin.a, &lin.b, &q, &r)?.theta
        }
        ControllerConfig::Mlp { hidden, u_max, synthesis } => {
            let settings = SynthesisSettings { seed: synthesis.seed.wrapping_add(seed), ..*synthesis };
            synthesize_mlp_nominal(&model, &beta, &cfg.task.spec(), &mlp_arch(kind, hidden), *u_max, &settings)?.theta
        }
        ControllerConfig::Pd { gains, .. } | ControllerConfig::Linear { gains } => gains.clone(),
    })
}

fn run_cell(cfg: &ExperimentConfig, strategy: Strategy, seed: u64, theta0: &[f64]) -> Result<TuningReport, HarnessError> {
    let problem = cfg.problem()?;
    let beta0 = cfg.nominal_params()?;
    let mut system = System::new(
        cfg.true_params()?,
        cfg.system.noise_std.clone(),
        cfg.system.integrator,
        cfg.system.seed.wrapping_add(seed),
    )?;
    Ok(cotune(&mut system, &problem, &beta0, theta0, &cfg.tuning_for(strategy, seed))?)
}

/// Result rows of one cell.
pub fn rows_for(experiment: &str, cell: &CellOutcome) -> Vec<ResultRow> {
    let base = |iter, j_task_sys, j_sysid, term_reason| ResultRow {
        experiment: experiment.to_string(),
        strategy: cell.strategy.as_str().to_string(),
        seed: cell.seed,
        iter,
        j_task_sys,
        j_sysid,
        term_reason,
        wall_ms: cell.wall_ms,
    };
    match &cell.report {
        Err(msg) => vec![base(0, None, None, format!("error: {msg}"))],
        Ok(report) => report
            .iterations
            .iter()
            .map(|it| {
                let reason = if it.phases.is_empty() { "final".to_string() } else { it.termination() };
                base(it.iteration, Some(it.j_task_sys), it.j_sysid_post, reason)
            })
            .collect(),
    }
}

fn io_err(path: &Path, e: impl ToString) -> HarnessError {
    HarnessError::Io { path: path.to_path_buf(), message: e.to_string() }
}

/// Writes rows with the fixed header.
pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    if rows.is_empty() {
        w.write_record(RESULTS_HEADER.split(',')).map_err(|e| io_err(path, e))?;
    }
    for row in rows {
        w.serialize(row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let header = r.headers().map_err(|e| io_err(path, e))?.iter().collect::<Vec<_>>().join(",");
    if header != RESULTS_HEADER {
        return Err(io_err(path, format!("unexpected header `{header}`")));
    }
    r.deserialize().collect::<Result<Vec<ResultRow>, _>>().map_err(|e| io_err(path, e))
}

/// Plain-text dump, one row per step: `t, x.., u..`; the last state has no
/// control.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), HarnessError> {
    let n = traj.states.first().map_or(0, Vec::len);
    let m = traj.controls.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    for (t, x) in traj.states.iter().enumerate() {
        let mut record = vec![t.to_string()];
        record.extend(x.iter().map(f64::to_string));
        match traj.controls.get(t) {
            Some(u) => record.extend(u.iter().map(f64::to_string)),
            None => record.extend(std::iter::repeat(String::new()).take(m)),
        }
        w.write_record(&record).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// States of a trajectory dump.
pub fn read_trajectory_states(path: &Path) -> Result<Vec<Vec<f64>>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let n = r.headers().map_err(|e| io_err(path, e))?.iter().filter(|h| h.starts_with('x')).count();
    let mut states = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| io_err(path, e))?;
        let x = record
            .iter()
            .skip(1)
            .take(n)
            .map(|v| v.parse::<f64>().map_err(|e| io_err(path, e)))
            .collect::<Result<Vec<_>, _>>()?;
        states.push(x);
    }
    Ok(states)
}

/// Directory holding the artifacts of one cell.
pub fn cell_dir(out: &Path, strategy: Strategy, seed: u64) -> PathBuf {
    out.join("runs").join(strategy.as_str()).join(format!("seed_{seed}"))
}

fn write_artifacts(out: &Path, cell: &CellOutcome, dump_trajectories: bool) -> Result<(), HarnessError> {
    let Ok(report) = &cell.report else { return Ok(()) };
    let dir = cell_dir(out, cell.strategy, cell.seed);
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let json = serde_json::to_string_pretty(report).map_err(|e| io_err(&dir, e))?;
    let path = dir.join("report.json");
    fs::write(&path, json).map_err(|e| io_err(&path, e))?;
    if dump_trajectories {
        for it in &report.iterations {
            if let Some(traj) = &it.trajectory {
                write_trajectory(&dir.join(format!("iter_{}.csv", it.iteration)), traj)?;
            }
        }
    }
    Ok(())
}

/// Runs every (strategy, seed) cell in parallel and writes `results.csv`,
/// the resolved config, per-cell `report.json` parameter snapshots and
/// trajectory dumps under `out`.
///
/// The nominal controller is synthesized once per seed and shared by all
/// strategies. A cell whose synthesis or tuning fails yields one error row.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, opts: RunOptions) -> Result<ExperimentOutcome, HarnessError> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let config_path = out.join("config.toml");
    fs::write(&config_path, cfg.to_toml()).map_err(|e| io_err(&config_path, e))?;

    let nominals: BTreeMap<u64, Result<Vec<f64>, String>> = cfg
        .run
        .seeds
        .par_iter()
        .map(|&seed| (seed, synthesize_nominal(cfg, seed).map_err(|e| e.to_string())))
        .collect();

    let grid: Vec<(Strategy, u64)> =
        cfg.run.strategies.iter().flat_map(|&s| cfg.run.seeds.iter().map(move |&seed| (s, seed))).collect();
    let cells: Vec<CellOutcome> = grid
        .par_iter()
        .map(|&(strategy, seed)| {
            let start = Instant::now();
            let report = match &nominals[&seed] {
                Ok(theta0) => run_cell(cfg, strategy, seed, theta0).map_err(|e| e.to_string()),
                Err(e) => Err(format!("nominal synthesis failed: {e}")),
            };
            let wall_ms = if cfg.run.timing { start.elapsed().as_millis() as u64 } else { 0 };
            if !opts.quiet {
                match &report {
                    Ok(r) => eprintln!("{} {strategy} seed {seed}: J nominal {:.6} -> best {:.6}", cfg.id, r.j_nominal(), r.j_best),
                    Err(e) => eprintln!("{} {strategy} seed {seed}: {e}", cfg.id),
                }
            }
            CellOutcome { strategy, seed, report, wall_ms }
        })
        .collect();

    let rows: Vec<ResultRow> = cells.iter().flat_map(|c| rows_for(&cfg.id, c)).collect();
    write_results(&out.join(RESULTS_FILE), &rows)?;
    for cell in &cells {
        write_artifacts(out, cell, cfg.run.dump_trajectories)?;
    }
    Ok(ExperimentOutcome { out_dir: out.to_path_buf(), rows, cells })
}
