//! Config-driven experiments: build a system, model, controller and task
//! from a TOML file, run strategies over seeds in parallel, and write
//! `results.csv` plus per-run artifacts.
//!
//! Output layout of one experiment directory:
//!
//! ```text
//! config.toml                          resolved config
//! results.csv                          one row per (strategy, seed, iteration)
//! summary.csv, summary.txt             written by compare_strategies
//! runs/<strategy>/seed_<s>/report.json θ, β and phase traces per iteration
//! runs/<strategy>/seed_<s>/iter_<l>.csv deployment trajectory of iteration l
//! ```

mod compare;
mod config;
mod gradcheck;
mod run;

pub use compare::{align, compare_strategies, median, quantile, summarize, RunScore, StrategySummary, Summary};
pub use config::{load_config, mlp_arch, ControllerConfig, ExperimentConfig, ModelConfig, RunConfig, SystemConfig, TaskConfig};
pub use gradcheck::{
    gradcheck_suite, primitive_gradcheck, rollout_gradcheck, GradcheckCase, GradcheckReport, GRADCHECK_HORIZON, GRADCHECK_TOL,
};
pub use run::{
    cell_dir, read_results, read_trajectory_states, resolve_out_dir, rows_for, run_experiment, synthesize_nominal,
    write_results, write_trajectory, CellOutcome, ExperimentOutcome, ResultRow, RunOptions, OUT_ENV, RESULTS_FILE,
    RESULTS_HEADER,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::controllers::ControllerError;
use crate::dynamics::DynamicsError;
use crate::objectives::ObjectiveError;
use crate::tuner::TunerError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("config parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("results mix experiments {0:?}")]
    MixedExperiments(Vec<String>),
    #[error("no result rows")]
    NoResults,
    #[error("unknown figure `{0}` (expected one of fig5a, fig5b, fig5d, fig8)")]
    UnknownFigure(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Tuner(#[from] TunerError),
}

impl HarnessError {
    /// Errors caused by the input rather than by running it.
    pub fn is_validation(&self) -> bool {
        matches!(self, HarnessError::Parse { .. } | HarnessError::Validation(_) | HarnessError::UnknownFigure(_))
    }
}

/// Shipped configs by file stem.
pub const CANNED: &[(&str, &str)] = &[
    ("fig5a_matched", include_str!("../../configs/fig5a_matched.toml")),
    ("fig5b", include_str!("../../configs/fig5b.toml")),
    ("fig5d_mlp", include_str!("../../configs/fig5d_mlp.toml")),
    ("fig8_mass_115", include_str!("../../configs/fig8_mass_115.toml")),
    ("fig8_mass_130", include_str!("../../configs/fig8_mass_130.toml")),
    ("fig8_mass_145", include_str!("../../configs/fig8_mass_145.toml")),
    ("fig8_mass_160", include_str!("../../configs/fig8_mass_160.toml")),
    ("fig8_friction", include_str!("../../configs/fig8_friction.toml")),
    ("fig8_gear", include_str!("../../configs/fig8_gear.toml")),
    ("fig8_all", include_str!("../../configs/fig8_all.toml")),
];

pub fn canned_config(name: &str) -> Result<ExperimentConfig, HarnessError> {
    let text = CANNED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| HarnessError::UnknownFigure(name.to_string()))?;
    ExperimentConfig::from_toml(text)
}

/// Canned configs reproducing one figure.
pub fn figure_configs(figure: &str) -> Result<Vec<ExperimentConfig>, HarnessError> {
    let names: &[&str] = match figure {
        "fig5a" => &["fig5a_matched"],
        "fig5b" => &["fig5b"],
        "fig5d" => &["fig5d_mlp"],
        "fig8" => &[
            "fig8_mass_115",
            "fig8_mass_130",
            "fig8_mass_145",
            "fig8_mass_160",
            "fig8_friction",
            "fig8_gear",
            "fig8_all",
        ],
        other => return Err(HarnessError::UnknownFigure(other.to_string())),
    };
    names.iter().map(|n| canned_config(n)).collect()
}

/// Runs each config into `out/<id>`, summarizes it, and writes a combined
/// `sweep.csv` / `sweep.txt` under `out`.
pub fn run_sweep(configs: &[ExperimentConfig], out: &Path, opts: RunOptions) -> Result<Vec<Summary>, HarnessError> {
    let mut summaries = Vec::with_capacity(configs.len());
    for cfg in configs {
        let dir = out.join(&cfg.id);
        run_experiment(cfg, &dir, opts)?;
        summaries.push(compare_strategies(&dir)?);
    }
    let (header, rows) = sweep_rows(&summaries);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for r in &rows {
        w.write_record(r).expect("in-memory write");
    }
    let csv_text = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output");
    for (name, text) in [("sweep.csv", csv_text), ("sweep.txt", align(&header, &rows))] {
        let path = out.join(name);
        std::fs::write(&path, text).map_err(|e| HarnessError::Io { path: path.clone(), message: e.to_string() })?;
    }
    Ok(summaries)
}

fn sweep_rows(summaries: &[Summary]) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["experiment", "strategy", "runs", "median_nominal", "median_best", "median_reduction"].map(String::from).to_vec();
    let rows = summaries
        .iter()
        .flat_map(|s| {
            s.strategies.iter().map(|st| {
                vec![
                    s.experiment.clone(),
                    st.strategy.clone(),
                    st.runs.to_string(),
                    format!("{:.6}", st.median_nominal),
                    format!("{:.6}", st.median_best),
                    format!("{:.4}", st.median_reduction),
                ]
            })
        })
        .collect();
    (header, rows)
}

#[cfg(test)]
mod tests;
