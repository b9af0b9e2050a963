use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::run::{read_results, ResultRow, RESULTS_FILE};
use super::HarnessError;

/// Final numbers of one (strategy, seed) run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunScore {
    pub nominal: f64,
    pub best: f64,
}

impl RunScore {
    /// `(J_nominal − J_best) / J_nominal`.
    pub fn reduction(&self) -> f64 {
        (self.nominal - self.best) / self.nominal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub runs: usize,
    pub failed: usize,
    pub median_best: f64,
    pub iqr_best: f64,
    pub median_nominal: f64,
    /// Median over seeds of the per-seed relative reduction.
    pub median_reduction: f64,
    /// Fraction of shared seeds with a lower best loss than each other
    /// strategy; ties count half.
    pub win_rate: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub experiment: String,
    pub strategies: Vec<StrategySummary>,
    /// Per strategy, per seed.
    pub scores: BTreeMap<String, BTreeMap<u64, RunScore>>,
}

/// Linearly interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// Summarizes result rows of a single experiment.
pub fn summarize(rows: &[ResultRow]) -> Result<Summary, HarnessError> {
    let ids: BTreeSet<&str> = rows.iter().map(|r| r.experiment.as_str()).collect();
    if ids.len() > 1 {
        return Err(HarnessError::MixedExperiments(ids.into_iter().map(str::to_string).collect()));
    }
    let experiment = ids.into_iter().next().ok_or(HarnessError::NoResults)?.to_string();

    let mut grouped: BTreeMap<String, BTreeMap<u64, Vec<&ResultRow>>> = BTreeMap::new();
    for row in rows {
        grouped.entry(row.strategy.clone()).or_default().entry(row.seed).or_default().push(row);
    }

    let mut scores: BTreeMap<String, BTreeMap<u64, RunScore>> = BTreeMap::new();
    let mut failures: BTreeMap<String, usize> = BTreeMap::new();
    for (strategy, seeds) in &grouped {
        for (seed, runs) in seeds {
            let nominal = runs.iter().find(|r| r.iter == 0).and_then(|r| r.j_task_sys);
            let best = runs.iter().filter_map(|r| r.j_task_sys).fold(f64::INFINITY, f64::min);
            match nominal {
                Some(nominal) if runs.iter().all(|r| !r.is_error()) => {
                    scores.entry(strategy.clone()).or_default().insert(*seed, RunScore { nominal, best });
                }
                _ => *failures.entry(strategy.clone()).or_default() += 1,
            }
        }
    }

    let strategies = grouped
        .keys()
        .map(|strategy| {
            let own = scores.get(strategy).cloned().unwrap_or_default();
            let mut best: Vec<f64> = own.values().map(|s| s.best).collect();
            best.sort_by(f64::total_cmp);
            let nominal: Vec<f64> = own.values().map(|s| s.nominal).collect();
            let reduction: Vec<f64> = own.values().map(RunScore::reduction).collect();
            let win_rate = grouped
                .keys()
                .filter(|other| *other != strategy)
                .map(|other| {
                    let theirs = scores.get(other).cloned().unwrap_or_default();
                    let shared: Vec<(f64, f64)> =
                        own.iter().filter_map(|(seed, s)| theirs.get(seed).map(|t| (s.best, t.best))).collect();
                    let wins: f64 = shared
                        .iter()
                        .map(|(a, b)| if a < b { 1.0 } else if a == b { 0.5 } else { 0.0 })
                        .sum();
                    let rate = if shared.is_empty() { f64::NAN } else { wins / shared.len() as f64 };
                    (other.clone(), rate)
                })
                .collect();
            StrategySummary {
                strategy: strategy.clone(),
                runs: own.len(),
                failed: failures.get(strategy).copied().unwrap_or(0),
                median_best: quantile(&best, 0.5),
                iqr_best: quantile(&best, 0.75) - quantile(&best, 0.25),
                median_nominal: median(&nominal),
                median_reduction: median(&reduction),
                win_rate,
            }
        })
        .collect();
    Ok(Summary { experiment, strategies, scores })
}

/// Reads `results.csv` from `dir`, summarizes it and writes `summary.csv`
/// and `summary.txt` next to it.
pub fn compare_strategies(dir: &Path) -> Result<Summary, HarnessError> {
    let rows = read_results(&dir.join(RESULTS_FILE))?;
    let summary = summarize(&rows)?;
    let csv_path = dir.join("summary.csv");
    std::fs::write(&csv_path, summary.to_csv())
        .map_err(|e| HarnessError::Io { path: csv_path.clone(), message: e.to_string() })?;
    let txt_path = dir.join("summary.txt");
    std::fs::write(&txt_path, summary.to_table())
        .map_err(|e| HarnessError::Io { path: txt_path.clone(), message: e.to_string() })?;
    Ok(summary)
}

impl Summary {
    pub fn get(&self, strategy: &str) -> Option<&StrategySummary> {
        self.strategies.iter().find(|s| s.strategy == strategy)
    }

    fn columns(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let names: Vec<&str> = self.strategies.iter().map(|s| s.strategy.as_str()).collect();
        let mut header: Vec<String> =
            ["strategy", "runs", "failed", "median_best", "iqr_best", "median_nominal", "median_reduction"]
                .iter()
                .map(|s| s.to_string())
                .collect();
        header.extend(names.iter().map(|n| format!("win_vs_{n}")));
        let rows = self
            .strategies
            .iter()
            .map(|s| {
                let mut r = vec![
                    s.strategy.clone(),
                    s.runs.to_string(),
                    s.failed.to_string(),
                    format!("{:.6}", s.median_best),
                    format!("{:.6}", s.iqr_best),
                    format!("{:.6}", s.median_nominal),
                    format!("{:.4}", s.median_reduction),
                ];
                r.extend(names.iter().map(|n| s.win_rate.get(*n).map_or("-".to_string(), |w| format!("{w:.2}"))));
                r
            })
            .collect();
        (header, rows)
    }

    pub fn to_csv(&self) -> String {
        let (header, rows) = self.columns();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header).expect("in-memory write");
        for r in rows {
            w.write_record(&r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let (header, rows) = self.columns();
        let mut out = format!("experiment: {}\n", self.experiment);
        out.push_str(&align(&header, &rows));
        out
    }
}

/// Left-aligns the first column and right-aligns the rest.
pub fn align(header: &[String], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|i| rows.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for line in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        for (i, cell) in line.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            if i == 0 {
                let _ = write!(out, "{cell:<w$}", w = widths[i]);
            } else {
                let _ = write!(out, "{cell:>w$}", w = widths[i]);
            }
        }
        out.push('\n');
    }
    out
}
