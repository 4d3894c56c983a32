//! CSV reports and summary statistics.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Error;
use crate::harness::config::{ExperimentConfig, ScenarioKind};
use crate::harness::run::{ExperimentResult, PifResult, StepRow, SweepResult, TrialStatus};
use crate::rng::{label_key, RngStream};
use crate::scenarios::{bootstrap_mean_ci, median};

/// Failure while writing reports; kept apart from [`Error`] so callers can
/// map it to its own exit code.
#[derive(Debug, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ReportError {
    pub path: PathBuf,
    pub message: String,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ReportError {
    ReportError {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub filter: String,
    pub metric: String,
    pub median: f64,
    pub mean: f64,
    pub bootstrap_low: f64,
    pub bootstrap_high: f64,
    pub slowdown_vs_reference: f64,
}

/// Median over trials of `time(filter) / time(reference)`. The reference
/// itself is 1; NaN when timing was off.
pub fn slowdown(result: &ExperimentResult, filter: &str) -> f64 {
    if filter == result.reference {
        return 1.0;
    }
    let ours = result.times(filter);
    let base = result.times(&result.reference);
    let ratios: Vec<f64> = ours
        .iter()
        .zip(&base)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| a / b)
        .collect();
    median(&ratios).unwrap_or(f64::NAN)
}

fn metric_names(result: &ExperimentResult) -> Vec<String> {
    let mut names: Vec<String> = result.rows.iter().flat_map(|r| r.metrics.keys().cloned()).collect();
    names.sort();
    names.dedup();
    names
}

/// Per-(filter, metric) statistics over trials. Diverged trials are
/// excluded from the statistics.
pub fn summarise(result: &ExperimentResult, cfg: &ExperimentConfig) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for filter in result.filters() {
        let slow = slowdown(result, &filter);
        for metric in metric_names(result) {
            let vals: Vec<f64> = result.metric(&filter, &metric).into_iter().filter(|v| v.is_finite()).collect();
            let mean = if vals.is_empty() {
                f64::NAN
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            };
            let mut rng = RngStream::new(cfg.run.seed, u64::MAX).split(label_key(&format!("{filter}/{metric}")));
            let ci = bootstrap_mean_ci(&vals, cfg.run.bootstrap, cfg.run.level, &mut rng).ok();
            out.push(SummaryRow {
                filter: filter.clone(),
                metric,
                median: median(&vals).unwrap_or(f64::NAN),
                mean,
                bootstrap_low: ci.map_or(f64::NAN, |c| c.low),
                bootstrap_high: ci.map_or(f64::NAN, |c| c.high),
                slowdown_vs_reference: slow,
            });
        }
    }
    out
}

fn writer(path: &Path) -> std::result::Result<csv::Writer<fs::File>, ReportError> {
    csv::Writer::from_path(path).map_err(|e| io_err(path, e))
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn status_fields(s: &TrialStatus) -> (String, String) {
    match s {
        TrialStatus::Ok => ("ok".into(), String::new()),
        TrialStatus::Diverged { step, .. } => ("diverged".into(), step.to_string()),
    }
}

/// Writes `trials.csv`, `summary.csv` and, when steps were recorded,
/// `steps.csv` into `dir`. Returns the written paths.
pub fn write_experiment(
    dir: &Path,
    result: &ExperimentResult,
    cfg: &ExperimentConfig,
) -> std::result::Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let metrics = metric_names(result);
    let mut paths = Vec::new();

    let path = dir.join("trials.csv");
    let mut w = writer(&path)?;
    let mut header = vec!["trial".to_string(), "filter".into(), "status".into(), "diverged_step".into()];
    header.extend(metrics.iter().cloned());
    header.extend(["time_per_step_ns".into(), "total_time_ns".into()]);
    w.write_record(&header).map_err(|e| io_err(&path, e))?;
    for r in &result.rows {
        let (status, step) = status_fields(&r.status);
        let mut rec = vec![r.trial.to_string(), r.filter.clone(), status, step];
        rec.extend(metrics.iter().map(|m| num(r.metrics.get(m).copied().unwrap_or(f64::NAN))));
        rec.extend([num(r.time_per_step_ns), r.total_time_ns.to_string()]);
        w.write_record(&rec).map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    paths.push(path);

    if result.rows.iter().any(|r| !r.steps.is_empty()) {
        let path = dir.join("steps.csv");
        let mut w = writer(&path)?;
        let mut header = vec!["trial", "filter", "step"];
        header.extend(StepRow::columns(result.kind));
        header.extend(["weight", "step_time_ns", "outlier_flag"]);
        w.write_record(&header).map_err(|e| io_err(&path, e))?;
        for r in &result.rows {
            for s in &r.steps {
                let mut rec = vec![r.trial.to_string(), r.filter.clone(), s.step.to_string()];
                rec.extend(s.errors.iter().map(|&e| num(e)));
                rec.extend([num(s.weight), s.step_time_ns.to_string(), (s.outlier as u8).to_string()]);
                w.write_record(&rec).map_err(|e| io_err(&path, e))?;
            }
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        paths.push(path);
    }

    let path = dir.join("summary.csv");
    let mut w = writer(&path)?;
    w.write_record([
        "filter",
        "metric",
        "median",
        "mean",
        "bootstrap_low",
        "bootstrap_high",
        "slowdown_vs_reference",
    ])
    .map_err(|e| io_err(&path, e))?;
    for s in summarise(result, cfg) {
        w.write_record([
            s.filter,
            s.metric,
            num(s.median),
            num(s.mean),
            num(s.bootstrap_low),
            num(s.bootstrap_high),
            num(s.slowdown_vs_reference),
        ])
        .map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    paths.push(path);
    Ok(paths)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummaryRow {
    pub value: f64,
    pub filter: String,
    pub metric: String,
    pub median: f64,
    pub mean: f64,
    pub bootstrap_low: f64,
    pub bootstrap_high: f64,
    /// Lowest median of the primary metric across sweep values, per filter.
    pub best: bool,
}

pub fn summarise_sweep(sweep: &SweepResult, cfg: &ExperimentConfig) -> Vec<SweepSummaryRow> {
    let metric = cfg.scenario.kind().primary_metric();
    let mut rows: Vec<SweepSummaryRow> = Vec::new();
    for (value, run) in sweep.values.iter().zip(&sweep.runs) {
        for s in summarise(run, cfg).into_iter().filter(|s| s.metric == metric) {
            rows.push(SweepSummaryRow {
                value: *value,
                filter: s.filter,
                metric: s.metric,
                median: s.median,
                mean: s.mean,
                bootstrap_low: s.bootstrap_low,
                bootstrap_high: s.bootstrap_high,
                best: false,
            });
        }
    }
    let filters: Vec<String> = sweep.runs.first().map(|r| r.filters()).unwrap_or_default();
    for f in filters {
        let best = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.filter == f && r.median.is_finite())
            .min_by(|a, b| a.1.median.total_cmp(&b.1.median))
            .map(|(i, _)| i);
        if let Some(i) = best {
            rows[i].best = true;
        }
    }
    rows
}

/// Writes `sweep.csv` (long format) and `sweep_summary.csv`.
pub fn write_sweep(
    dir: &Path,
    sweep: &SweepResult,
    cfg: &ExperimentConfig,
) -> std::result::Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join("sweep.csv");
    let mut w = writer(&path)?;
    w.write_record(["parameter", "value", "filter", "trial", "metric", "metric_value"])
        .map_err(|e| io_err(&path, e))?;
    for (value, run) in sweep.values.iter().zip(&sweep.runs) {
        for r in &run.rows {
            for (m, v) in &r.metrics {
                w.write_record([
                    sweep.parameter.clone(),
                    num(*value),
                    r.filter.clone(),
                    r.trial.to_string(),
                    m.clone(),
                    num(*v),
                ])
                .map_err(|e| io_err(&path, e))?;
            }
        }
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    let summary_path = dir.join("sweep_summary.csv");
    let mut w = writer(&summary_path)?;
    w.write_record([
        "parameter",
        "value",
        "filter",
        "metric",
        "median",
        "mean",
        "bootstrap_low",
        "bootstrap_high",
        "best",
    ])
    .map_err(|e| io_err(&summary_path, e))?;
    for s in summarise_sweep(sweep, cfg) {
        w.write_record([
            sweep.parameter.clone(),
            num(s.value),
            s.filter,
            s.metric,
            num(s.median),
            num(s.mean),
            num(s.bootstrap_low),
            num(s.bootstrap_high),
            s.best.to_string(),
        ])
        .map_err(|e| io_err(&summary_path, e))?;
    }
    w.flush().map_err(|e| io_err(&summary_path, e))?;
    Ok(vec![path, summary_path])
}

/// Writes one `pif_<filter>.csv` grid per filter plus `pif_summary.csv`.
pub fn write_pif(dir: &Path, results: &[PifResult]) -> std::result::Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut paths = Vec::new();
    for r in results {
        let path = dir.join(format!("pif_{}.csv", r.filter));
        let mut w = writer(&path)?;
        w.write_record(["eps1", "eps2", "pif"]).map_err(|e| io_err(&path, e))?;
        for (a, b, v) in r.grid.triples() {
            w.write_record([num(a), num(b), num(v)]).map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        paths.push(path);
    }
    let path = dir.join("pif_summary.csv");
    let mut w = writer(&path)?;
    w.write_record(["filter", "label", "grid_max", "analytic_bound"])
        .map_err(|e| io_err(&path, e))?;
    for r in results {
        w.write_record([r.filter.clone(), r.grid.label.clone(), num(r.grid.max()), num(r.bound)])
            .map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    paths.push(path);
    Ok(paths)
}

/// Convenience used by examples: the primary metric's median per filter.
pub fn primary_medians(result: &ExperimentResult) -> Vec<(String, f64)> {
    let metric = match result.kind {
        ScenarioKind::Pif => return Vec::new(),
        k => k.primary_metric(),
    };
    result
        .filters()
        .into_iter()
        .map(|f| {
            let vals: Vec<f64> = result.metric(&f, metric).into_iter().filter(|v| v.is_finite()).collect();
            let m = median(&vals).unwrap_or(f64::NAN);
            (f, m)
        })
        .collect()
}

impl From<ReportError> for Error {
    fn from(e: ReportError) -> Self {
        Error::InvalidParameter(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Scenario;
    use crate::harness::filters::FilterSpec;
    use crate::harness::run::{run_experiment, run_sweep};
    use crate::scenarios::Tracking2dConfig;
    use crate::weights::WeightSpec;

    fn cfg() -> ExperimentConfig {
        let mut sc = Tracking2dConfig::student(2.01);
        sc.steps = 40;
        let mut c = ExperimentConfig::new(Scenario::Track2d(sc))
            .with_filter("kf", FilterSpec::kf())
            .with_filter("wolf_imq", FilterSpec::wolf(WeightSpec::Imq { c: 4.0 }))
            .with_trials(3);
        c.run.reference = Some("kf".into());
        c
    }

    #[test]
    fn reference_slowdown_is_one() {
        let c = cfg();
        let res = run_experiment(&c).unwrap();
        let rows = summarise(&res, &c);
        assert!(rows.iter().filter(|r| r.filter == "kf").all(|r| r.slowdown_vs_reference == 1.0));
        let wolf: Vec<&SummaryRow> = rows.iter().filter(|r| r.filter == "wolf_imq").collect();
        assert!(wolf.iter().all(|r| r.slowdown_vs_reference.is_finite() && r.slowdown_vs_reference > 0.0));
    }

    #[test]
    fn trial_file_has_one_row_per_trial_and_filter() {
        let mut c = cfg();
        c.run.timing = false;
        let res = run_experiment(&c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_experiment(dir.path(), &res, &c).unwrap();
        let text = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
        assert_eq!(text.lines().count(), 1 + 6);
        assert!(!dir.path().join("steps.csv").exists());
    }

    #[test]
    fn sweep_summary_has_one_row_per_value_and_filter() {
        let mut c = cfg();
        c.run.timing = false;
        c.sweep = Some(crate::harness::config::SweepConfig {
            parameter: "c".into(),
            values: vec![4.0, 16.0, 64.0],
            filters: vec![],
        });
        let sweep = run_sweep(&c).unwrap();
        let rows = summarise_sweep(&sweep, &c);
        assert_eq!(rows.len(), 6);
        assert_eq!(rows.iter().filter(|r| r.filter == "wolf_imq" && r.best).count(), 1);
        let kf: Vec<f64> = rows.iter().filter(|r| r.filter == "kf").map(|r| r.median).collect();
        assert!(kf.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn unwritable_directory_is_reported() {
        let c = cfg();
        let res = run_experiment(&c.clone().with_trials(1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        assert!(write_experiment(&blocker.join("sub"), &res, &c).is_err());
    }
}
