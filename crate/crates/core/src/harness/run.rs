//! Seeded multi-trial execution.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ensemble::{enkf_predict, Ensemble};
use crate::error::{Error, Result};
use crate::gaussian::{kf_predict, MeasurementModel};
use crate::harness::config::{ExperimentConfig, PifSetup, RegressionModel, RegressionSetup, Scenario, ScenarioKind};
use crate::harness::filters::{ensemble_step, gaussian_step, rows_to_matrix, FilterSpec, GaussianFilterState, Observation};
use crate::linalg::GaussianBelief;
use crate::rng::{label_key, RngStream};
use crate::robustness::{GridSpec, PifContext, PifGrid, PifProblem};
use crate::scenarios::{
    lorenz96_generate, metric_j, metric_lt, metric_rmedse, regression1d_stream, tracking2d_generate, Lorenz96Config,
    MlpObservation, ParametricObservation, Tracking2dConfig,
};
use crate::weights::WeightSpec;

#[derive(Clone, Debug, PartialEq)]
pub enum TrialStatus {
    Ok,
    /// The filter failed or produced a non-finite state at this step.
    Diverged { step: usize, reason: String },
}

impl TrialStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, TrialStatus::Ok)
    }
}

/// One row of the optional per-step output.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRow {
    pub step: usize,
    /// Scenario-specific error columns, in `StepRow::columns` order.
    pub errors: Vec<f64>,
    pub weight: f64,
    pub step_time_ns: u64,
    pub outlier: bool,
}

impl StepRow {
    pub fn columns(kind: ScenarioKind) -> Vec<&'static str> {
        match kind {
            ScenarioKind::Track2d => vec!["err_0", "err_1", "err_2", "err_3"],
            ScenarioKind::Lorenz96 => vec!["lt"],
            ScenarioKind::Regress1d => vec!["sq_error"],
            ScenarioKind::Pif => vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub filter: String,
    pub status: TrialStatus,
    pub metrics: BTreeMap<String, f64>,
    /// Mean wall time per step after the warm-up, or 0 with timing off.
    pub time_per_step_ns: f64,
    pub total_time_ns: u64,
    pub steps: Vec<StepRow>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub kind: ScenarioKind,
    pub reference: String,
    /// Sorted by `(trial, filter)`.
    pub rows: Vec<TrialResult>,
}

impl ExperimentResult {
    pub fn filters(&self) -> Vec<String> {
        let mut names: Vec<String> = self.rows.iter().map(|r| r.filter.clone()).collect();
        names.sort();
        names.dedup();
        names
    }

    /// Per-trial values of one metric for one filter, in trial order.
    pub fn metric(&self, filter: &str, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.filter == filter)
            .map(|r| r.metrics.get(metric).copied().unwrap_or(f64::NAN))
            .collect()
    }

    pub fn times(&self, filter: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.filter == filter).map(|r| r.time_per_step_ns).collect()
    }
}

/// Stream used for the data of one trial.
pub fn data_rng(seed: u64, trial: usize) -> RngStream {
    RngStream::new(seed, trial as u64).split(label_key("data"))
}

/// Stream used by one filter within one trial.
pub fn filter_rng(seed: u64, trial: usize, filter: &str) -> RngStream {
    RngStream::new(seed, trial as u64).split(label_key(filter))
}

/// Runs every trial on the current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    if cfg.scenario.kind() == ScenarioKind::Pif {
        return Err(Error::InvalidParameter("use run_pif for the pif scenario".into()));
    }
    let per_trial: Vec<Vec<TrialResult>> = (0..cfg.run.trials)
        .into_par_iter()
        .map(|trial| run_trial(cfg, trial))
        .collect::<Result<_>>()?;
    let mut rows: Vec<TrialResult> = per_trial.into_iter().flatten().collect();
    rows.sort_by(|a, b| (a.trial, &a.filter).cmp(&(b.trial, &b.filter)));
    Ok(ExperimentResult {
        kind: cfg.scenario.kind(),
        reference: cfg.reference().unwrap_or_default().to_string(),
        rows,
    })
}

/// Runs every configured filter on one trial's data.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<TrialResult>> {
    match &cfg.scenario {
        Scenario::Track2d(sc) => run_tracking(cfg, sc, trial),
        Scenario::Lorenz96(sc) => run_lorenz(cfg, sc, trial),
        Scenario::Regress1d(sc) => run_regression(cfg, sc, trial),
        Scenario::Pif(_) => Err(Error::InvalidParameter("the pif scenario has no trials".into())),
    }
}

struct Recorder {
    timing: bool,
    warmup: usize,
    keep_steps: bool,
    steps: Vec<StepRow>,
    times: Vec<u64>,
    weights: Vec<f64>,
}

impl Recorder {
    fn new(cfg: &ExperimentConfig, n: usize) -> Self {
        Self {
            timing: cfg.run.timing,
            warmup: cfg.run.warmup,
            keep_steps: cfg.run.record_steps,
            steps: Vec::with_capacity(if cfg.run.record_steps { n } else { 0 }),
            times: Vec::with_capacity(n),
            weights: Vec::with_capacity(n),
        }
    }

    fn record(&mut self, step: usize, started: Instant, errors: impl FnOnce() -> Vec<f64>, weight: f64, outlier: bool) {
        let ns = if self.timing { started.elapsed().as_nanos() as u64 } else { 0 };
        self.times.push(ns);
        self.weights.push(weight);
        if self.keep_steps {
            self.steps.push(StepRow {
                step,
                errors: errors(),
                weight,
                step_time_ns: ns,
                outlier,
            });
        }
    }

    fn finish(self, trial: usize, filter: &str, status: TrialStatus, mut metrics: BTreeMap<String, f64>) -> TrialResult {
        let timed = if self.times.len() > self.warmup {
            &self.times[self.warmup..]
        } else {
            &self.times[..]
        };
        let per_step = if timed.is_empty() {
            0.0
        } else {
            timed.iter().sum::<u64>() as f64 / timed.len() as f64
        };
        let mean_weight = if self.weights.is_empty() {
            f64::NAN
        } else {
            self.weights.iter().sum::<f64>() / self.weights.len() as f64
        };
        metrics.insert("mean_weight".into(), mean_weight);
        TrialResult {
            trial,
            filter: filter.to_string(),
            status,
            metrics,
            time_per_step_ns: per_step,
            total_time_ns: self.times.iter().sum(),
            steps: self.steps,
        }
    }
}

fn diverged(step: usize, e: impl std::fmt::Display) -> TrialStatus {
    TrialStatus::Diverged {
        step,
        reason: e.to_string(),
    }
}

fn finite_belief(b: &GaussianBelief) -> bool {
    b.mean().iter().all(|v| v.is_finite()) && b.cov().iter().all(|v| v.is_finite())
}

fn nan_metrics(names: &[String]) -> BTreeMap<String, f64> {
    names.iter().map(|n| (n.clone(), f64::NAN)).collect()
}

fn run_tracking(cfg: &ExperimentConfig, sc: &Tracking2dConfig, trial: usize) -> Result<Vec<TrialResult>> {
    let data = tracking2d_generate(sc, &mut data_rng(cfg.run.seed, trial))?;
    let (dynamics, obs) = sc.model()?;
    let prior = sc.prior()?;
    let names: Vec<String> = (0..4).map(|i| format!("j_{i}")).collect();
    let mut out = Vec::with_capacity(cfg.filters.len());
    for (name, spec) in &cfg.filters {
        let mut rec = Recorder::new(cfg, sc.steps);
        let mut state = GaussianFilterState::default();
        let mut belief = prior.clone();
        let mut means = Vec::with_capacity(sc.steps);
        let mut status = TrialStatus::Ok;
        for t in 0..sc.steps {
            let y = data.measurement(t);
            let started = Instant::now();
            let step = kf_predict(&belief, &dynamics)
                .and_then(|pred| gaussian_step(spec, &mut state, &pred, Observation::Linear(&obs), &y));
            match step {
                Ok((post, w)) if finite_belief(&post) => {
                    belief = post;
                    let truth = data.state(t);
                    rec.record(t, started, || (&truth - belief.mean()).iter().copied().collect(), w, data.outliers[t]);
                    means.push(belief.mean().clone());
                }
                Ok(_) => {
                    status = diverged(t, "non-finite posterior");
                    break;
                }
                Err(e) => {
                    status = diverged(t, e);
                    break;
                }
            }
        }
        let metrics = if status.is_ok() {
            let j = metric_j(&data.states, &rows_to_matrix(&means))?;
            names.iter().cloned().zip(j.iter().copied()).collect()
        } else {
            nan_metrics(&names)
        };
        out.push(rec.finish(trial, name, status, metrics));
    }
    Ok(out)
}

fn run_lorenz(cfg: &ExperimentConfig, sc: &Lorenz96Config, trial: usize) -> Result<Vec<TrialResult>> {
    let data = lorenz96_generate(sc, &mut data_rng(cfg.run.seed, trial))?;
    let model = sc.filter_model()?;
    let init = sc.initial_belief()?;
    let names = vec!["lt_mean".to_string(), "lt_final".to_string()];
    let mut out = Vec::with_capacity(cfg.filters.len());
    for (name, spec) in &cfg.filters {
        let mut rng = filter_rng(cfg.run.seed, trial, name);
        let mut rec = Recorder::new(cfg, sc.steps);
        let mut status = TrialStatus::Ok;
        let mut lts = Vec::with_capacity(sc.steps);
        let mut ens = Ensemble::sample(&init, spec.particles.unwrap_or(sc.particles), &mut rng)?;
        for t in 0..sc.steps {
            let y = data.measurement(t);
            let started = Instant::now();
            let step = enkf_predict(&ens, &model, &mut rng).and_then(|pred| ensemble_step(spec, &pred, &model, &y, &mut rng));
            match step {
                Ok((next, w)) => {
                    ens = next;
                    let lt = metric_lt(&data.state(t), &ens.mean())?;
                    if !lt.is_finite() {
                        status = diverged(t, "non-finite ensemble");
                        break;
                    }
                    lts.push(lt);
                    let outlier = data.outliers[t].iter().any(|&o| o);
                    rec.record(t, started, || vec![lt], w, outlier);
                }
                Err(e) => {
                    status = diverged(t, e);
                    break;
                }
            }
        }
        let metrics = if status.is_ok() && !lts.is_empty() {
            let mean = lts.iter().sum::<f64>() / lts.len() as f64;
            names.iter().cloned().zip([mean, *lts.last().unwrap()]).collect()
        } else {
            nan_metrics(&names)
        };
        out.push(rec.finish(trial, name, status, metrics));
    }
    Ok(out)
}

/// Shared initial parameter mean for one regression trial.
fn regression_init(sc: &RegressionSetup, seed: u64, trial: usize) -> DVector<f64> {
    let mut rng = RngStream::new(seed, trial as u64).split(label_key("init"));
    match &sc.model {
        RegressionModel::Mlp(spec) => spec.init_params(&mut rng),
        RegressionModel::Parametric => rng.standard_normal_vector(4),
    }
}

fn run_regression(cfg: &ExperimentConfig, sc: &RegressionSetup, trial: usize) -> Result<Vec<TrialResult>> {
    let samples = regression1d_stream(&sc.stream, &mut data_rng(cfg.run.seed, trial))?;
    let theta0 = regression_init(sc, cfg.run.seed, trial);
    let m = theta0.len();
    let q = DMatrix::<f64>::identity(m, m) * sc.process_var;
    let names = vec!["rmedse".to_string()];
    let mut out = Vec::with_capacity(cfg.filters.len());
    for (name, spec) in &cfg.filters {
        let mut rec = Recorder::new(cfg, samples.len());
        let mut state = GaussianFilterState::default();
        let mut belief = GaussianBelief::isotropic(theta0.clone(), sc.prior_var)?;
        let mut status = TrialStatus::Ok;
        let (mut ys, mut yhats) = (Vec::with_capacity(samples.len()), Vec::with_capacity(samples.len()));
        for (t, s) in samples.iter().enumerate() {
            let y = DVector::from_element(1, s.y);
            let x = [s.x];
            let started = Instant::now();
            let step = (|| -> Result<(GaussianBelief, f64, f64)> {
                let pred = GaussianBelief::new(belief.mean().clone(), belief.cov() + &q)?;
                match &sc.model {
                    RegressionModel::Mlp(net) => {
                        let model = MlpObservation::new(net, &x, sc.obs_var)?;
                        let yhat = model.predict_obs(pred.mean())?[0];
                        let (post, w) = gaussian_step(spec, &mut state, &pred, Observation::General(&model), &y)?;
                        Ok((post, w, yhat))
                    }
                    RegressionModel::Parametric => {
                        let model = ParametricObservation::new(s.x, sc.obs_var)?;
                        let yhat = model.predict_obs(pred.mean())?[0];
                        let (post, w) = gaussian_step(spec, &mut state, &pred, Observation::General(&model), &y)?;
                        Ok((post, w, yhat))
                    }
                }
            })();
            match step {
                Ok((post, w, yhat)) if finite_belief(&post) && yhat.is_finite() => {
                    belief = post;
                    ys.push(s.y);
                    yhats.push(yhat);
                    rec.record(t, started, || vec![(s.y - yhat).powi(2)], w, s.outlier);
                }
                Ok(_) => {
                    status = diverged(t, "non-finite posterior");
                    break;
                }
                Err(e) => {
                    status = diverged(t, e);
                    break;
                }
            }
        }
        let metrics = if status.is_ok() {
            names.iter().cloned().zip([metric_rmedse(&ys, &yhats)?]).collect()
        } else {
            nan_metrics(&names)
        };
        out.push(rec.finish(trial, name, status, metrics));
    }
    Ok(out)
}

/// Result of a sweep: one experiment per swept value.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub parameter: String,
    pub values: Vec<f64>,
    pub runs: Vec<ExperimentResult>,
    /// Filters whose parameter was overwritten.
    pub swept: Vec<String>,
}

/// Config with the sweep parameter set to `value` on the targeted filters.
pub fn sweep_point(cfg: &ExperimentConfig, value: f64) -> Result<(ExperimentConfig, Vec<String>)> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("config has no sweep section".into()))?;
    let mut point = cfg.clone();
    point.sweep = None;
    let mut swept = Vec::new();
    for (name, f) in point.filters.iter_mut() {
        if (sweep.filters.is_empty() || sweep.filters.contains(name)) && f.set_parameter(&sweep.parameter, value) {
            swept.push(name.clone());
        }
    }
    Ok((point, swept))
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("config has no sweep section".into()))?;
    let mut runs = Vec::with_capacity(sweep.values.len());
    let mut swept = Vec::new();
    for &v in &sweep.values {
        let (point, names) = sweep_point(cfg, v)?;
        runs.push(run_experiment(&point)?);
        swept = names;
    }
    Ok(SweepResult {
        parameter: sweep.parameter.clone(),
        values: sweep.values.clone(),
        runs,
        swept,
    })
}

#[derive(Clone, Debug)]
pub struct PifResult {
    pub filter: String,
    pub grid: PifGrid,
    /// Closed-form upper bound; infinite for unbounded weights.
    pub bound: f64,
}

/// PIF grids for every filter on one tracking history (trial 0 of the seed).
pub fn run_pif(cfg: &ExperimentConfig) -> Result<Vec<PifResult>> {
    cfg.validate()?;
    let setup: &PifSetup = match &cfg.scenario {
        Scenario::Pif(p) => p,
        _ => return Err(Error::InvalidParameter("run_pif needs the pif scenario".into())),
    };
    let history = pif_history(setup, cfg.run.seed)?;
    let problem = pif_problem(setup)?;
    cfg.filters
        .iter()
        .map(|(name, spec)| {
            let w = pif_weight(spec)?;
            let ctx = PifContext::new(&w, &problem, &history, setup.orientation)?;
            Ok(PifResult {
                filter: name.clone(),
                grid: ctx.grid(&setup.grid)?,
                bound: ctx.analytic_bound()?,
            })
        })
        .collect()
}

/// Measurements `y_1..y_T` of a clean tracking run.
pub fn pif_history(setup: &PifSetup, seed: u64) -> Result<Vec<DVector<f64>>> {
    let data = tracking2d_generate(&setup.tracking, &mut data_rng(seed, 0))?;
    Ok((0..setup.tracking.steps).map(|t| data.measurement(t)).collect())
}

pub fn pif_problem(setup: &PifSetup) -> Result<PifProblem> {
    let (dynamics, obs) = setup.tracking.model()?;
    Ok(PifProblem {
        dynamics,
        obs,
        prior: setup.tracking.prior()?,
    })
}

fn pif_weight(spec: &FilterSpec) -> Result<WeightSpec> {
    match &spec.kind {
        crate::harness::filters::FilterKind::Kf => Ok(WeightSpec::UNIT),
        crate::harness::filters::FilterKind::Wolf(w) => Ok(*w),
        other => Err(Error::InvalidParameter(format!("{} has no PIF grid", other.label()))),
    }
}

/// Max of the PIF over `[-half, half]²` for one weighting.
pub fn pif_max(setup: &PifSetup, seed: u64, weight: &WeightSpec, half: f64, points: usize) -> Result<f64> {
    let history = pif_history(setup, seed)?;
    let ctx = PifContext::new(weight, &pif_problem(setup)?, &history, setup.orientation)?;
    Ok(ctx.grid(&GridSpec::symmetric(half, points))?.max())
}
