//! Experiment configuration: a TOML file with dotted section keys.
//!
//! ```toml
//! scenario.kind = "track2d"
//! scenario.variant = "student"
//! scenario.steps = 1000
//!
//! filters.kf.kind = "kf"
//! filters.wolf_imq.kind = "wolf"
//! filters.wolf_imq.weight = "imq"
//! filters.wolf_imq.c = 4.0
//!
//! run.trials = 100
//! run.seed = 0
//! run.reference = "kf"
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::baselines::KfBConfig;
use crate::ensemble::ApGainMode;
use crate::error::{Error, Result};
use crate::gaussian::UpdateForm;
use crate::harness::filters::{FilterKind, FilterSpec};
use crate::robustness::{GridSpec, PifOrientation};
use crate::scenarios::{Lorenz96Config, MlpSpec, Regression1dConfig, Tracking2dConfig, TrackingVariant};
use crate::weights::WeightSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    Track2d,
    Lorenz96,
    Regress1d,
    Pif,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Track2d => "track2d",
            ScenarioKind::Lorenz96 => "lorenz96",
            ScenarioKind::Regress1d => "regress1d",
            ScenarioKind::Pif => "pif",
        }
    }

    /// Metric that sweeps rank by.
    pub fn primary_metric(self) -> &'static str {
        match self {
            ScenarioKind::Track2d => "j_0",
            ScenarioKind::Lorenz96 => "lt_mean",
            ScenarioKind::Regress1d => "rmedse",
            ScenarioKind::Pif => "pif_max",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "track2d" => Ok(ScenarioKind::Track2d),
            "lorenz96" => Ok(ScenarioKind::Lorenz96),
            "regress1d" => Ok(ScenarioKind::Regress1d),
            "pif" => Ok(ScenarioKind::Pif),
            other => Err(Error::InvalidParameter(format!("unknown scenario kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RegressionModel {
    Mlp(MlpSpec),
    /// The generating curve with four unknown coefficients.
    Parametric,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionSetup {
    pub stream: Regression1dConfig,
    pub model: RegressionModel,
    /// Measurement variance assumed by the filters.
    pub obs_var: f64,
    pub process_var: f64,
    pub prior_var: f64,
}

impl Default for RegressionSetup {
    fn default() -> Self {
        Self {
            stream: Regression1dConfig::default(),
            model: RegressionModel::Mlp(MlpSpec::two_hidden_10()),
            obs_var: 3.0,
            process_var: 1e-4,
            prior_var: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PifSetup {
    /// Tracking model; `steps` is the history length including the
    /// contaminated step.
    pub tracking: Tracking2dConfig,
    pub grid: GridSpec,
    pub orientation: PifOrientation,
}

impl Default for PifSetup {
    fn default() -> Self {
        Self {
            tracking: Tracking2dConfig {
                steps: 20,
                ..Tracking2dConfig::default()
            },
            grid: GridSpec::default(),
            orientation: PifOrientation::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Scenario {
    Track2d(Tracking2dConfig),
    Lorenz96(Lorenz96Config),
    Regress1d(RegressionSetup),
    Pif(PifSetup),
}

impl Scenario {
    pub fn kind(&self) -> ScenarioKind {
        match self {
            Scenario::Track2d(_) => ScenarioKind::Track2d,
            Scenario::Lorenz96(_) => ScenarioKind::Lorenz96,
            Scenario::Regress1d(_) => ScenarioKind::Regress1d,
            Scenario::Pif(_) => ScenarioKind::Pif,
        }
    }

    pub fn default_for(kind: ScenarioKind) -> Self {
        match kind {
            ScenarioKind::Track2d => Scenario::Track2d(Tracking2dConfig::default()),
            ScenarioKind::Lorenz96 => Scenario::Lorenz96(Lorenz96Config::default()),
            ScenarioKind::Regress1d => Scenario::Regress1d(RegressionSetup::default()),
            ScenarioKind::Pif => Scenario::Pif(PifSetup::default()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub trials: usize,
    pub seed: u64,
    /// Filter that slowdown ratios are taken against. Defaults to the first
    /// filter name in sorted order.
    pub reference: Option<String>,
    /// When false, every time column is written as 0 so output bytes depend
    /// only on `(config, seed)`.
    pub timing: bool,
    /// Leading steps excluded from per-step timing.
    pub warmup: usize,
    pub record_steps: bool,
    pub bootstrap: usize,
    pub level: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 0,
            reference: None,
            timing: true,
            warmup: 100,
            record_steps: false,
            bootstrap: 500,
            level: 0.95,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub parameter: String,
    pub values: Vec<f64>,
    /// Filters the sweep applies to; all filters that have the parameter
    /// when empty.
    pub filters: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub filters: BTreeMap<String, FilterSpec>,
    pub run: RunConfig,
    pub sweep: Option<SweepConfig>,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            filters: BTreeMap::new(),
            run: RunConfig::default(),
            sweep: None,
        }
    }

    /// Default scenario plus a small filter set, used when no config file
    /// is given.
    pub fn default_for(kind: ScenarioKind) -> Self {
        let cfg = Self::new(Scenario::default_for(kind));
        match kind {
            ScenarioKind::Track2d => cfg
                .with_filter("kf", FilterSpec::kf())
                .with_filter("wolf_imq", FilterSpec::wolf(WeightSpec::Imq { c: 8.0 }))
                .with_filter("kfb", FilterSpec::new(FilterKind::KfB(KfBConfig { alpha0: 100.0, inner_iters: 2, ..KfBConfig::default() })))
                .with_filter("kfiw", FilterSpec::new(FilterKind::KfIw { ell: 10.0, inner_iters: 2 })),
            ScenarioKind::Lorenz96 => cfg
                .with_filter("enkf", FilterSpec::new(FilterKind::Enkf))
                .with_filter("ap_enkf", FilterSpec::new(FilterKind::ApEnkf { c: 100.0, mode: ApGainMode::Shortcut }))
                .with_filter("pp_enkf", FilterSpec::new(FilterKind::PpEnkf { c: 100.0 }))
                .with_filter("hub_enkf", FilterSpec::new(FilterKind::HubEnkf { c: 2.0 })),
            ScenarioKind::Regress1d => cfg
                .with_filter("ekf", FilterSpec::kf().with_form(UpdateForm::Gain))
                .with_filter("wolf_imq", FilterSpec::wolf(WeightSpec::Imq { c: 8.0 }).with_form(UpdateForm::Gain)),
            ScenarioKind::Pif => cfg
                .with_filter("kf", FilterSpec::kf())
                .with_filter("wolf_imq", FilterSpec::wolf(WeightSpec::Imq { c: 4.0 }))
                .with_filter("wolf_tmd", FilterSpec::wolf(WeightSpec::Tmd { c: 2.0 })),
        }
    }

    pub fn with_filter(mut self, name: &str, spec: FilterSpec) -> Self {
        self.filters.insert(name.to_string(), spec);
        self
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.run.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.seed = seed;
        self
    }

    pub fn reference(&self) -> Option<&str> {
        self.run
            .reference
            .as_deref()
            .or_else(|| self.filters.keys().next().map(String::as_str))
    }

    pub fn validate(&self) -> Result<()> {
        if self.filters.is_empty() {
            return Err(Error::InvalidParameter("at least one filter is required".into()));
        }
        if self.run.trials == 0 {
            return Err(Error::InvalidParameter("run.trials must be at least 1".into()));
        }
        if let Some(r) = &self.run.reference {
            if !self.filters.contains_key(r) {
                return Err(Error::InvalidParameter(format!("reference filter {r:?} is not configured")));
            }
        }
        if !(self.run.level > 0.0 && self.run.level < 1.0) || self.run.bootstrap < 100 {
            return Err(Error::InvalidParameter("run.level must lie in (0, 1) and run.bootstrap >= 100".into()));
        }
        match &self.scenario {
            Scenario::Track2d(c) => c.validate()?,
            Scenario::Lorenz96(c) => c.validate()?,
            Scenario::Regress1d(c) => {
                c.stream.validate()?;
                let vars = [c.obs_var, c.prior_var];
                if vars.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(c.process_var >= 0.0) {
                    return Err(Error::InvalidParameter("regression variances must be positive".into()));
                }
            }
            Scenario::Pif(p) => p.tracking.validate()?,
        }
        let kind = self.scenario.kind();
        for (name, f) in &self.filters {
            f.validate()
                .map_err(|e| Error::InvalidParameter(format!("filter {name:?}: {e}")))?;
            let ok = match kind {
                ScenarioKind::Lorenz96 => f.kind.is_ensemble(),
                ScenarioKind::Pif => matches!(f.kind, FilterKind::Kf | FilterKind::Wolf(_)),
                _ => !f.kind.is_ensemble(),
            };
            if !ok {
                return Err(Error::InvalidParameter(format!(
                    "filter {name:?} of kind {} cannot run on scenario {kind}",
                    f.kind.label()
                )));
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() || s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("sweep.values must be non-empty and finite".into()));
            }
            for name in &s.filters {
                if !self.filters.contains_key(name) {
                    return Err(Error::InvalidParameter(format!("sweep filter {name:?} is not configured")));
                }
            }
            let mut probe = self.filters.clone();
            let hits = probe
                .iter_mut()
                .filter(|(n, _)| s.filters.is_empty() || s.filters.contains(n))
                .filter_map(|(_, f)| f.set_parameter(&s.parameter, s.values[0]).then_some(()))
                .count();
            if hits == 0 {
                return Err(Error::InvalidParameter(format!(
                    "no configured filter has a parameter named {:?}",
                    s.parameter
                )));
            }
        }
        Ok(())
    }

    pub fn from_path(path: &Path, default_kind: Option<ScenarioKind>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, default_kind)
    }

    /// Parses a config. `default_kind` supplies the scenario when the file
    /// omits `scenario.kind`; if both are present they must agree.
    pub fn from_toml_str(text: &str, default_kind: Option<ScenarioKind>) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        let file_kind = raw.scenario.kind.as_deref().map(ScenarioKind::from_str).transpose()?;
        let kind = match (file_kind, default_kind) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::InvalidParameter(format!(
                    "config describes scenario {a} but {b} was requested"
                )));
            }
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => return Err(Error::InvalidParameter("scenario.kind is required".into())),
        };
        let scenario = raw.scenario.build(kind)?;
        let mut filters = BTreeMap::new();
        for (name, f) in raw.filters {
            filters.insert(name.clone(), f.build(&name)?);
        }
        let d = RunConfig::default();
        let r = raw.run;
        let run = RunConfig {
            trials: r.trials.unwrap_or(d.trials),
            seed: r.seed.unwrap_or(d.seed),
            reference: r.reference,
            timing: r.timing.unwrap_or(d.timing),
            warmup: r.warmup.unwrap_or(d.warmup),
            record_steps: r.record_steps.unwrap_or(d.record_steps),
            bootstrap: r.bootstrap.unwrap_or(d.bootstrap),
            level: r.level.unwrap_or(d.level),
        };
        let sweep = raw.sweep.map(|s| SweepConfig {
            parameter: s.parameter,
            values: s.values,
            filters: s.filters.unwrap_or_default(),
        });
        let cfg = Self {
            scenario,
            filters,
            run,
            sweep,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    scenario: RawScenario,
    #[serde(default)]
    filters: BTreeMap<String, RawFilter>,
    #[serde(default)]
    run: RawRun,
    sweep: Option<RawSweep>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    kind: Option<String>,
    steps: Option<usize>,
    // tracking
    variant: Option<String>,
    nu: Option<f64>,
    p_eps: Option<f64>,
    dt: Option<f64>,
    q: Option<f64>,
    r: Option<f64>,
    initial_state: Option<[f64; 4]>,
    prior_var: Option<f64>,
    // lorenz96
    dim: Option<usize>,
    forcing_mean: Option<f64>,
    forcing_std: Option<f64>,
    obs_std: Option<f64>,
    outlier_value: Option<f64>,
    init_std: Option<f64>,
    particles: Option<usize>,
    // regression
    sorted: Option<bool>,
    noise_var: Option<f64>,
    model: Option<String>,
    layers: Option<Vec<usize>>,
    obs_var: Option<f64>,
    process_var: Option<f64>,
    // pif
    grid_half_width: Option<f64>,
    grid_points: Option<usize>,
    orientation: Option<PifOrientation>,
}

impl RawScenario {
    fn unused(&self, kind: ScenarioKind, allowed: &[&str]) -> Result<()> {
        let present: [(&str, bool); 25] = [
            ("variant", self.variant.is_some()),
            ("nu", self.nu.is_some()),
            ("p_eps", self.p_eps.is_some()),
            ("dt", self.dt.is_some()),
            ("q", self.q.is_some()),
            ("r", self.r.is_some()),
            ("initial_state", self.initial_state.is_some()),
            ("prior_var", self.prior_var.is_some()),
            ("dim", self.dim.is_some()),
            ("forcing_mean", self.forcing_mean.is_some()),
            ("forcing_std", self.forcing_std.is_some()),
            ("obs_std", self.obs_std.is_some()),
            ("outlier_value", self.outlier_value.is_some()),
            ("init_std", self.init_std.is_some()),
            ("particles", self.particles.is_some()),
            ("sorted", self.sorted.is_some()),
            ("noise_var", self.noise_var.is_some()),
            ("model", self.model.is_some()),
            ("layers", self.layers.is_some()),
            ("obs_var", self.obs_var.is_some()),
            ("process_var", self.process_var.is_some()),
            ("grid_half_width", self.grid_half_width.is_some()),
            ("grid_points", self.grid_points.is_some()),
            ("orientation", self.orientation.is_some()),
            ("steps", self.steps.is_some()),
        ];
        for (key, set) in present {
            if set && !allowed.contains(&key) {
                return Err(Error::InvalidParameter(format!(
                    "scenario.{key} does not apply to scenario {kind}"
                )));
            }
        }
        Ok(())
    }

    fn tracking(&self) -> Result<Tracking2dConfig> {
        let d = Tracking2dConfig::default();
        let variant = match self.variant.as_deref().unwrap_or("clean") {
            "clean" => TrackingVariant::Clean,
            "student" => TrackingVariant::Student {
                nu: self.nu.unwrap_or(2.01),
            },
            "mixture" => TrackingVariant::Mixture {
                p_eps: self.p_eps.unwrap_or(0.05),
            },
            other => return Err(Error::InvalidParameter(format!("unknown tracking variant {other:?}"))),
        };
        Ok(Tracking2dConfig {
            dt: self.dt.unwrap_or(d.dt),
            q: self.q.unwrap_or(d.q),
            r: self.r.unwrap_or(d.r),
            steps: self.steps.unwrap_or(d.steps),
            variant,
            initial_state: self.initial_state.unwrap_or(d.initial_state),
            prior_var: self.prior_var.unwrap_or(d.prior_var),
        })
    }

    fn build(&self, kind: ScenarioKind) -> Result<Scenario> {
        const TRACK: [&str; 9] = ["variant", "nu", "p_eps", "dt", "q", "r", "initial_state", "prior_var", "steps"];
        match kind {
            ScenarioKind::Track2d => {
                self.unused(kind, &TRACK)?;
                Ok(Scenario::Track2d(self.tracking()?))
            }
            ScenarioKind::Pif => {
                let mut allowed = TRACK.to_vec();
                allowed.extend(["grid_half_width", "grid_points", "orientation"]);
                self.unused(kind, &allowed)?;
                let d = PifSetup::default();
                let mut tracking = self.tracking()?;
                tracking.steps = self.steps.unwrap_or(d.tracking.steps);
                let grid = match (self.grid_half_width, self.grid_points) {
                    (None, None) => d.grid,
                    (h, p) => GridSpec::symmetric(h.unwrap_or(5.0), p.unwrap_or(41)),
                };
                Ok(Scenario::Pif(PifSetup {
                    tracking,
                    grid,
                    orientation: self.orientation.unwrap_or_default(),
                }))
            }
            ScenarioKind::Lorenz96 => {
                self.unused(
                    kind,
                    &[
                        "dim",
                        "dt",
                        "steps",
                        "forcing_mean",
                        "forcing_std",
                        "obs_std",
                        "p_eps",
                        "outlier_value",
                        "init_std",
                        "particles",
                    ],
                )?;
                let d = Lorenz96Config::default();
                Ok(Scenario::Lorenz96(Lorenz96Config {
                    dim: self.dim.unwrap_or(d.dim),
                    dt: self.dt.unwrap_or(d.dt),
                    steps: self.steps.unwrap_or(d.steps),
                    forcing_mean: self.forcing_mean.unwrap_or(d.forcing_mean),
                    forcing_std: self.forcing_std.unwrap_or(d.forcing_std),
                    obs_std: self.obs_std.unwrap_or(d.obs_std),
                    p_eps: self.p_eps.unwrap_or(d.p_eps),
                    outlier_value: self.outlier_value.unwrap_or(d.outlier_value),
                    init_std: self.init_std.unwrap_or(d.init_std),
                    particles: self.particles.unwrap_or(d.particles),
                }))
            }
            ScenarioKind::Regress1d => {
                self.unused(
                    kind,
                    &[
                        "steps",
                        "p_eps",
                        "sorted",
                        "noise_var",
                        "model",
                        "layers",
                        "obs_var",
                        "process_var",
                        "prior_var",
                    ],
                )?;
                let d = RegressionSetup::default();
                let model = match self.model.as_deref().unwrap_or("mlp") {
                    "mlp" => match &self.layers {
                        Some(l) => RegressionModel::Mlp(MlpSpec::new(l.clone())?),
                        None => d.model.clone(),
                    },
                    "parametric" => {
                        if self.layers.is_some() {
                            return Err(Error::InvalidParameter("scenario.layers needs model = \"mlp\"".into()));
                        }
                        RegressionModel::Parametric
                    }
                    other => return Err(Error::InvalidParameter(format!("unknown regression model {other:?}"))),
                };
                if let RegressionModel::Mlp(spec) = &model {
                    if spec.input_dim() != 1 {
                        return Err(Error::InvalidParameter("the 1d stream needs a network with one input".into()));
                    }
                }
                Ok(Scenario::Regress1d(RegressionSetup {
                    stream: Regression1dConfig {
                        steps: self.steps.unwrap_or(d.stream.steps),
                        p_eps: self.p_eps.unwrap_or(d.stream.p_eps),
                        sorted: self.sorted.unwrap_or(d.stream.sorted),
                        noise_var: self.noise_var.unwrap_or(d.stream.noise_var),
                        ..d.stream
                    },
                    model,
                    obs_var: self.obs_var.unwrap_or(d.obs_var),
                    process_var: self.process_var.unwrap_or(d.process_var),
                    prior_var: self.prior_var.unwrap_or(d.prior_var),
                }))
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFilter {
    kind: String,
    weight: Option<String>,
    c: Option<f64>,
    w0: Option<f64>,
    ell: Option<f64>,
    inner_iters: Option<usize>,
    alpha0: Option<f64>,
    beta0: Option<f64>,
    lr: Option<f64>,
    particles: Option<usize>,
    inflation: Option<f64>,
    masked: Option<bool>,
    form: Option<UpdateForm>,
}

impl RawFilter {
    fn build(self, name: &str) -> Result<FilterSpec> {
        let err = |msg: String| Error::InvalidParameter(format!("filter {name:?}: {msg}"));
        let need_c = |c: Option<f64>| c.ok_or_else(|| err("missing threshold c".into()));
        let kind = match self.kind.as_str() {
            "kf" => FilterKind::Kf,
            "wolf" => {
                let w = match self.weight.as_deref().unwrap_or("imq") {
                    "constant" => WeightSpec::Constant {
                        w0: self.w0.unwrap_or(1.0),
                    },
                    "imq" => WeightSpec::Imq { c: need_c(self.c)? },
                    "md" => WeightSpec::Md { c: need_c(self.c)? },
                    "tmd" => WeightSpec::Tmd { c: need_c(self.c)? },
                    "perdim_tmd" => WeightSpec::PerDimTmd { c: need_c(self.c)? },
                    other => return Err(err(format!("unknown weight {other:?}"))),
                };
                FilterKind::Wolf(w)
            }
            "kfb" => {
                let d = KfBConfig::default();
                FilterKind::KfB(KfBConfig {
                    alpha0: self.alpha0.unwrap_or(d.alpha0),
                    beta0: self.beta0.unwrap_or(d.beta0),
                    inner_iters: self.inner_iters.unwrap_or(d.inner_iters),
                    tol: d.tol,
                })
            }
            "kfiw" => FilterKind::KfIw {
                ell: self.ell.unwrap_or(1.0),
                inner_iters: self.inner_iters.unwrap_or(2),
            },
            "ogd" => FilterKind::Ogd {
                lr: self.lr.unwrap_or(1e-2),
                inner_iters: self.inner_iters.unwrap_or(1),
            },
            "enkf" => FilterKind::Enkf,
            "ap_enkf" => FilterKind::ApEnkf {
                c: need_c(self.c)?,
                mode: if self.masked.unwrap_or(false) {
                    ApGainMode::Masked
                } else {
                    ApGainMode::Shortcut
                },
            },
            "pp_enkf" => FilterKind::PpEnkf { c: need_c(self.c)? },
            "hub_enkf" => FilterKind::HubEnkf { c: need_c(self.c)? },
            other => return Err(err(format!("unknown filter kind {other:?}"))),
        };
        Ok(FilterSpec {
            kind,
            particles: self.particles,
            inflation: self.inflation.unwrap_or(1.0),
            form: self.form.unwrap_or_default(),
        })
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRun {
    trials: Option<usize>,
    seed: Option<u64>,
    reference: Option<String>,
    timing: Option<bool>,
    warmup: Option<usize>,
    record_steps: Option<bool>,
    bootstrap: Option<usize>,
    level: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: String,
    values: Vec<f64>,
    filters: Option<Vec<String>>,
}
