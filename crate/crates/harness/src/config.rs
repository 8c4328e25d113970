//! JSON experiment configuration and validation.
//!
//! Parsing is strict (unknown fields are rejected). Semantic checks collect
//! every problem before returning so a config can be fixed in one pass.

use std::fmt;
use std::path::PathBuf;

use fea_core::control::{ControllerConfig, JacobianStrategy};
use fea_core::inference::EstimatorConfig;
use fea_core::model::NoiseSpec;
use fea_core::planning::{EfeWeights, ENUMERATION_BUDGET};
use fea_core::plants::tmaze::TMazeConfig;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Estimate,
    Control,
    Plan,
    Noise,
    CompareKf,
    ComparePid,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Estimate => "estimate",
            Self::Control => "control",
            Self::Plan => "plan",
            Self::Noise => "noise",
            Self::CompareKf => "compare_kf",
            Self::ComparePid => "compare_pid",
        }
    }
}

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseJson {
    pub covariance: Matrix,
    #[serde(default)]
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    Lti,
    Integrator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantJson {
    pub kind: PlantKind,
    /// LTI only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Matrix>,
    /// LTI only; defaults to an empty input matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Matrix>,
    /// LTI only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Matrix>,
    /// Integrator only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process_noise: Option<NoiseJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation_noise: Option<NoiseJson>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Attractor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelJson {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub process_noise: NoiseJson,
    pub observation_noise: NoiseJson,
}

fn default_kappa() -> f64 {
    1.0
}

fn default_steps() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorJson {
    #[serde(default)]
    pub order: usize,
    #[serde(default = "default_kappa")]
    pub kappa_x: f64,
    #[serde(default = "default_steps")]
    pub steps_per_observation: usize,
    /// Full generalized mean; zeros when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_mean: Option<Vec<f64>>,
}

impl Default for EstimatorJson {
    fn default() -> Self {
        Self {
            order: 0,
            kappa_x: default_kappa(),
            steps_per_observation: default_steps(),
            initial_mean: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianJson {
    Exact,
    SignOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerJson {
    pub kappa_u: f64,
    #[serde(default = "default_jacobian")]
    pub jacobian: JacobianJson,
}

fn default_jacobian() -> JacobianJson {
    JacobianJson::Exact
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanEnv {
    Tmaze,
    MountainCar,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerJson {
    pub env: PlanEnv,
    /// Planning horizon in steps.
    pub horizon: usize,
    pub episodes: usize,
    /// Include the intrinsic (information gain) term.
    #[serde(default = "default_true")]
    pub intrinsic: bool,
    /// Discrete only: sample plans from the posterior instead of taking the
    /// most likely one.
    #[serde(default)]
    pub sample: bool,
    /// T-maze only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_pref: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub no_reward_pref: Option<f64>,
    /// Mountain car only (CEM).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elite_frac: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseExperimentJson {
    pub covariance: Matrix,
    pub sigma: f64,
    pub dt: f64,
}

fn default_horizon() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Steps per seed (episode length for `plan`).
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PlantJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelJson>,
    #[serde(default)]
    pub estimator: EstimatorJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planner: Option<PlannerJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseExperimentJson>,
}

/// A problem with one field of a config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Parses and validates a raw JSON config.
pub fn validate_config(raw: &str) -> Result<ExperimentConfig, Vec<ConfigError>> {
    let cfg: ExperimentConfig =
        serde_json::from_str(raw).map_err(|e| vec![ConfigError::new("config", format!("{e}"))])?;
    cfg.setup()?;
    Ok(cfg)
}

/// Linear plant with optional noise, ready to instantiate per seed.
#[derive(Debug, Clone)]
pub struct LtiSetup {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub x0: DVector<f64>,
    pub dt: f64,
    pub process_noise: Option<(DMatrix<f64>, f64)>,
    pub observation_noise: Option<(DMatrix<f64>, f64)>,
}

impl LtiSetup {
    pub fn is_stochastic(&self) -> bool {
        self.process_noise.is_some() || self.observation_noise.is_some()
    }
}

#[derive(Debug, Clone)]
pub enum ModelSetup {
    Linear {
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        process: NoiseSpec<f64>,
        observation: NoiseSpec<f64>,
    },
    Attractor {
        target: DVector<f64>,
        tau: f64,
        c: DMatrix<f64>,
        process: NoiseSpec<f64>,
        observation: NoiseSpec<f64>,
    },
}

impl ModelSetup {
    pub fn state_dim(&self) -> usize {
        match self {
            Self::Linear { a, .. } => a.nrows(),
            Self::Attractor { target, .. } => target.len(),
        }
    }

    pub fn observation_noise(&self) -> &NoiseSpec<f64> {
        match self {
            Self::Linear { observation, .. } | Self::Attractor { observation, .. } => observation,
        }
    }
}

#[derive(Debug, Clone)]
pub enum PlannerSetup {
    Tmaze {
        env: TMazeConfig,
        horizon: usize,
        episodes: usize,
        weights: EfeWeights<f64>,
        sample: bool,
    },
    MountainCar {
        agent: fea_core::planning::MountainCarAgentConfig<f64>,
    },
}

/// A validated config with every matrix and sub-config built.
#[derive(Debug, Clone)]
pub struct Setup {
    pub kind: ExperimentKind,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub plant: Option<LtiSetup>,
    pub model: Option<ModelSetup>,
    pub estimator: EstimatorConfig<f64>,
    pub order: usize,
    pub initial_mean: DVector<f64>,
    pub controller: Option<ControllerConfig<f64>>,
    pub planner: Option<PlannerSetup>,
    pub noise: Option<(DMatrix<f64>, f64, f64)>,
}

#[derive(Default)]
struct Errors(Vec<ConfigError>);

impl Errors {
    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(ConfigError::new(field, message));
    }

    fn matrix(&mut self, field: &str, rows: &Matrix) -> Option<DMatrix<f64>> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            self.push(field, "rows have unequal length");
            return None;
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            self.push(field, "entries must be finite");
            return None;
        }
        Some(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
    }

    fn positive(&mut self, field: &str, x: f64) -> bool {
        let ok = x > 0.0 && x.is_finite();
        if !ok {
            self.push(field, format!("must be positive and finite, got {x}"));
        }
        ok
    }

    fn noise(
        &mut self,
        field: &str,
        json: &NoiseJson,
        dim: Option<usize>,
    ) -> Option<(DMatrix<f64>, f64)> {
        let cov = self.matrix(&format!("{field}.covariance"), &json.covariance)?;
        if !(json.sigma >= 0.0 && json.sigma.is_finite()) {
            self.push(
                format!("{field}.sigma"),
                format!("must be finite and >= 0, got {}", json.sigma),
            );
            return None;
        }
        if !cov.is_square() || cov.nrows() == 0 {
            self.push(
                format!("{field}.covariance"),
                format!(
                    "must be a non-empty square matrix, got {}x{}",
                    cov.nrows(),
                    cov.ncols()
                ),
            );
            return None;
        }
        if let Some(n) = dim {
            if cov.nrows() != n {
                self.push(
                    format!("{field}.covariance"),
                    format!("is {0}x{0} but the signal has dimension {n}", cov.nrows()),
                );
                return None;
            }
        }
        if let Err(e) = NoiseSpec::new(cov.clone(), json.sigma) {
            self.push(format!("{field}.covariance"), format!("{e}"));
            return None;
        }
        Some((cov, json.sigma))
    }
}

/// Experiments whose only randomness comes from plant noise.
fn needs_seed(kind: ExperimentKind, plant: Option<&LtiSetup>) -> bool {
    match kind {
        ExperimentKind::Plan | ExperimentKind::Noise | ExperimentKind::CompareKf => true,
        _ => plant.is_some_and(LtiSetup::is_stochastic),
    }
}

impl ExperimentConfig {
    /// Checks everything and builds the run-ready setup.
    pub fn setup(&self) -> Result<Setup, Vec<ConfigError>> {
        let mut e = Errors::default();
        let kind = self.experiment;

        let plant = self.plant.as_ref().and_then(|p| plant_setup(&mut e, p));
        let needs_plant = !matches!(kind, ExperimentKind::Plan | ExperimentKind::Noise);
        if needs_plant && self.plant.is_none() {
            e.push("plant", format!("required for {}", kind.name()));
        }
        if matches!(kind, ExperimentKind::Control | ExperimentKind::ComparePid) {
            if let Some(p) = &plant {
                if p.b.ncols() == 0 {
                    e.push("plant.b", "control needs at least one input column");
                }
            }
        }

        let model = match &self.model {
            Some(m) => model_setup(&mut e, m),
            None => match (kind, &plant) {
                // Estimation defaults to the plant's own matrices and noise.
                (ExperimentKind::Estimate | ExperimentKind::CompareKf, Some(p)) => {
                    matched_model(&mut e, p)
                }
                (ExperimentKind::Control | ExperimentKind::ComparePid, _) => {
                    e.push("model", format!("required for {}", kind.name()));
                    None
                }
                _ => None,
            },
        };
        if let (Some(p), Some(m)) = (&plant, &model) {
            let (mc, label) = match m {
                ModelSetup::Linear { c, .. } => (c, "model.c"),
                ModelSetup::Attractor { c, .. } => (c, "model.c"),
            };
            if mc.nrows() != p.c.nrows() {
                e.push(
                    label,
                    format!(
                        "{} has {} rows but plant.c has {}",
                        label,
                        mc.nrows(),
                        p.c.nrows()
                    ),
                );
            }
        }

        let est = &self.estimator;
        let positive_kappa = e.positive("estimator.kappa_x", est.kappa_x);
        if est.steps_per_observation == 0 {
            e.push("estimator.steps_per_observation", "must be at least 1");
        }
        if est.order > fea_core::gencoords::MAX_SMOOTHNESS_ORDER {
            e.push(
                "estimator.order",
                format!(
                    "must be at most {}",
                    fea_core::gencoords::MAX_SMOOTHNESS_ORDER
                ),
            );
        }
        if let Some(m) = &model {
            let (pw, pz) = match m {
                ModelSetup::Linear {
                    process,
                    observation,
                    ..
                }
                | ModelSetup::Attractor {
                    process,
                    observation,
                    ..
                } => (process, observation),
            };
            for (field, noise) in [
                ("model.process_noise.sigma", pw),
                ("model.observation_noise.sigma", pz),
            ] {
                if est.order > 0 && noise.sigma() == 0.0 {
                    e.push(
                        field,
                        format!(
                            "white noise (sigma = 0) cannot be used at estimator.order {}",
                            est.order
                        ),
                    );
                }
            }
        }
        let plant_dt = plant.as_ref().map_or(0.01, |p| p.dt);
        let estimator = EstimatorConfig {
            kappa_x: if positive_kappa { est.kappa_x } else { 1.0 },
            dt: plant_dt / est.steps_per_observation.max(1) as f64,
            steps_per_observation: est.steps_per_observation.max(1),
        };
        let n = model.as_ref().map_or(0, ModelSetup::state_dim);
        let gdim = n * (est.order + 1);
        let initial_mean = match &est.initial_mean {
            Some(v) if model.is_some() && v.len() != gdim => {
                e.push(
                    "estimator.initial_mean",
                    format!(
                        "needs {gdim} entries (state dim {n} × order {} + 1), got {}",
                        est.order,
                        v.len()
                    ),
                );
                DVector::zeros(gdim)
            }
            Some(v) => DVector::from_column_slice(v),
            None => DVector::zeros(gdim),
        };

        let controller = match (&self.controller, kind) {
            (Some(c), _) => {
                if !(c.kappa_u >= 0.0 && c.kappa_u.is_finite()) {
                    e.push(
                        "controller.kappa_u",
                        format!("must be finite and >= 0, got {}", c.kappa_u),
                    );
                }
                Some(ControllerConfig {
                    kappa_u: c.kappa_u,
                    dt: plant_dt,
                    jacobian_strategy: match c.jacobian {
                        JacobianJson::Exact => JacobianStrategy::Exact,
                        JacobianJson::SignOnly => JacobianStrategy::SignOnly,
                    },
                })
            }
            (None, ExperimentKind::Control | ExperimentKind::ComparePid) => {
                e.push("controller", format!("required for {}", kind.name()));
                None
            }
            (None, _) => None,
        };
        if kind == ExperimentKind::ComparePid {
            if let Some(p) = &plant {
                if p.c.nrows() != 1 || p.b.ncols() != 1 {
                    e.push(
                        "plant",
                        "compare_pid needs a single-input, single-output plant",
                    );
                }
            }
            if est.order != 1 {
                e.push(
                    "estimator.order",
                    "compare_pid maps onto a PI controller at order 1",
                );
            }
            if !matches!(model, Some(ModelSetup::Attractor { .. }) | None) {
                e.push("model.kind", "compare_pid needs an attractor model");
            }
        }
        if kind == ExperimentKind::Control
            && !matches!(model, Some(ModelSetup::Attractor { .. }) | None)
        {
            e.push("model.kind", "control needs an attractor model");
        }

        let planner = match (&self.planner, kind) {
            (Some(p), _) => planner_setup(&mut e, p, self.horizon),
            (None, ExperimentKind::Plan) => {
                e.push("planner", "required for plan");
                None
            }
            (None, _) => None,
        };

        let noise = match (&self.noise, kind) {
            (Some(nz), _) => {
                let ok_dt = e.positive("noise.dt", nz.dt);
                let parsed = e.noise(
                    "noise",
                    &NoiseJson {
                        covariance: nz.covariance.clone(),
                        sigma: nz.sigma,
                    },
                    None,
                );
                match parsed {
                    Some((cov, sigma)) if ok_dt => Some((cov, sigma, nz.dt)),
                    _ => None,
                }
            }
            (None, ExperimentKind::Noise) => {
                e.push("noise", "required for noise");
                None
            }
            (None, _) => None,
        };

        if self.seeds.is_empty() && needs_seed(kind, plant.as_ref()) {
            e.push("seeds", "seed required: this experiment is stochastic");
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.seeds {
            if !seen.insert(s) {
                e.push("seeds", format!("seed {s} is listed twice"));
            }
        }

        if !e.0.is_empty() {
            return Err(e.0);
        }
        Ok(Setup {
            kind,
            horizon: self.horizon,
            seeds: if self.seeds.is_empty() {
                vec![0]
            } else {
                self.seeds.clone()
            },
            plant,
            model,
            estimator,
            order: est.order,
            initial_mean,
            controller,
            planner,
            noise,
        })
    }
}

fn plant_setup(e: &mut Errors, p: &PlantJson) -> Option<LtiSetup> {
    let before = e.0.len();
    e.positive("plant.dt", p.dt);
    let (a, b, c) = match p.kind {
        PlantKind::Integrator => {
            let n = match p.dim {
                Some(0) => {
                    e.push("plant.dim", "must be at least 1");
                    return None;
                }
                Some(n) => n,
                None => p.x0.as_ref().map_or(1, Vec::len),
            };
            for (field, present) in [
                ("plant.a", p.a.is_some()),
                ("plant.b", p.b.is_some()),
                ("plant.c", p.c.is_some()),
            ] {
                if present {
                    e.push(field, "not used by an integrator plant");
                }
            }
            (
                DMatrix::zeros(n, n),
                DMatrix::identity(n, n),
                DMatrix::identity(n, n),
            )
        }
        PlantKind::Lti => {
            let a = match &p.a {
                Some(a) => e.matrix("plant.a", a),
                None => {
                    e.push("plant.a", "required for an lti plant");
                    None
                }
            };
            let c = match &p.c {
                Some(c) => e.matrix("plant.c", c),
                None => {
                    e.push("plant.c", "required for an lti plant");
                    None
                }
            };
            let b = p.b.as_ref().map(|b| e.matrix("plant.b", b));
            let (Some(a), Some(c)) = (a, c) else {
                return None;
            };
            if !a.is_square() || a.nrows() == 0 {
                e.push(
                    "plant.a",
                    format!(
                        "must be a non-empty square matrix, got {}x{}",
                        a.nrows(),
                        a.ncols()
                    ),
                );
                return None;
            }
            let n = a.nrows();
            if c.ncols() != n || c.nrows() == 0 {
                e.push(
                    "plant.c",
                    format!(
                        "plant.c is {}x{} but plant.a is {n}x{n}; plant.c needs {n} columns",
                        c.nrows(),
                        c.ncols()
                    ),
                );
            }
            let b = match b {
                Some(Some(b)) if b.nrows() != n => {
                    e.push(
                        "plant.b",
                        format!("plant.b has {} rows but plant.a is {n}x{n}", b.nrows()),
                    );
                    DMatrix::zeros(n, 0)
                }
                Some(Some(b)) => b,
                Some(None) => DMatrix::zeros(n, 0),
                None => DMatrix::zeros(n, 0),
            };
            (a, b, c)
        }
    };
    let n = a.nrows();
    let x0 = match &p.x0 {
        Some(x) if x.len() != n => {
            e.push("plant.x0", format!("needs {n} entries, got {}", x.len()));
            DVector::zeros(n)
        }
        Some(x) => DVector::from_column_slice(x),
        None => DVector::zeros(n),
    };
    let process_noise = p
        .process_noise
        .as_ref()
        .and_then(|w| e.noise("plant.process_noise", w, Some(n)));
    let observation_noise = p
        .observation_noise
        .as_ref()
        .and_then(|z| e.noise("plant.observation_noise", z, Some(c.nrows())));
    if e.0.len() > before {
        return None;
    }
    Some(LtiSetup {
        a,
        b,
        c,
        x0,
        dt: p.dt,
        process_noise,
        observation_noise,
    })
}

fn noise_spec(e: &mut Errors, field: &str, json: &NoiseJson, dim: usize) -> Option<NoiseSpec<f64>> {
    let (cov, sigma) = e.noise(field, json, Some(dim))?;
    NoiseSpec::new(cov, sigma).ok()
}

fn matched_model(e: &mut Errors, p: &LtiSetup) -> Option<ModelSetup> {
    let n = p.a.nrows();
    let q = p.c.nrows();
    // Without plant noise the model still needs finite precisions.
    let unit = |d: usize| (DMatrix::identity(d, d), 0.0);
    let (wc, ws) = p.process_noise.clone().unwrap_or_else(|| unit(n));
    let (zc, zs) = p.observation_noise.clone().unwrap_or_else(|| unit(q));
    let process = NoiseSpec::new(wc, ws);
    let observation = NoiseSpec::new(zc, zs);
    match (process, observation) {
        (Ok(process), Ok(observation)) => Some(ModelSetup::Linear {
            a: p.a.clone(),
            c: p.c.clone(),
            process,
            observation,
        }),
        _ => {
            e.push("model", "could not derive a model from the plant noise");
            None
        }
    }
}

fn model_setup(e: &mut Errors, m: &ModelJson) -> Option<ModelSetup> {
    let before = e.0.len();
    match m.kind {
        ModelKind::Linear => {
            let Some(a) = m.a.as_ref().map(|a| e.matrix("model.a", a)) else {
                e.push("model.a", "required for a linear model");
                return None;
            };
            let Some(c) = m.c.as_ref().map(|c| e.matrix("model.c", c)) else {
                e.push("model.c", "required for a linear model");
                return None;
            };
            let (Some(a), Some(c)) = (a, c) else {
                return None;
            };
            let n = a.nrows();
            if !a.is_square() || n == 0 {
                e.push("model.a", "must be a non-empty square matrix");
                return None;
            }
            if c.ncols() != n {
                e.push(
                    "model.c",
                    format!(
                        "model.c is {}x{} but model.a is {n}x{n}",
                        c.nrows(),
                        c.ncols()
                    ),
                );
                return None;
            }
            let process = noise_spec(e, "model.process_noise", &m.process_noise, n);
            let observation = noise_spec(
                e,
                "model.observation_noise",
                &m.observation_noise,
                c.nrows(),
            );
            if e.0.len() > before {
                return None;
            }
            Some(ModelSetup::Linear {
                a,
                c,
                process: process?,
                observation: observation?,
            })
        }
        ModelKind::Attractor => {
            let Some(target) = m.target.clone() else {
                e.push("model.target", "required for an attractor model");
                return None;
            };
            let n = target.len();
            if n == 0 || target.iter().any(|x| !x.is_finite()) {
                e.push(
                    "model.target",
                    "must be a non-empty vector of finite values",
                );
                return None;
            }
            let tau = m.tau.unwrap_or(1.0);
            e.positive("model.tau", tau);
            let c = match &m.c {
                Some(c) => match e.matrix("model.c", c) {
                    Some(c) if c.ncols() == n => c,
                    Some(c) => {
                        e.push(
                            "model.c",
                            format!(
                                "model.c has {} columns but model.target has {n} entries",
                                c.ncols()
                            ),
                        );
                        return None;
                    }
                    None => return None,
                },
                None => DMatrix::identity(n, n),
            };
            let process = noise_spec(e, "model.process_noise", &m.process_noise, n);
            let observation = noise_spec(
                e,
                "model.observation_noise",
                &m.observation_noise,
                c.nrows(),
            );
            if e.0.len() > before {
                return None;
            }
            Some(ModelSetup::Attractor {
                target: DVector::from_vec(target),
                tau,
                c,
                process: process?,
                observation: observation?,
            })
        }
    }
}

fn planner_setup(e: &mut Errors, p: &PlannerJson, episode_steps: usize) -> Option<PlannerSetup> {
    let before = e.0.len();
    if p.horizon == 0 {
        e.push("planner.horizon", "must be positive");
    }
    if p.episodes == 0 {
        e.push("planner.episodes", "must be positive");
    }
    let weights = if p.intrinsic {
        EfeWeights::full()
    } else {
        EfeWeights::extrinsic_only()
    };
    let setup = match p.env {
        PlanEnv::Tmaze => {
            let plans = 4u128.checked_pow(p.horizon as u32).unwrap_or(u128::MAX);
            if plans > ENUMERATION_BUDGET as u128 {
                e.push(
                    "planner.horizon",
                    format!(
                        "4^{} plans exceed the enumeration budget of {ENUMERATION_BUDGET}",
                        p.horizon
                    ),
                );
            }
            let d = TMazeConfig::default();
            let env = TMazeConfig {
                reward_prob: p.reward_prob.unwrap_or(d.reward_prob),
                reward_pref: p.reward_pref.unwrap_or(d.reward_pref),
                no_reward_pref: p.no_reward_pref.unwrap_or(d.no_reward_pref),
            };
            if !(env.reward_prob > 0.5 && env.reward_prob < 1.0) {
                e.push("planner.reward_prob", "must lie in (0.5, 1)");
            }
            for cem_field in [
                ("planner.population", p.population.is_some()),
                ("planner.iters", p.iters.is_some()),
                ("planner.elite_frac", p.elite_frac.is_some()),
                ("planner.beta", p.beta.is_some()),
            ] {
                if cem_field.1 {
                    e.push(cem_field.0, "only used by the mountain_car planner");
                }
            }
            PlannerSetup::Tmaze {
                env,
                horizon: p.horizon,
                episodes: p.episodes,
                weights,
                sample: p.sample,
            }
        }
        PlanEnv::MountainCar => {
            let d = fea_core::planning::MountainCarAgentConfig::<f64>::default();
            let population = p.population.unwrap_or(d.population);
            if population < 2 {
                e.push("planner.population", "must be at least 2");
            }
            let elite_frac = p.elite_frac.unwrap_or(d.elite_frac);
            if !(elite_frac > 0.0 && elite_frac <= 1.0) {
                e.push("planner.elite_frac", "must lie in (0, 1]");
            }
            let beta = p.beta.unwrap_or(d.beta);
            e.positive("planner.beta", beta);
            if p.sample {
                e.push("planner.sample", "only used by the tmaze planner");
            }
            PlannerSetup::MountainCar {
                agent: fea_core::planning::MountainCarAgentConfig {
                    beta,
                    weights,
                    horizon: p.horizon,
                    population,
                    elite_frac,
                    iters: p.iters.unwrap_or(d.iters),
                    episodes: p.episodes,
                    max_steps: episode_steps,
                    ..d
                },
            }
        }
    };
    (e.0.len() == before).then_some(setup)
}
