//! Per-seed pipelines behind each subcommand.

use std::collections::BTreeMap;

use fea_core::control::{run_aic, JacobianStrategy, PidController, PidGains};
use fea_core::gencoords::GeneralizedVector;
use fea_core::inference::Estimator;
use fea_core::model::{AttractorGoal, AttractorModel, GenerativeModel, LinearModel};
use fea_core::oracles::{kalman_step, KalmanState};
use fea_core::planning::{
    mountain_car_plan_act_loop, plan_act_loop, DiscretePlannerConfig, SelectionMode,
};
use fea_core::plants::tmaze::{tmaze_as_pomdp, TMazeEnv, CUE, LEFT, RIGHT};
use fea_core::plants::{colored_noise, ColoredNoiseConfig, LtiPlant, Plant};
use nalgebra::{DMatrix, DVector};

use crate::config::ExperimentKind;
use crate::config::{LtiSetup, ModelSetup, PlannerSetup, Setup};
use crate::error::RunError;

/// Settling band for the `settle_step` metric.
pub const SETTLE_TOLERANCE: f64 = 0.02;

/// Column-labelled numeric trace.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Trace {
    fn new(header: Vec<String>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeedRun {
    pub trace: Trace,
    /// Metrics with no samples (e.g. at horizon 0) are left out.
    pub metrics: BTreeMap<String, f64>,
}

fn labels(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}.{i}"))
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn insert(metrics: &mut BTreeMap<String, f64>, name: &str, value: Option<f64>) {
    if let Some(v) = value.filter(|v| v.is_finite()) {
        metrics.insert(name.to_string(), v);
    }
}

/// Process noise is seeded with `2·seed`, observation noise with `2·seed + 1`.
pub fn build_plant(p: &LtiSetup, seed: u64) -> Result<LtiPlant<f64>, RunError> {
    let mut plant = LtiPlant::new(p.a.clone(), p.b.clone(), p.c.clone(), p.x0.clone(), p.dt)?;
    if let Some((cov, sigma)) = &p.process_noise {
        plant =
            plant.with_process_noise(&ColoredNoiseConfig::new(*sigma, cov.clone(), 2 * seed))?;
    }
    if let Some((cov, sigma)) = &p.observation_noise {
        plant = plant.with_observation_noise(&ColoredNoiseConfig::new(
            *sigma,
            cov.clone(),
            2 * seed + 1,
        ))?;
    }
    Ok(plant)
}

pub fn build_model(m: &ModelSetup) -> Result<Box<dyn GenerativeModel<f64>>, RunError> {
    Ok(match m {
        ModelSetup::Linear {
            a,
            c,
            process,
            observation,
        } => Box::new(LinearModel::new(
            a.clone(),
            DMatrix::zeros(a.nrows(), 0),
            c.clone(),
            process.clone(),
            observation.clone(),
        )?),
        ModelSetup::Attractor {
            target,
            tau,
            c,
            process,
            observation,
        } => Box::new(AttractorModel::new(
            AttractorGoal::new(target.clone(), *tau)?,
            c.clone(),
            process.clone(),
            observation.clone(),
        )?),
    })
}

fn parts(setup: &Setup) -> Result<(&LtiSetup, &ModelSetup), RunError> {
    match (&setup.plant, &setup.model) {
        (Some(p), Some(m)) => Ok((p, m)),
        _ => Err(RunError::Setup(format!(
            "{} needs a plant and a model",
            setup.kind.name()
        ))),
    }
}

fn initial_mean(setup: &Setup, n: usize) -> Result<GeneralizedVector<f64>, RunError> {
    Ok(GeneralizedVector::new(
        setup.order,
        n,
        setup.initial_mean.clone(),
    )?)
}

/// Runs one seed of the configured experiment.
pub fn run_seed(setup: &Setup, seed: u64) -> Result<SeedRun, RunError> {
    match setup.kind {
        ExperimentKind::Estimate => estimate(setup, seed, false),
        ExperimentKind::CompareKf => estimate(setup, seed, true),
        ExperimentKind::Control => control(setup, seed, false),
        ExperimentKind::ComparePid => control(setup, seed, true),
        ExperimentKind::Plan => plan(setup, seed),
        ExperimentKind::Noise => noise(setup, seed),
    }
}

fn estimate(setup: &Setup, seed: u64, with_kf: bool) -> Result<SeedRun, RunError> {
    let (p, m) = parts(setup)?;
    let mut plant = build_plant(p, seed)?;
    let model = build_model(m)?;
    let n = model.state_dim();
    let q = model.obs_dim();
    let mut est = Estimator::new(&*model, initial_mean(setup, n)?, setup.estimator)?;

    let mut header = vec!["t".to_string()];
    header.extend(labels("y", q));
    header.extend(labels("mu", n));
    header.extend(labels("x", n));
    if with_kf {
        header.extend(labels("kf", n));
    }
    header.push("F".into());
    let mut trace = Trace::new(header);

    let nx = p.a.nrows();
    let kf_mats = with_kf.then(|| {
        let f = DMatrix::identity(nx, nx) + &p.a * p.dt;
        let qd = p
            .process_noise
            .as_ref()
            .map_or(DMatrix::zeros(nx, nx), |(cov, _)| cov * (p.dt * p.dt));
        let r = p
            .observation_noise
            .as_ref()
            .map_or(DMatrix::zeros(q, q), |(cov, _)| cov.clone());
        (f, qd, r)
    });
    let mut kf = KalmanState::new(
        setup.initial_mean.rows(0, n).into_owned(),
        DMatrix::identity(n, n),
    );
    let u = DVector::zeros(p.b.ncols());
    let burn_in = setup.horizon / 10;
    let (mut sq_aif, mut sq_kf, mut f_vals) = (Vec::new(), Vec::new(), Vec::new());

    for k in 0..setup.horizon {
        let y = plant.step(&u)?;
        est.update(&y, &[])?;
        let mu = est.beliefs().mean.block(0).into_owned();
        let x = plant.state().clone();
        let f = est.free_energy(&[])?;
        let mut row = vec![p.dt * (k + 1) as f64];
        row.extend(y.iter());
        row.extend(mu.iter());
        row.extend(x.iter());
        if let Some((fm, qd, r)) = &kf_mats {
            kf = kalman_step(fm, &p.b, &p.c, qd, r, &kf, &u, &y)?;
            row.extend(kf.mean.iter());
            if k >= burn_in {
                sq_kf.push((&kf.mean - &x).norm_squared() / n as f64);
            }
        }
        row.push(f);
        trace.push(row);
        if k >= burn_in {
            sq_aif.push((&mu - &x).norm_squared() / n as f64);
        }
        f_vals.push(f);
    }

    let mut metrics = BTreeMap::new();
    insert(&mut metrics, "mean_F", mean(f_vals));
    if with_kf {
        let a = mean(sq_aif);
        let b = mean(sq_kf);
        insert(&mut metrics, "mse_aif", a);
        insert(&mut metrics, "mse_kf", b);
        insert(&mut metrics, "mse_ratio", a.zip(b).map(|(a, b)| a / b));
    } else {
        insert(&mut metrics, "mse", mean(sq_aif));
    }
    Ok(SeedRun { trace, metrics })
}

fn control(setup: &Setup, seed: u64, with_pid: bool) -> Result<SeedRun, RunError> {
    let (p, m) = parts(setup)?;
    let ctrl = setup
        .controller
        .ok_or_else(|| RunError::Setup("control needs a controller".into()))?;
    let ModelSetup::Attractor { target, c, .. } = m else {
        return Err(RunError::Setup("control needs an attractor model".into()));
    };
    let y_target = c * target;
    let mut plant = build_plant(p, seed)?;
    let model = build_model(m)?;
    let n = model.state_dim();
    let q = model.obs_dim();
    let nu = p.b.ncols();
    let steps = run_aic(
        &mut plant,
        &*model,
        initial_mean(setup, n)?,
        &setup.estimator,
        &ctrl,
        setup.horizon,
    )?;

    let mut header = vec!["t".to_string()];
    header.extend(labels("y", q));
    header.extend(labels("mu", n));
    header.extend(labels("u", nu));
    header.push("F".into());
    header.extend(labels("err", q));
    if with_pid {
        header.push("u_pid".into());
    }
    let mut trace = Trace::new(header);

    let mut pid = if with_pid {
        let pz = m.observation_noise().precision()[(0, 0)];
        let sigma = m.observation_noise().sigma();
        let j = (&p.c * &p.b)[(0, 0)] * p.dt;
        let j = match ctrl.jacobian_strategy {
            JacobianStrategy::Exact => j,
            JacobianStrategy::SignOnly => j.signum(),
        };
        let ki = ctrl.kappa_u * j * pz;
        let kp = ki * 2.0 * sigma * sigma;
        Some(PidController::new(
            PidGains::new(kp, ki, 0.0)?,
            y_target.clone(),
            ctrl.dt,
        )?)
    } else {
        None
    };

    let mut pid_u = Vec::with_capacity(steps.len());
    for s in &steps {
        let err = &s.y - &y_target;
        let mut row = vec![s.t];
        row.extend(s.y.iter());
        row.extend(s.mu.block(0).iter());
        row.extend(s.u.iter());
        row.push(s.free_energy);
        row.extend(err.iter());
        if let Some(pid) = pid.as_mut() {
            let u = pid.update(&s.y)?[0];
            pid_u.push(u);
            row.push(u);
        }
        trace.push(row);
    }

    let mut metrics = BTreeMap::new();
    let abs_err: Vec<f64> = steps.iter().map(|s| (&s.y - &y_target).amax()).collect();
    insert(&mut metrics, "final_abs_error", abs_err.last().copied());
    if let Some(last_bad) = abs_err.iter().rposition(|e| *e >= SETTLE_TOLERANCE) {
        if last_bad + 1 < abs_err.len() {
            insert(&mut metrics, "settle_step", Some((last_bad + 2) as f64));
        }
    } else if !abs_err.is_empty() {
        insert(&mut metrics, "settle_step", Some(1.0));
    }
    let f: Vec<f64> = steps.iter().map(|s| s.free_energy).collect();
    insert(&mut metrics, "mean_F", mean(f.iter().copied()));
    let decile = f.len() / 10;
    if decile > 0 {
        insert(
            &mut metrics,
            "mean_F_first_decile",
            mean(f[..decile].iter().copied()),
        );
        insert(
            &mut metrics,
            "mean_F_last_decile",
            mean(f[f.len() - decile..].iter().copied()),
        );
    }
    if with_pid {
        // The first increment is skipped: the PID derivative starts at zero.
        let ua: Vec<f64> = steps.iter().map(|s| s.u[0]).collect();
        let (mut worst_rel, mut worst_abs) = (None::<f64>, None::<f64>);
        for k in 1..ua.len() {
            let da = ua[k] - ua[k - 1];
            let dp = pid_u[k] - pid_u[k - 1];
            let diff = (da - dp).abs();
            worst_abs = Some(worst_abs.map_or(diff, |w| w.max(diff)));
            if dp != 0.0 {
                let rel = diff / dp.abs();
                worst_rel = Some(worst_rel.map_or(rel, |w| w.max(rel)));
            }
        }
        insert(&mut metrics, "max_rel_increment_error", worst_rel);
        insert(&mut metrics, "max_abs_increment_error", worst_abs);
    }
    Ok(SeedRun { trace, metrics })
}

fn plan(setup: &Setup, seed: u64) -> Result<SeedRun, RunError> {
    match setup.planner.as_ref() {
        Some(PlannerSetup::Tmaze {
            env,
            horizon,
            episodes,
            weights,
            sample,
        }) => {
            let mut maze = TMazeEnv::seeded(*env, seed)?;
            let pomdp = tmaze_as_pomdp::<f64>(&maze)?;
            let cfg = DiscretePlannerConfig {
                horizon: *horizon,
                weights: *weights,
                mode: if *sample {
                    SelectionMode::Sample { seed }
                } else {
                    SelectionMode::MostLikely
                },
                steps_per_episode: setup.horizon,
            };
            let eps = plan_act_loop(&mut maze, &pomdp, &cfg, *episodes)?;
            let s = pomdp.num_states();
            let mut header = vec!["t".to_string(), "episode".into(), "y.0".into()];
            header.extend(labels("mu", s));
            header.extend(["u.0", "F", "G", "reward"].map(String::from));
            let mut trace = Trace::new(header);
            let mut t = 0usize;
            let mut cue_first = 0usize;
            let mut total_reward = 0.0;
            for (e, ep) in eps.iter().enumerate() {
                for k in 0..ep.actions.len() {
                    t += 1;
                    let a = ep.actions[k];
                    let obs = ep.observations[k + 1];
                    let predicted = pomdp.transition(a) * &ep.beliefs[k];
                    let evidence = pomdp.likelihood().row(obs).dot(&predicted.transpose());
                    let g = ep.efe[k].iter().copied().fold(f64::INFINITY, f64::min);
                    let mut row = vec![t as f64, e as f64, obs as f64];
                    row.extend(ep.beliefs[k + 1].iter());
                    row.extend([a as f64, -evidence.ln(), g, ep.rewards[k]]);
                    trace.push(row);
                    total_reward += ep.rewards[k];
                }
                if visits_cue_first(&ep.actions) {
                    cue_first += 1;
                }
            }
            let mut metrics = BTreeMap::new();
            metrics.insert("episodes".into(), eps.len() as f64);
            metrics.insert("cue_first_episodes".into(), cue_first as f64);
            metrics.insert("total_reward".into(), total_reward);
            Ok(SeedRun { trace, metrics })
        }
        Some(PlannerSetup::MountainCar { agent }) => {
            let eps = mountain_car_plan_act_loop(agent, seed)?;
            let header = [
                "t", "episode", "y.0", "y.1", "mu.0", "mu.1", "u.0", "F", "G", "reward",
            ]
            .map(String::from)
            .to_vec();
            let mut trace = Trace::new(header);
            let mut t = 0usize;
            let mut total_reward = 0.0;
            for (e, ep) in eps.iter().enumerate() {
                for k in 0..ep.actions.len() {
                    t += 1;
                    let obs = &ep.observations[k + 1];
                    let (fm, fv) = ep.field_at_car[k];
                    trace.push(vec![
                        t as f64,
                        e as f64,
                        obs[0],
                        obs[1],
                        fm,
                        fv,
                        ep.actions[k],
                        ep.free_energy[k],
                        ep.efe[k],
                        ep.rewards[k],
                    ]);
                    total_reward += ep.rewards[k];
                }
            }
            let mut metrics = BTreeMap::new();
            metrics.insert("episodes".into(), eps.len() as f64);
            metrics.insert("total_reward".into(), total_reward);
            let first = eps.iter().position(|e| e.reached_goal);
            metrics.insert(
                "reached_goal".into(),
                if first.is_some() { 1.0 } else { 0.0 },
            );
            insert(
                &mut metrics,
                "episodes_to_goal",
                first.map(|i| (i + 1) as f64),
            );
            Ok(SeedRun { trace, metrics })
        }
        None => Err(RunError::Setup("plan needs a planner".into())),
    }
}

/// True when the cue is visited before either arm is entered.
pub fn visits_cue_first(actions: &[usize]) -> bool {
    let cue = actions.iter().position(|&a| a == CUE);
    let arm = actions.iter().position(|&a| a == LEFT || a == RIGHT);
    match (cue, arm) {
        (Some(c), Some(a)) => c < a,
        (Some(_), None) => true,
        _ => false,
    }
}

fn noise(setup: &Setup, seed: u64) -> Result<SeedRun, RunError> {
    let (cov, sigma, dt) = setup
        .noise
        .clone()
        .ok_or_else(|| RunError::Setup("noise needs a noise section".into()))?;
    let dim = cov.nrows();
    let mut header = vec!["t".to_string()];
    header.extend(labels("y", dim));
    let mut trace = Trace::new(header);
    let mut metrics = BTreeMap::new();
    if setup.horizon == 0 {
        return Ok(SeedRun { trace, metrics });
    }
    let samples = colored_noise(
        setup.horizon,
        &ColoredNoiseConfig::new(sigma, cov, seed),
        dt,
    )?;
    for (k, row) in samples.row_iter().enumerate() {
        let mut r = vec![dt * k as f64];
        r.extend(row.iter());
        trace.push(r);
    }
    for j in 0..dim {
        let col: Vec<f64> = samples.column(j).iter().copied().collect();
        let m = mean(col.iter().copied()).unwrap_or(0.0);
        let var = mean(col.iter().map(|x| (x - m) * (x - m)));
        insert(&mut metrics, &format!("variance.{j}"), var);
        if col.len() > 1 {
            let lag1 = mean(col.windows(2).map(|w| (w[0] - m) * (w[1] - m)));
            insert(
                &mut metrics,
                &format!("lag1_autocorr.{j}"),
                lag1.zip(var).map(|(c, v)| c / v),
            );
        }
    }
    Ok(SeedRun { trace, metrics })
}
