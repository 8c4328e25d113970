//! Perceive, score, act loops for discrete and continuous environments.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cem::{cem_optimize, CemConfig, GaussianPlan};
use super::discrete::{
    bayes_update, evaluate_plans, select_action, DiscretePomdp, EfeWeights, SelectionMode,
};
use crate::error::{Error, Result};
use crate::plants::mountain_car::{MountainCarPlant, MAX_POSITION, MIN_POSITION};
use crate::plants::Plant;
use crate::scalar::Real;

/// An environment with discrete actions and observations.
pub trait DiscreteEnvironment {
    /// Starts a new episode and returns the first observation.
    fn reset(&mut self) -> Result<usize>;
    /// Applies `action`, returning `(observation, reward)`.
    fn step(&mut self, action: usize) -> Result<(usize, f64)>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscretePlannerConfig<T: Real> {
    pub horizon: usize,
    pub weights: EfeWeights<T>,
    pub mode: SelectionMode,
    pub steps_per_episode: usize,
}

/// Everything that happened in one discrete episode. `beliefs[0]` is the
/// posterior after the first observation; `beliefs[k + 1]` follows
/// `actions[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteEpisode<T: Real> {
    pub observations: Vec<usize>,
    pub beliefs: Vec<DVector<T>>,
    pub actions: Vec<usize>,
    /// Weighted `G` of every enumerated plan at each decision.
    pub efe: Vec<Vec<T>>,
    pub plan_probabilities: Vec<DVector<T>>,
    pub rewards: Vec<f64>,
}

/// Runs `episodes` episodes with exact Bayesian perception and exhaustive
/// plan scoring, replanning after every step.
pub fn plan_act_loop<T: Real, E: DiscreteEnvironment>(
    env: &mut E,
    pomdp: &DiscretePomdp<T>,
    cfg: &DiscretePlannerConfig<T>,
    episodes: usize,
) -> Result<Vec<DiscreteEpisode<T>>> {
    if cfg.horizon == 0 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: "must be positive".into(),
        });
    }
    let mut out = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let first = env.reset()?;
        let mut belief = bayes_update(pomdp, pomdp.prior(), first)?;
        let mut trace = DiscreteEpisode {
            observations: vec![first],
            beliefs: vec![belief.clone()],
            actions: Vec::new(),
            efe: Vec::new(),
            plan_probabilities: Vec::new(),
            rewards: Vec::new(),
        };
        for step in 0..cfg.steps_per_episode {
            let (posterior, breakdowns) = evaluate_plans(pomdp, &belief, cfg.horizon, cfg.weights)?;
            let mode = match cfg.mode {
                SelectionMode::Sample { seed } => SelectionMode::Sample {
                    seed: seed.wrapping_add((episode * cfg.steps_per_episode + step) as u64),
                },
                m => m,
            };
            let action = select_action(&posterior, mode);
            let (obs, reward) = env.step(action)?;
            let predicted = pomdp.transition(action) * &belief;
            belief = bayes_update(pomdp, &predicted, obs)?;

            trace.efe.push(
                breakdowns
                    .iter()
                    .map(|b| b.weighted_total(cfg.weights))
                    .collect(),
            );
            trace.plan_probabilities.push(posterior.probabilities);
            trace.actions.push(action);
            trace.observations.push(obs);
            trace.beliefs.push(belief.clone());
            trace.rewards.push(reward);
        }
        out.push(trace);
    }
    Ok(out)
}

/// Gaussian belief over an unknown reward, one independent cell per
/// position bin, updated conjugately from noisy reward observations.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardField<T: Real> {
    lo: T,
    hi: T,
    pub mean: Vec<T>,
    pub var: Vec<T>,
    noise_var: T,
}

impl<T: Real> RewardField<T> {
    pub fn new(lo: T, hi: T, bins: usize, prior_var: T, noise_var: T) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::InvalidParameter {
                name: "bins",
                reason: "need at least one bin over a non-empty range".into(),
            });
        }
        if !(prior_var > T::zero() && noise_var > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "reward variance",
                reason: "prior and noise variances must be positive".into(),
            });
        }
        Ok(Self {
            lo,
            hi,
            mean: vec![T::zero(); bins],
            var: vec![prior_var; bins],
            noise_var,
        })
    }

    pub fn bins(&self) -> usize {
        self.mean.len()
    }

    pub fn bin(&self, x: T) -> usize {
        let frac = ((x - self.lo) / (self.hi - self.lo)).max(T::zero());
        let idx = (frac * T::from_count(self.bins()))
            .floor()
            .to_usize()
            .unwrap_or(0);
        idx.min(self.bins() - 1)
    }

    pub fn observe(&mut self, x: T, reward: T) {
        let b = self.bin(x);
        let precision = T::one() / self.var[b] + T::one() / self.noise_var;
        let var = T::one() / precision;
        self.mean[b] = var * (self.mean[b] / self.var[b] + reward / self.noise_var);
        self.var[b] = var;
    }

    /// Negative log predictive density of `reward` at `x`; this is the free
    /// energy of the exact posterior that the update would produce.
    pub fn surprise(&self, x: T, reward: T) -> T {
        let b = self.bin(x);
        let v = self.var[b] + self.noise_var;
        let d = reward - self.mean[b];
        T::lit(0.5) * ((T::lit(std::f64::consts::TAU) * v).ln() + d * d / v)
    }

    /// Expected information gain about the field from `counts[b]` further
    /// observations of each bin: `Σ_b ½ ln(1 + n_b·v_b/s²)`.
    pub fn information_gain(&self, counts: &[usize]) -> T {
        counts
            .iter()
            .zip(&self.var)
            .filter(|(n, _)| **n > 0)
            .fold(T::zero(), |acc, (&n, &v)| {
                acc + T::lit(0.5) * (T::one() + T::from_count(n) * v / self.noise_var).ln()
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MountainCarAgentConfig<T: Real> {
    pub bins: usize,
    pub prior_var: T,
    pub reward_noise_var: T,
    /// Inverse temperature of the Boltzmann preference `ln p̃ = β·r`.
    pub beta: T,
    pub weights: EfeWeights<T>,
    pub horizon: usize,
    pub population: usize,
    pub elite_frac: T,
    pub iters: usize,
    pub init_std: T,
    pub episodes: usize,
    pub max_steps: usize,
    /// Start positions are drawn uniformly from this interval.
    pub start: (T, T),
    /// Stop once an episode reaches the goal.
    pub stop_at_goal: bool,
}

impl<T: Real> Default for MountainCarAgentConfig<T> {
    fn default() -> Self {
        Self {
            bins: 36,
            prior_var: T::one(),
            reward_noise_var: T::lit(0.01),
            beta: T::one(),
            weights: EfeWeights::full(),
            horizon: 50,
            population: 64,
            elite_frac: T::lit(0.125),
            iters: 4,
            init_std: T::one(),
            episodes: 25,
            max_steps: super::super::plants::mountain_car::EPISODE_STEPS,
            start: (T::lit(-0.6), T::lit(-0.4)),
            stop_at_goal: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousEpisode<T: Real> {
    /// `[position, velocity]` before each action, plus the final state.
    pub observations: Vec<DVector<T>>,
    pub actions: Vec<T>,
    /// `G` of the plan whose first action was executed.
    pub efe: Vec<T>,
    pub rewards: Vec<T>,
    /// Surprise of each reward observation before the field update.
    pub free_energy: Vec<T>,
    /// Field posterior `(mean, var)` at the car's bin after each update.
    pub field_at_car: Vec<(T, T)>,
    pub reached_goal: bool,
    /// Posterior mean of the reward field at the end of the episode.
    pub field_mean: Vec<T>,
}

/// Weighted `G` of an action sequence from `(position, velocity)`: extrinsic
/// `−β Σ_t E[r(x_t)]` minus the expected information gain about the field.
pub fn mountain_car_efe<T: Real>(
    field: &RewardField<T>,
    cfg: &MountainCarAgentConfig<T>,
    start: (T, T),
    force_limit: T,
    plan: &DMatrix<T>,
) -> T {
    let (mut p, mut v) = start;
    let mut counts = vec![0usize; field.bins()];
    let mut extrinsic = T::zero();
    for &u in plan.iter() {
        (p, v) = MountainCarPlant::transition(p, v, u, force_limit);
        let b = field.bin(p);
        counts[b] += 1;
        extrinsic -= cfg.beta * field.mean[b];
    }
    cfg.weights.extrinsic * extrinsic - cfg.weights.intrinsic * field.information_gain(&counts)
}

/// CEM-EFE agent on the sparse-reward mountain car. The car state is
/// observed without noise; what the agent learns is where reward lives.
/// The field belief persists across episodes.
pub fn mountain_car_plan_act_loop<T: Real>(
    cfg: &MountainCarAgentConfig<T>,
    seed: u64,
) -> Result<Vec<ContinuousEpisode<T>>> {
    if cfg.horizon == 0 || cfg.max_steps == 0 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: "horizon and episode length must be positive".into(),
        });
    }
    let mut field = RewardField::new(
        T::lit(MIN_POSITION),
        T::lit(MAX_POSITION),
        cfg.bins,
        cfg.prior_var,
        cfg.reward_noise_var,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fresh = || {
        GaussianPlan::new(
            DMatrix::zeros(cfg.horizon, 1),
            DMatrix::from_element(cfg.horizon, 1, cfg.init_std),
        )
    };
    let mut out = Vec::with_capacity(cfg.episodes);
    let mut decision = 0u64;
    for _ in 0..cfg.episodes {
        let frac: f64 = rng.random();
        let start = cfg.start.0 + (cfg.start.1 - cfg.start.0) * T::lit(frac);
        let mut car = MountainCarPlant::new(start);
        let mut plan = fresh()?;
        let mut trace = ContinuousEpisode {
            observations: vec![car.observation()],
            actions: Vec::new(),
            efe: Vec::new(),
            rewards: Vec::new(),
            free_energy: Vec::new(),
            field_at_car: Vec::new(),
            reached_goal: false,
            field_mean: Vec::new(),
        };
        for _ in 0..cfg.max_steps {
            let cem = CemConfig {
                population: cfg.population,
                elite_frac: cfg.elite_frac,
                iters: cfg.iters,
                init_mean: plan.mean().clone(),
                init_std: plan.stddev().clone(),
                seed: seed
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add(decision),
                bounds: Some((-car.force_limit, car.force_limit)),
            };
            decision += 1;
            let state = (car.position, car.velocity);
            let score = |u: &DMatrix<T>| mountain_car_efe(&field, cfg, state, car.force_limit, u);
            plan = cem_optimize(score, &cem)?;
            let g = score(plan.mean());
            let u = plan.mean()[(0, 0)];
            car.step(&DVector::from_element(1, u))?;
            let r = car.reward(u);
            trace.free_energy.push(field.surprise(car.position, r));
            field.observe(car.position, r);
            let b = field.bin(car.position);
            trace.field_at_car.push((field.mean[b], field.var[b]));

            trace.actions.push(u);
            trace.efe.push(g);
            trace.rewards.push(r);
            trace.observations.push(car.observation());
            if car.at_goal() {
                trace.reached_goal = true;
                break;
            }
            plan = plan.shifted(cfg.init_std);
        }
        trace.field_mean = field.mean.clone();
        let done = trace.reached_goal && cfg.stop_at_goal;
        out.push(trace);
        if done {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plants::tmaze::{tmaze_as_pomdp, Context, TMazeConfig, TMazeEnv, CUE, LEFT, RIGHT};
    use approx::assert_relative_eq;

    fn tmaze_cfg(weights: EfeWeights<f64>) -> DiscretePlannerConfig<f64> {
        DiscretePlannerConfig {
            horizon: 2,
            weights,
            mode: SelectionMode::MostLikely,
            steps_per_episode: 3,
        }
    }

    #[test]
    fn tmaze_agent_checks_the_cue_then_collects() {
        let mut env = TMazeEnv::new(TMazeConfig::default(), Context::Left, 1).unwrap();
        let pomdp = tmaze_as_pomdp::<f64>(&env).unwrap();
        let eps = plan_act_loop(&mut env, &pomdp, &tmaze_cfg(EfeWeights::full()), 4).unwrap();
        for ep in &eps {
            assert_eq!(ep.actions[0], CUE);
            assert!(matches!(ep.actions[1], LEFT | RIGHT));
            assert_eq!(ep.beliefs.len(), 4);
            for b in &ep.beliefs {
                assert_relative_eq!(b.sum(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn flat_objective_gives_uniform_plan_posterior() {
        let mut env = TMazeEnv::new(TMazeConfig::default(), Context::Right, 2).unwrap();
        let pomdp = tmaze_as_pomdp::<f64>(&env)
            .unwrap()
            .with_preferences(DVector::zeros(5))
            .unwrap();
        let weights = EfeWeights {
            extrinsic: 1.0,
            intrinsic: 0.0,
        };
        let eps = plan_act_loop(&mut env, &pomdp, &tmaze_cfg(weights), 2).unwrap();
        for q in eps.iter().flat_map(|e| &e.plan_probabilities) {
            for &p in q.iter() {
                assert_relative_eq!(p, 1.0 / 16.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sampled_selection_is_reproducible() {
        let run = || {
            let mut env = TMazeEnv::new(TMazeConfig::default(), Context::Right, 5).unwrap();
            let pomdp = tmaze_as_pomdp::<f64>(&env).unwrap();
            let mut cfg = tmaze_cfg(EfeWeights::full());
            cfg.mode = SelectionMode::Sample { seed: 11 };
            plan_act_loop(&mut env, &pomdp, &cfg, 3).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn reward_field_update_is_conjugate() {
        let mut f = RewardField::new(0.0, 1.0, 4, 1.0, 1.0).unwrap();
        assert_eq!(f.bin(-3.0), 0);
        assert_eq!(f.bin(0.3), 1);
        assert_eq!(f.bin(1.0), 3);
        f.observe(0.3, 2.0);
        assert_relative_eq!(f.mean[1], 1.0);
        assert_relative_eq!(f.var[1], 0.5);
        assert_relative_eq!(f.information_gain(&[0, 1, 0, 0]), 0.5 * 1.5f64.ln());
        assert_relative_eq!(f.information_gain(&[2, 0, 0, 0]), 0.5 * 3f64.ln());
    }

    #[test]
    fn short_mountain_car_run_is_deterministic() {
        let cfg = MountainCarAgentConfig::<f64> {
            episodes: 2,
            max_steps: 20,
            horizon: 10,
            population: 16,
            iters: 2,
            ..Default::default()
        };
        let a = mountain_car_plan_act_loop(&cfg, 3).unwrap();
        assert_eq!(a, mountain_car_plan_act_loop(&cfg, 3).unwrap());
        assert_eq!(a.len(), 2);
        assert!(a[0].actions.iter().all(|u| u.abs() <= 1.0));
    }
}
