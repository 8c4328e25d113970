//! Plan selection by expected free energy.

pub mod agent;
pub mod cem;
pub mod discrete;

pub use agent::{
    mountain_car_efe, mountain_car_plan_act_loop, plan_act_loop, ContinuousEpisode,
    DiscreteEnvironment, DiscreteEpisode, DiscretePlannerConfig, MountainCarAgentConfig,
    RewardField,
};
pub use cem::{cem_optimize, CemConfig, GaussianPlan};
pub use discrete::{
    bayes_update, efe_plan, efe_timestep, enumerate_plans, evaluate_plans, kl_divergence,
    plan_posterior, predict_rollout, select_action, DiscretePomdp, EfeBreakdown, EfeWeights, Plan,
    PlanPosterior, RolloutStep, SelectionMode, ENUMERATION_BUDGET, LOG_FLOOR,
};
