//! Four-location T-maze with a hidden reward arm.
//!
//! Locations are `center`, `left`, `right` and `cue`. The reward arm is
//! hidden; the cue location reveals it. Both arms are absorbing and pay out
//! with probability `reward_prob` in the rewarded arm (`1 − reward_prob` in
//! the other).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::planning::{DiscreteEnvironment, DiscretePomdp};
use crate::scalar::Real;

pub const CENTER: usize = 0;
pub const LEFT: usize = 1;
pub const RIGHT: usize = 2;
pub const CUE: usize = 3;
pub const NUM_LOCATIONS: usize = 4;

pub const OBS_CENTER: usize = 0;
pub const OBS_CUE_LEFT: usize = 1;
pub const OBS_CUE_RIGHT: usize = 2;
pub const OBS_REWARD: usize = 3;
pub const OBS_NO_REWARD: usize = 4;
pub const NUM_OBS: usize = 5;

/// Which arm holds the reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Context {
    Left,
    Right,
}

impl Context {
    pub fn index(self) -> usize {
        match self {
            Context::Left => 0,
            Context::Right => 1,
        }
    }

    fn arm(self) -> usize {
        match self {
            Context::Left => LEFT,
            Context::Right => RIGHT,
        }
    }
}

/// Hidden state index for a `(location, context)` pair.
pub fn state_index(location: usize, context: Context) -> usize {
    context.index() * NUM_LOCATIONS + location
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TMazeConfig {
    pub reward_prob: f64,
    /// Log-preference for the reward observation.
    pub reward_pref: f64,
    /// Log-preference for the no-reward observation.
    pub no_reward_pref: f64,
}

impl Default for TMazeConfig {
    fn default() -> Self {
        Self {
            reward_prob: 0.9,
            reward_pref: 2.0,
            no_reward_pref: -1.75,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TMazeEnv {
    cfg: TMazeConfig,
    location: usize,
    context: Context,
    rng: ChaCha8Rng,
}

impl TMazeEnv {
    pub fn new(cfg: TMazeConfig, context: Context, seed: u64) -> Result<Self> {
        if !(cfg.reward_prob > 0.5 && cfg.reward_prob < 1.0) {
            return Err(Error::InvalidParameter {
                name: "reward_prob",
                reason: "must lie in (0.5, 1)".into(),
            });
        }
        if !(cfg.reward_pref.is_finite() && cfg.no_reward_pref.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "preferences",
                reason: "must be finite".into(),
            });
        }
        Ok(Self {
            cfg,
            location: CENTER,
            context,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Random context drawn from `seed`; the same seed drives the outcomes.
    pub fn seeded(cfg: TMazeConfig, seed: u64) -> Result<Self> {
        let mut env = Self::new(cfg, Context::Left, seed)?;
        env.redraw_context();
        Ok(env)
    }

    fn redraw_context(&mut self) {
        self.context = if self.rng.random::<bool>() {
            Context::Right
        } else {
            Context::Left
        };
    }

    pub fn config(&self) -> &TMazeConfig {
        &self.cfg
    }

    pub fn location(&self) -> usize {
        self.location
    }

    pub fn context(&self) -> Context {
        self.context
    }

    /// Moves (arms are absorbing) and returns `(observation, reward)`.
    pub fn step(&mut self, action: usize) -> Result<(usize, f64)> {
        if action >= NUM_LOCATIONS {
            return Err(Error::InvalidParameter {
                name: "action",
                reason: format!("action {action} out of range"),
            });
        }
        if !matches!(self.location, LEFT | RIGHT) {
            self.location = action;
        }
        let obs = match self.location {
            CENTER => OBS_CENTER,
            CUE => match self.context {
                Context::Left => OBS_CUE_LEFT,
                Context::Right => OBS_CUE_RIGHT,
            },
            arm => {
                let p = if arm == self.context.arm() {
                    self.cfg.reward_prob
                } else {
                    1.0 - self.cfg.reward_prob
                };
                if self.rng.random::<f64>() < p {
                    OBS_REWARD
                } else {
                    OBS_NO_REWARD
                }
            }
        };
        let reward = if obs == OBS_REWARD { 1.0 } else { 0.0 };
        Ok((obs, reward))
    }
}

/// A new episode starts at the center with a freshly drawn context.
impl DiscreteEnvironment for TMazeEnv {
    fn reset(&mut self) -> Result<usize> {
        self.location = CENTER;
        self.redraw_context();
        Ok(OBS_CENTER)
    }

    fn step(&mut self, action: usize) -> Result<(usize, f64)> {
        TMazeEnv::step(self, action)
    }
}

/// The agent's model of the maze: 8 states (location × context), 5
/// observations, one move action per location. The prior places the agent
/// at its current location with the context unknown.
pub fn tmaze_as_pomdp<T: Real>(env: &TMazeEnv) -> Result<DiscretePomdp<T>> {
    let cfg = env.config();
    let s = NUM_LOCATIONS * 2;
    let mut likelihood = DMatrix::zeros(NUM_OBS, s);
    for ctx in [Context::Left, Context::Right] {
        for loc in 0..NUM_LOCATIONS {
            let col = state_index(loc, ctx);
            match loc {
                CENTER => likelihood[(OBS_CENTER, col)] = T::one(),
                CUE => {
                    let o = if ctx == Context::Left {
                        OBS_CUE_LEFT
                    } else {
                        OBS_CUE_RIGHT
                    };
                    likelihood[(o, col)] = T::one();
                }
                arm => {
                    let p = if arm == ctx.arm() {
                        cfg.reward_prob
                    } else {
                        1.0 - cfg.reward_prob
                    };
                    likelihood[(OBS_REWARD, col)] = T::lit(p);
                    likelihood[(OBS_NO_REWARD, col)] = T::lit(1.0 - p);
                }
            }
        }
    }
    let transitions = (0..NUM_LOCATIONS)
        .map(|action| {
            let mut b = DMatrix::zeros(s, s);
            for ctx in [Context::Left, Context::Right] {
                for loc in 0..NUM_LOCATIONS {
                    let next = if matches!(loc, LEFT | RIGHT) {
                        loc
                    } else {
                        action
                    };
                    b[(state_index(next, ctx), state_index(loc, ctx))] = T::one();
                }
            }
            b
        })
        .collect();
    let mut preferences = DVector::zeros(NUM_OBS);
    preferences[OBS_REWARD] = T::lit(cfg.reward_pref);
    preferences[OBS_NO_REWARD] = T::lit(cfg.no_reward_pref);
    let mut prior = DVector::zeros(s);
    for ctx in [Context::Left, Context::Right] {
        prior[state_index(env.location(), ctx)] = T::lit(0.5);
    }
    DiscretePomdp::new(likelihood, transitions, preferences, prior)
}
