use nalgebra::DVector;

use super::Plant;
use crate::error::{dim_mismatch, Result};
use crate::scalar::Real;

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const POWER: f64 = 0.001;
pub const GRAVITY: f64 = 0.0025;
pub const GOAL_POSITION: f64 = 0.45;
pub const EPISODE_STEPS: usize = 200;

/// Position of the valley floor, where gravity vanishes.
pub const VALLEY: f64 = -std::f64::consts::FRAC_PI_6;

/// Under-powered car in a valley. Observations are `[position, velocity]`;
/// the single input is a force clipped to `[−force_limit, force_limit]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MountainCarPlant<T: Real> {
    pub position: T,
    pub velocity: T,
    pub force_limit: T,
    pub goal_position: T,
    /// When set, reward is 1 at the goal and 0 elsewhere. Otherwise it is
    /// 100 at the goal minus `0.1·u²` per step.
    pub sparse_reward: bool,
}

impl<T: Real> MountainCarPlant<T> {
    pub fn new(position: T) -> Self {
        Self {
            position,
            velocity: T::zero(),
            force_limit: T::one(),
            goal_position: T::lit(GOAL_POSITION),
            sparse_reward: true,
        }
    }

    /// Deterministic update from `(position, velocity)` under force `u`.
    pub fn transition(position: T, velocity: T, u: T, force_limit: T) -> (T, T) {
        let u = u.clamp(-force_limit, force_limit);
        let max_speed = T::lit(MAX_SPEED);
        let mut v = velocity + T::lit(POWER) * u - T::lit(GRAVITY) * (T::lit(3.0) * position).cos();
        v = v.clamp(-max_speed, max_speed);
        let mut p = position + v;
        let lo = T::lit(MIN_POSITION);
        if p <= lo {
            p = lo;
            if v < T::zero() {
                v = T::zero();
            }
        }
        p = p.min(T::lit(MAX_POSITION));
        (p, v)
    }

    pub fn at_goal(&self) -> bool {
        self.position >= self.goal_position
    }

    pub fn observation(&self) -> DVector<T> {
        DVector::from_vec(vec![self.position, self.velocity])
    }

    pub fn reward(&self, u: T) -> T {
        let goal = if self.at_goal() { T::one() } else { T::zero() };
        if self.sparse_reward {
            goal
        } else {
            T::lit(100.0) * goal - T::lit(0.1) * u * u
        }
    }
}

impl<T: Real> Plant<T> for MountainCarPlant<T> {
    fn input_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn step(&mut self, u: &DVector<T>) -> Result<DVector<T>> {
        if u.len() != 1 {
            return Err(dim_mismatch("mountain car input", 1, u.len()));
        }
        let (p, v) = Self::transition(self.position, self.velocity, u[0], self.force_limit);
        self.position = p;
        self.velocity = v;
        Ok(self.observation())
    }

    fn predict_observation(&self, u: &DVector<T>) -> DVector<T> {
        let (p, v) = Self::transition(self.position, self.velocity, u[0], self.force_limit);
        DVector::from_vec(vec![p, v])
    }
}
