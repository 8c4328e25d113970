//! Simulated generative processes.

pub mod lti;
pub mod mountain_car;
pub mod noise;
pub mod tmaze;

use nalgebra::DVector;

use crate::error::Result;
use crate::scalar::Real;

pub use lti::LtiPlant;
pub use mountain_car::MountainCarPlant;
pub use noise::{colored_noise, gaussian_kernel, ColoredNoise, ColoredNoiseConfig};
pub use tmaze::{tmaze_as_pomdp, Context, TMazeConfig, TMazeEnv};

/// A continuous plant driven by an input vector.
pub trait Plant<T: Real> {
    fn input_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;

    /// Advances one sample interval under `u` and returns the observation.
    fn step(&mut self, u: &DVector<T>) -> Result<DVector<T>>;

    /// Noise-free observation that `step(u)` would produce, leaving the
    /// plant untouched.
    fn predict_observation(&self, u: &DVector<T>) -> DVector<T>;
}
