use nalgebra::{DMatrix, DVector};

use super::noise::{ColoredNoise, ColoredNoiseConfig};
use super::Plant;
use crate::error::{dim_mismatch, Error, Result};
use crate::scalar::Real;

/// Linear time-invariant plant integrated with Euler–Maruyama:
/// `x ← x + dt·(Ax + Bu + w)`, `y = Cx + z`.
///
/// The process noise `w` is a continuous-time rate disturbance, so it is
/// scaled by `dt` like the drift.
#[derive(Debug, Clone)]
pub struct LtiPlant<T: Real> {
    a: DMatrix<T>,
    b: DMatrix<T>,
    c: DMatrix<T>,
    dt: T,
    state: DVector<T>,
    process: Option<ColoredNoise<T>>,
    observation: Option<ColoredNoise<T>>,
}

impl<T: Real> LtiPlant<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>, x0: DVector<T>, dt: T) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(dim_mismatch(
                "A",
                format!("{n}x{n}"),
                format!("{}x{}", n, a.ncols()),
            ));
        }
        if b.nrows() != n {
            return Err(dim_mismatch("B rows", n, b.nrows()));
        }
        if c.ncols() != n {
            return Err(dim_mismatch("C columns", n, c.ncols()));
        }
        if x0.len() != n {
            return Err(dim_mismatch("initial state", n, x0.len()));
        }
        if !(dt > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: "must be positive".into(),
            });
        }
        Ok(Self {
            a,
            b,
            c,
            dt,
            state: x0,
            process: None,
            observation: None,
        })
    }

    /// `n` decoupled integrators observed directly: `ẋ = u`, `y = x`.
    pub fn integrator(x0: DVector<T>, dt: T) -> Result<Self> {
        let n = x0.len();
        Self::new(
            DMatrix::zeros(n, n),
            DMatrix::identity(n, n),
            DMatrix::identity(n, n),
            x0,
            dt,
        )
    }

    pub fn with_process_noise(mut self, cfg: &ColoredNoiseConfig<T>) -> Result<Self> {
        if cfg.dim() != self.state_dim() {
            return Err(dim_mismatch("process noise", self.state_dim(), cfg.dim()));
        }
        self.process = Some(ColoredNoise::new(cfg, self.dt)?);
        Ok(self)
    }

    pub fn with_observation_noise(mut self, cfg: &ColoredNoiseConfig<T>) -> Result<Self> {
        if cfg.dim() != self.c.nrows() {
            return Err(dim_mismatch("observation noise", self.c.nrows(), cfg.dim()));
        }
        self.observation = Some(ColoredNoise::new(cfg, self.dt)?);
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn state(&self) -> &DVector<T> {
        &self.state
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<T> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<T> {
        &self.c
    }

    fn drift(&self, u: &DVector<T>) -> DVector<T> {
        &self.a * &self.state + &self.b * u
    }

    /// Noisy observation of the current state (draws observation noise).
    pub fn measure(&mut self) -> DVector<T> {
        let mut y = &self.c * &self.state;
        if let Some(z) = self.observation.as_mut() {
            y += z.next_sample();
        }
        y
    }
}

impl<T: Real> Plant<T> for LtiPlant<T> {
    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn obs_dim(&self) -> usize {
        self.c.nrows()
    }

    fn step(&mut self, u: &DVector<T>) -> Result<DVector<T>> {
        if u.len() != self.input_dim() {
            return Err(dim_mismatch("plant input", self.input_dim(), u.len()));
        }
        let mut rate = self.drift(u);
        if let Some(w) = self.process.as_mut() {
            rate += w.next_sample();
        }
        self.state += rate * self.dt;
        Ok(self.measure())
    }

    fn predict_observation(&self, u: &DVector<T>) -> DVector<T> {
        &self.c * (&self.state + self.drift(u) * self.dt)
    }
}
