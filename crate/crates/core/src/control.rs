//! Action by free-energy descent, and a PID reference controller.
//!
//! Actions change the free energy only through the sensory prediction error,
//! so the action gradient is `(∂ỹ/∂u)ᵀ Π̃_z ε_y`. The same sensory Jacobian
//! `∂y/∂u` is used at every generalized order.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_mismatch, Error, Result};
use crate::gencoords::GeneralizedVector;
use crate::inference::{Estimator, EstimatorConfig};
use crate::model::GenerativeModel;
use crate::plants::Plant;
use crate::scalar::Real;

/// How the controller obtains `∂y/∂u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianStrategy {
    /// Finite differences on the simulated plant.
    Exact,
    /// Entrywise sign of the plant Jacobian.
    SignOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig<T: Real> {
    pub kappa_u: T,
    pub dt: T,
    pub jacobian_strategy: JacobianStrategy,
}

impl<T: Real> ControllerConfig<T> {
    pub fn new(kappa_u: T, dt: T, jacobian_strategy: JacobianStrategy) -> Result<Self> {
        let cfg = Self {
            kappa_u,
            dt,
            jacobian_strategy,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `κ_u = 0` is allowed and switches actuation off.
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_u >= T::zero() && self.kappa_u.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "kappa_u",
                reason: "must be finite and non-negative".into(),
            });
        }
        if !(self.dt > T::zero() && self.dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionState<T: Real> {
    pub u: DVector<T>,
}

impl<T: Real> ActionState<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            u: DVector::zeros(dim),
        }
    }
}

/// Entrywise sign, with zero mapped to zero.
pub fn sign_only<T: Real>(jac: &DMatrix<T>) -> DMatrix<T> {
    jac.map(|x| {
        if x > T::zero() {
            T::one()
        } else if x < T::zero() {
            -T::one()
        } else {
            T::zero()
        }
    })
}

/// `∂y/∂u` of the plant's next observation at the current state, by central
/// differences on its noise-free response.
pub fn sensory_action_jacobian<T: Real, P: Plant<T> + ?Sized>(
    strategy: JacobianStrategy,
    plant: &P,
    u: &DVector<T>,
) -> Result<DMatrix<T>> {
    if u.len() != plant.input_dim() {
        return Err(dim_mismatch("action", plant.input_dim(), u.len()));
    }
    let mut jac = DMatrix::zeros(plant.obs_dim(), u.len());
    let mut probe = u.clone();
    for j in 0..u.len() {
        let h = T::lit(1e-6) * u[j].abs().max(T::one());
        probe[j] = u[j] + h;
        let up = plant.predict_observation(&probe);
        probe[j] = u[j] - h;
        let down = plant.predict_observation(&probe);
        probe[j] = u[j];
        jac.column_mut(j).copy_from(&((up - down) / (h + h)));
    }
    if !jac.iter().all(|x| x.is_finite()) {
        return Err(Error::Divergence {
            step: 0,
            quantity: "sensory Jacobian",
        });
    }
    Ok(match strategy {
        JacobianStrategy::Exact => jac,
        JacobianStrategy::SignOnly => sign_only(&jac),
    })
}

/// `∂F/∂u = Σ_k Jᵀ (Π̃_z ε_y)_k`.
pub fn action_gradient<T: Real>(
    weighted_error: &GeneralizedVector<T>,
    jac: &DMatrix<T>,
) -> Result<DVector<T>> {
    if jac.nrows() != weighted_error.base_dim() {
        return Err(dim_mismatch(
            "sensory Jacobian rows",
            weighted_error.base_dim(),
            jac.nrows(),
        ));
    }
    let mut total = DVector::zeros(weighted_error.base_dim());
    for k in 0..weighted_error.num_blocks() {
        total += weighted_error.block(k);
    }
    Ok(jac.transpose() * total)
}

fn action_step<T: Real>(
    u: &ActionState<T>,
    weighted_error: &GeneralizedVector<T>,
    jac: &DMatrix<T>,
    cfg: &ControllerConfig<T>,
    step: usize,
) -> Result<ActionState<T>> {
    if jac.ncols() != u.u.len() {
        return Err(dim_mismatch(
            "sensory Jacobian columns",
            u.u.len(),
            jac.ncols(),
        ));
    }
    let grad = action_gradient(weighted_error, jac)?;
    let next = &u.u - grad * (cfg.dt * cfg.kappa_u);
    if !next.iter().all(|x| x.is_finite()) {
        return Err(Error::Divergence {
            step,
            quantity: "action",
        });
    }
    Ok(ActionState { u: next })
}

/// `u ← u − dt·κ_u·Jᵀ Π̃_z ε_y` with `ε_y = ỹ − g̃(μ̃)`.
pub fn step_action<T: Real, M: GenerativeModel<T> + ?Sized>(
    model: &M,
    mean: &GeneralizedVector<T>,
    y: &GeneralizedVector<T>,
    u: &ActionState<T>,
    cfg: &ControllerConfig<T>,
    jac: &DMatrix<T>,
) -> Result<ActionState<T>> {
    cfg.validate()?;
    let errors = crate::inference::prediction_errors(model, mean, y, &[])?;
    let pz = model
        .observation_noise()
        .generalized_precision(mean.order())?;
    let weighted = errors
        .eps_y
        .with_data(pz.matrix() * errors.eps_y.as_vector())?;
    action_step(u, &weighted, jac, cfg, 0)
}

/// One record of the closed loop, taken after the action update.
#[derive(Debug, Clone, PartialEq)]
pub struct AicStep<T: Real> {
    pub t: T,
    pub y: DVector<T>,
    pub mu: GeneralizedVector<T>,
    pub u: DVector<T>,
    pub free_energy: T,
}

/// Closed-loop active inference: plant step, belief update, action update,
/// repeated `horizon` times from `u = 0`.
pub fn run_aic<T: Real, P: Plant<T> + ?Sized, M: GenerativeModel<T>>(
    plant: &mut P,
    model: M,
    initial_mean: GeneralizedVector<T>,
    estimator_cfg: &EstimatorConfig<T>,
    controller_cfg: &ControllerConfig<T>,
    horizon: usize,
) -> Result<Vec<AicStep<T>>> {
    controller_cfg.validate()?;
    if plant.obs_dim() != model.obs_dim() {
        return Err(dim_mismatch(
            "plant observation",
            model.obs_dim(),
            plant.obs_dim(),
        ));
    }
    let mut est = Estimator::new(model, initial_mean, *estimator_cfg)?;
    let pz = est.noise().observation.clone();
    let mut action = ActionState::zeros(plant.input_dim());
    let mut trace = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let y = plant.step(&action.u)?;
        est.update(&y, &[])?;
        let errors = est.errors(&[])?;
        let weighted = errors
            .eps_y
            .with_data(pz.matrix() * errors.eps_y.as_vector())?;
        let jac = sensory_action_jacobian(controller_cfg.jacobian_strategy, plant, &action.u)?;
        action = action_step(&action, &weighted, &jac, controller_cfg, k)?;
        trace.push(AicStep {
            t: controller_cfg.dt * T::from_count(k + 1),
            y,
            mu: est.beliefs().mean.clone(),
            u: action.u.clone(),
            free_energy: est.free_energy(&[])?,
        });
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidGains<T: Real> {
    pub kp: T,
    pub ki: T,
    pub kd: T,
}

impl<T: Real> PidGains<T> {
    pub fn new(kp: T, ki: T, kd: T) -> Result<Self> {
        if [kp, ki, kd]
            .iter()
            .any(|g| !(*g >= T::zero() && g.is_finite()))
        {
            return Err(Error::InvalidParameter {
                name: "pid gains",
                reason: "must be finite and non-negative".into(),
            });
        }
        Ok(Self { kp, ki, kd })
    }
}

/// Discrete PID on `e = target − y` with a rectangle-rule integral and a
/// backward-difference derivative (zero on the first sample).
#[derive(Debug, Clone, PartialEq)]
pub struct PidController<T: Real> {
    gains: PidGains<T>,
    target: DVector<T>,
    dt: T,
    integral: DVector<T>,
    prev_error: Option<DVector<T>>,
}

impl<T: Real> PidController<T> {
    pub fn new(gains: PidGains<T>, target: DVector<T>, dt: T) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: "must be positive".into(),
            });
        }
        let n = target.len();
        Ok(Self {
            gains,
            target,
            dt,
            integral: DVector::zeros(n),
            prev_error: None,
        })
    }

    pub fn gains(&self) -> &PidGains<T> {
        &self.gains
    }

    pub fn reset(&mut self) {
        self.integral.fill(T::zero());
        self.prev_error = None;
    }

    pub fn update(&mut self, y: &DVector<T>) -> Result<DVector<T>> {
        if y.len() != self.target.len() {
            return Err(dim_mismatch("PID measurement", self.target.len(), y.len()));
        }
        let e = &self.target - y;
        self.integral += &e * self.dt;
        let deriv = match &self.prev_error {
            Some(prev) => (&e - prev) / self.dt,
            None => DVector::zeros(e.len()),
        };
        let u = &e * self.gains.kp + &self.integral * self.gains.ki + deriv * self.gains.kd;
        self.prev_error = Some(e);
        Ok(u)
    }
}

/// Convenience constructor mirroring the classical formula.
pub fn pid_controller<T: Real>(
    gains: PidGains<T>,
    target: DVector<T>,
    dt: T,
) -> Result<PidController<T>> {
    PidController::new(gains, target, dt)
}
