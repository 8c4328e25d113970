//! Perception as gradient descent on variational free energy.
//!
//! Under the Laplace approximation the free energy of a generalized belief
//! `μ̃` is a precision-weighted sum of squared prediction errors:
//!
//! ```text
//! F = ½ ε_yᵀ Π̃_z ε_y + ½ ε_xᵀ Π̃_w ε_x + ½ ln|Σ̃_w| + ½ ln|Σ̃_z|
//! ε_y = ỹ − g̃(μ̃)        ε_x = Dμ̃ − f̃(μ̃, ṽ)
//! ```
//!
//! Beliefs follow `μ̃̇ = Dμ̃ − κ_x ∇F`, integrated with explicit Euler. The
//! constant entropy term of the Gaussian posterior is not included in `F`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_mismatch, Error, Result};
use crate::gencoords::{
    block_diagonal, shift, shift_matrix, GeneralizedPrecision, GeneralizedVector, TaylorEmbedder,
};
use crate::model::{predict_flow, predict_observation, GenerativeModel};
use crate::scalar::Real;

/// Posterior mode and precision over generalized states.
#[derive(Debug, Clone, PartialEq)]
pub struct Beliefs<T: Real> {
    pub mean: GeneralizedVector<T>,
    pub precision: GeneralizedPrecision<T>,
}

impl<T: Real> Beliefs<T> {
    /// Beliefs with the given mean and unit precision.
    pub fn with_mean(mean: GeneralizedVector<T>) -> Self {
        let dim = mean.len();
        Self {
            mean,
            precision: GeneralizedPrecision::new(DMatrix::identity(dim, dim))
                .expect("identity is symmetric"),
        }
    }

    /// Posterior covariance `Σ_Q = Π_x⁻¹`.
    pub fn covariance(&self) -> Result<DMatrix<T>> {
        self.precision.covariance()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig<T: Real> {
    pub kappa_x: T,
    pub dt: T,
    pub steps_per_observation: usize,
}

impl<T: Real> EstimatorConfig<T> {
    pub fn new(kappa_x: T, dt: T, steps_per_observation: usize) -> Result<Self> {
        let cfg = Self {
            kappa_x,
            dt,
            steps_per_observation,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: T| x > T::zero() && x.is_finite();
        if !positive(self.kappa_x) {
            return Err(Error::InvalidParameter {
                name: "kappa_x",
                reason: "learning rate must be positive".into(),
            });
        }
        if !positive(self.dt) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: "integration step must be positive".into(),
            });
        }
        if self.steps_per_observation == 0 {
            return Err(Error::InvalidParameter {
                name: "steps_per_observation",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Time between observations: `dt · steps_per_observation`.
    pub fn sample_interval(&self) -> T {
        self.dt * T::from_count(self.steps_per_observation)
    }
}

impl<T: Real> Default for EstimatorConfig<T> {
    fn default() -> Self {
        Self {
            kappa_x: T::one(),
            dt: T::lit(0.005),
            steps_per_observation: 1,
        }
    }
}

/// Sensory and dynamical prediction errors in generalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionErrors<T: Real> {
    pub eps_y: GeneralizedVector<T>,
    pub eps_x: GeneralizedVector<T>,
}

/// Generalized noise precisions of a model at a fixed embedding order.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePrecisions<T: Real> {
    pub process: GeneralizedPrecision<T>,
    pub observation: GeneralizedPrecision<T>,
    /// `½ ln|Σ̃_w| + ½ ln|Σ̃_z|`
    pub log_det_term: T,
}

impl<T: Real> NoisePrecisions<T> {
    pub fn for_model<M: GenerativeModel<T> + ?Sized>(model: &M, order: usize) -> Result<Self> {
        let process = model.process_noise().generalized_precision(order)?;
        let observation = model.observation_noise().generalized_precision(order)?;
        let log_det_term = -T::lit(0.5) * (process.log_det()? + observation.log_det()?);
        Ok(Self {
            process,
            observation,
            log_det_term,
        })
    }
}

fn check_obs<T: Real, M: GenerativeModel<T> + ?Sized>(
    model: &M,
    mean: &GeneralizedVector<T>,
    y: &GeneralizedVector<T>,
) -> Result<()> {
    if mean.base_dim() != model.state_dim() {
        return Err(dim_mismatch(
            "belief mean",
            model.state_dim(),
            mean.base_dim(),
        ));
    }
    if y.base_dim() != model.obs_dim() || y.order() != mean.order() {
        return Err(dim_mismatch(
            "generalized observation",
            format!("order {} dim {}", mean.order(), model.obs_dim()),
            format!("order {} dim {}", y.order(), y.base_dim()),
        ));
    }
    Ok(())
}

/// `ε_y = ỹ − g̃(μ̃)` and `ε_x = Dμ̃ − f̃(μ̃, ṽ)`.
pub fn prediction_errors<T: Real, M: GenerativeModel<T> + ?Sized>(
    model: &M,
    mean: &GeneralizedVector<T>,
    y: &GeneralizedVector<T>,
    causes: &[DVector<T>],
) -> Result<PredictionErrors<T>> {
    check_obs(model, mean, y)?;
    let eps_y = y - &predict_observation(model, mean)?;
    let eps_x = &shift(mean) - &predict_flow(model, mean, causes)?;
    Ok(PredictionErrors { eps_y, eps_x })
}

fn vfe_with<T: Real, M: GenerativeModel<T> + ?Sized>(
    model: &M,
    noise: &NoisePrecisions<T>,
    mean: &GeneralizedVector<T>,
    y: &GeneralizedVector<T>,
    causes: &[DVector<T>],
) -> Result<T> {
    let e = prediction_errors(model, mean, y, causes)?;
    let half = T::lit(0.5);
    Ok(half * noise.observation.quadratic_form(e.eps_y.as_vector())
        + half * noise.process.quadratic_form(e.eps_x.as_vector())
        + noise.log_det_term)
}

/// Laplace-approximate variational free energy.
pub fn vfe<T: Real, M: GenerativeModel<T> + ?Sized>(
    model: &M,
    mean: &GeneralizedVector<T>,
    y: &GeneralizedVector<T>,
    causes: &[DVector<T>],
) -> Result<T> {
    let noise = NoisePrecisions::for_model(model, mean.order())?;
    vfe_with(model, &noise, mean, y, causes)
}

/// `(D − ∂f̃/∂μ̃, ∂g̃/∂μ̃)` at the current mode.
fn generalized_jacobians<T: Real, M: GenerativeModel<T> + ?Sized>(
    model: &M,
    mean: &GeneralizedVector<T>,
    causes: &[DVector<T>],
) -> (DMatrix<T>, DMatrix<T>) {
    let p = mean.order();
    let x0 = mean.block(0).into_owned();
    let v0 = causes
        .first()
        .cloned()
        .unwrap_or_else(|| DVector::zeros(model.cause_dim()));
    let jf = block_diagonal(p, &model.flow_jacobian(&x0, &v0));
    let jg = block_diagonal(p, &model.observation_jacobian(&x0));
    (shift_matrix::<T>(p, model.state_dim()) - jf, jg)
}

fn gradient_with<T: Real, M: GenerativeModel<T> + ?Sized>(
    model: &M,
    noise: &NoisePrecisions<T>,
    mean: &GeneralizedVector<T>,
    y: &GeneralizedVector<T>,
    causes: &[DVector<T>],
) -> Result<DVector<T>> {
    let e = prediction_errors(model, mean, y, causes)?;
    let (d_minus_jf, jg) = generalized_jacobians(model, mean, causes);
    let sensory = jg.transpose() * (noise.observation.matrix() * e.eps_y.as_vector());
    let dynamic = d_minus_jf.transpose() * (noise.process.matrix() * e.eps_x.as_vector());
    Ok(dynamic - sensory)
}

/// `∇_μ̃ F = −(∂g̃/∂μ̃)ᵀ Π̃_z ε_y + (D − ∂f̃/∂μ̃)ᵀ Π̃_w ε_x`.
pub fn vfe_gradient<T: Real, M: GenerativeModel<T> + ?Sized>(
    model: &M,
    mean: &GeneralizedVector<T>,
    y: &GeneralizedVector<T>,
    causes: &[DVector<T>],
) -> Result<GeneralizedVector<T>> {
    let noise = NoisePrecisions::for_model(model, mean.order())?;
    mean.with_data(gradient_with(model, &noise, mean, y, causes)?)
}

fn precision_with<T: Real, M: GenerativeModel<T> + ?Sized>(
    model: &M,
    noise: &NoisePrecisions<T>,
    mean: &GeneralizedVector<T>,
    causes: &[DVector<T>],
) -> Result<GeneralizedPrecision<T>> {
    let (d_minus_jf, jg) = generalized_jacobians(model, mean, causes);
    let dynamic = d_minus_jf.transpose() * noise.process.matrix() * &d_minus_jf;
    let sensory = jg.transpose() * noise.observation.matrix() * &jg;
    GeneralizedPrecision::new(dynamic + sensory)
}

/// Curvature of `F` at the mode:
/// `Π_x = (D − ∂f̃)ᵀ Π̃_w (D − ∂f̃) + (∂g̃)ᵀ Π̃_z ∂g̃`.
pub fn belief_precision<T: Real, M: GenerativeModel<T> + ?Sized>(
    model: &M,
    mean: &GeneralizedVector<T>,
    causes: &[DVector<T>],
) -> Result<GeneralizedPrecision<T>> {
    let noise = NoisePrecisions::for_model(model, mean.order())?;
    precision_with(model, &noise, mean, causes)
}

fn euler_steps<T: Real, M: GenerativeModel<T> + ?Sized>(
    model: &M,
    noise: &NoisePrecisions<T>,
    mean: &GeneralizedVector<T>,
    y: &GeneralizedVector<T>,
    causes: &[DVector<T>],
    cfg: &EstimatorConfig<T>,
    step_index: usize,
) -> Result<GeneralizedVector<T>> {
    let mut mu = mean.clone();
    for _ in 0..cfg.steps_per_observation {
        let grad = gradient_with(model, noise, &mu, y, causes)?;
        let drift = shift(&mu).into_vector() - grad * cfg.kappa_x;
        let next = mu.as_vector() + drift * cfg.dt;
        mu = mu.with_data(next)?;
        if !mu.is_finite() {
            return Err(Error::Divergence {
                step: step_index,
                quantity: "belief mean",
            });
        }
    }
    Ok(mu)
}

/// One observation's worth of belief updating:
/// `μ̃ ← μ̃ + dt·(Dμ̃ − κ_x ∇F)` repeated `steps_per_observation` times,
/// followed by a precision refresh at the new mode.
pub fn step_estimate<T: Real, M: GenerativeModel<T> + ?Sized>(
    model: &M,
    beliefs: &Beliefs<T>,
    y: &GeneralizedVector<T>,
    causes: &[DVector<T>],
    cfg: &EstimatorConfig<T>,
) -> Result<Beliefs<T>> {
    cfg.validate()?;
    let noise = NoisePrecisions::for_model(model, beliefs.mean.order())?;
    let mean = euler_steps(model, &noise, &beliefs.mean, y, causes, cfg, 0)?;
    let precision = precision_with(model, &noise, &mean, causes)?;
    Ok(Beliefs { mean, precision })
}

/// Online filter: embeds each incoming sample into generalized coordinates
/// and descends the free energy.
///
/// Until `p + 1` samples have arrived, the oldest sample is repeated to fill
/// the backward-difference window.
#[derive(Debug)]
pub struct Estimator<T: Real, M> {
    model: M,
    cfg: EstimatorConfig<T>,
    noise: NoisePrecisions<T>,
    embedder: TaylorEmbedder<T>,
    history: VecDeque<DVector<T>>,
    beliefs: Beliefs<T>,
    last_obs: Option<GeneralizedVector<T>>,
    steps: usize,
}

impl<T: Real, M: GenerativeModel<T>> Estimator<T, M> {
    pub fn new(
        model: M,
        initial_mean: GeneralizedVector<T>,
        cfg: EstimatorConfig<T>,
    ) -> Result<Self> {
        cfg.validate()?;
        if initial_mean.base_dim() != model.state_dim() {
            return Err(dim_mismatch(
                "initial belief",
                model.state_dim(),
                initial_mean.base_dim(),
            ));
        }
        let order = initial_mean.order();
        let noise = NoisePrecisions::for_model(&model, order)?;
        let embedder = TaylorEmbedder::new(order, cfg.sample_interval())?;
        let precision = precision_with(&model, &noise, &initial_mean, &[])?;
        Ok(Self {
            model,
            cfg,
            noise,
            embedder,
            history: VecDeque::with_capacity(order + 1),
            beliefs: Beliefs {
                mean: initial_mean,
                precision,
            },
            last_obs: None,
            steps: 0,
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn beliefs(&self) -> &Beliefs<T> {
        &self.beliefs
    }

    pub fn config(&self) -> &EstimatorConfig<T> {
        &self.cfg
    }

    pub fn order(&self) -> usize {
        self.beliefs.mean.order()
    }

    /// Generalized observation used by the most recent update.
    pub fn last_observation(&self) -> Option<&GeneralizedVector<T>> {
        self.last_obs.as_ref()
    }

    pub fn noise(&self) -> &NoisePrecisions<T> {
        &self.noise
    }

    /// Embeds a raw sample into generalized coordinates using the sample
    /// history (without updating beliefs).
    pub fn observe(&mut self, sample: &DVector<T>) -> Result<GeneralizedVector<T>> {
        if sample.len() != self.model.obs_dim() {
            return Err(dim_mismatch(
                "observation sample",
                self.model.obs_dim(),
                sample.len(),
            ));
        }
        let window = self.embedder.window();
        if self.history.is_empty() {
            for _ in 0..window {
                self.history.push_back(sample.clone());
            }
        } else {
            self.history.pop_front();
            self.history.push_back(sample.clone());
        }
        let samples: Vec<_> = self.history.iter().cloned().collect();
        self.embedder.embed(&samples)
    }

    /// Processes one raw observation sample with base-order causes `v`.
    pub fn update(&mut self, sample: &DVector<T>, causes: &[DVector<T>]) -> Result<&Beliefs<T>> {
        let y = self.observe(sample)?;
        self.update_generalized(y, causes)
    }

    /// Processes an already-embedded generalized observation.
    pub fn update_generalized(
        &mut self,
        y: GeneralizedVector<T>,
        causes: &[DVector<T>],
    ) -> Result<&Beliefs<T>> {
        check_obs(&self.model, &self.beliefs.mean, &y)?;
        let mean = euler_steps(
            &self.model,
            &self.noise,
            &self.beliefs.mean,
            &y,
            causes,
            &self.cfg,
            self.steps,
        )?;
        let precision = precision_with(&self.model, &self.noise, &mean, causes)?;
        self.beliefs = Beliefs { mean, precision };
        self.last_obs = Some(y);
        self.steps += 1;
        Ok(&self.beliefs)
    }

    /// Free energy of the current beliefs against the last observation.
    pub fn free_energy(&self, causes: &[DVector<T>]) -> Result<T> {
        match &self.last_obs {
            Some(y) => vfe_with(&self.model, &self.noise, &self.beliefs.mean, y, causes),
            None => Err(Error::InsufficientSamples { needed: 1, got: 0 }),
        }
    }

    pub fn errors(&self, causes: &[DVector<T>]) -> Result<PredictionErrors<T>> {
        match &self.last_obs {
            Some(y) => prediction_errors(&self.model, &self.beliefs.mean, y, causes),
            None => Err(Error::InsufficientSamples { needed: 1, got: 0 }),
        }
    }
}

/// Runs the filter over a whole observation series.
///
/// `causes` is either empty (no inputs) or holds one base-order cause vector
/// per observation. Returns the beliefs after each observation.
pub fn run_filter<T: Real, M: GenerativeModel<T>>(
    model: M,
    initial_mean: GeneralizedVector<T>,
    observations: &[DVector<T>],
    causes: &[DVector<T>],
    cfg: &EstimatorConfig<T>,
) -> Result<Vec<Beliefs<T>>> {
    if observations.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    if !causes.is_empty() && causes.len() != observations.len() {
        return Err(dim_mismatch(
            "cause series length",
            observations.len(),
            causes.len(),
        ));
    }
    let mut est = Estimator::new(model, initial_mean, *cfg)?;
    let mut out = Vec::with_capacity(observations.len());
    for (t, y) in observations.iter().enumerate() {
        let v = causes.get(t).map(std::slice::from_ref).unwrap_or(&[]);
        out.push(est.update(y, v)?.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AttractorGoal, AttractorModel, LinearModel, NoiseSpec};
    use approx::assert_relative_eq;

    fn unit(n: usize) -> NoiseSpec<f64> {
        NoiseSpec::isotropic(n, 1.0, 1.0).unwrap()
    }

    fn scalar_linear(a: f64, c: f64) -> LinearModel<f64> {
        LinearModel::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, c),
            unit(1),
            unit(1),
        )
        .unwrap()
    }

    fn gv(p: usize, n: usize, xs: &[f64]) -> GeneralizedVector<f64> {
        GeneralizedVector::from_slice(p, n, xs).unwrap()
    }

    #[test]
    fn perfect_prediction_has_zero_errors() {
        // x' = -x, mean on the flow: [1, -1, 1]
        let m = scalar_linear(-1.0, 1.0);
        let mu = gv(2, 1, &[1.0, -1.0, 1.0]);
        let y = predict_observation(&m, &mu).unwrap();
        let e = prediction_errors(&m, &mu, &y, &[]).unwrap();
        assert!(e.eps_y.as_vector().amax() < 1e-15);
        // top order has no higher derivative to match: Dμ = 0 there
        assert_relative_eq!(e.eps_x.as_vector()[0], 0.0);
        assert_relative_eq!(e.eps_x.as_vector()[1], 0.0);
    }

    #[test]
    fn sensory_error_substitution() {
        let m = scalar_linear(0.0, 1.0);
        let e = prediction_errors(&m, &gv(0, 1, &[0.0]), &gv(0, 1, &[2.0]), &[]).unwrap();
        assert_eq!(e.eps_y.as_vector()[0], 2.0);
    }

    #[test]
    fn dynamic_error_is_shift_minus_flow() {
        let m = LinearModel::new(
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            unit(1),
            unit(1),
        )
        .unwrap();
        let e = prediction_errors(
            &m,
            &gv(1, 1, &[1.0, 1.0]),
            &gv(1, 1, &[1.0, 1.0]),
            &[DVector::zeros(1)],
        )
        .unwrap();
        assert_eq!(e.eps_y.as_vector().as_slice(), &[0.0, 0.0]);
        assert_eq!(e.eps_x.as_vector().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn vfe_examples() {
        let m = scalar_linear(0.0, 1.0);
        let zero = vfe(&m, &gv(0, 1, &[3.0]), &gv(0, 1, &[3.0]), &[]).unwrap();
        assert_relative_eq!(zero, 0.0);
        let f = vfe(&m, &gv(0, 1, &[0.0]), &gv(0, 1, &[2.0]), &[]).unwrap();
        assert_relative_eq!(f, 2.0);
    }

    #[test]
    fn gradient_vanishes_at_perfect_prediction() {
        let m = scalar_linear(0.0, 1.0);
        let g = vfe_gradient(&m, &gv(0, 1, &[3.0]), &gv(0, 1, &[3.0]), &[]).unwrap();
        assert_eq!(g.as_vector()[0], 0.0);
    }

    #[test]
    fn gradient_scales_with_precision() {
        let mk = |var: f64| {
            LinearModel::new(
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.5]),
                DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
                DMatrix::from_row_slice(1, 2, &[1.0, 0.3]),
                NoiseSpec::isotropic(2, var, 0.7).unwrap(),
                NoiseSpec::isotropic(1, var, 0.7).unwrap(),
            )
            .unwrap()
        };
        let mu = gv(2, 2, &[0.1, -0.4, 0.3, 0.2, -0.6, 0.5]);
        let y = gv(2, 1, &[1.0, 0.5, -0.2]);
        let v = [DVector::from_element(1, 0.4)];
        let g1 = vfe_gradient(&mk(1.0), &mu, &y, &v).unwrap();
        let g4 = vfe_gradient(&mk(0.25), &mu, &y, &v).unwrap();
        assert!((g4.as_vector() - g1.as_vector() * 4.0).amax() < 1e-12);
    }

    #[test]
    fn precision_substitution() {
        // g = id, f = -μ, unit precisions, p = 0: (0 + 1)² + 1 = 2
        let m = scalar_linear(-1.0, 1.0);
        let pi = belief_precision(&m, &gv(0, 1, &[0.3]), &[]).unwrap();
        assert_relative_eq!(pi.matrix()[(0, 0)], 2.0);
    }

    #[test]
    fn static_problem_converges() {
        let m = scalar_linear(0.0, 1.0);
        let cfg = EstimatorConfig::new(10.0, 0.01, 200).unwrap();
        let b0 = Beliefs::with_mean(gv(0, 1, &[0.0]));
        let b = step_estimate(&m, &b0, &gv(0, 1, &[1.0]), &[], &cfg).unwrap();
        assert!((b.mean.as_vector()[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn fixed_point_is_preserved() {
        let m = scalar_linear(0.0, 1.0);
        let cfg = EstimatorConfig::new(1.0, 0.01, 10).unwrap();
        let b0 = Beliefs::with_mean(gv(0, 1, &[0.7]));
        let b = step_estimate(&m, &b0, &gv(0, 1, &[0.7]), &[], &cfg).unwrap();
        assert_eq!(b.mean, b0.mean);
    }

    #[test]
    fn euler_halving_is_consistent() {
        let m = scalar_linear(-0.5, 1.0);
        let y = gv(1, 1, &[1.0, 0.2]);
        let b0 = Beliefs::with_mean(gv(1, 1, &[0.0, 0.0]));
        let coarse = EstimatorConfig::new(2.0, 0.01, 50).unwrap();
        let fine = EstimatorConfig::new(2.0, 0.005, 100).unwrap();
        let finer = EstimatorConfig::new(2.0, 0.0025, 200).unwrap();
        let a = step_estimate(&m, &b0, &y, &[], &coarse).unwrap().mean;
        let b = step_estimate(&m, &b0, &y, &[], &fine).unwrap().mean;
        let c = step_estimate(&m, &b0, &y, &[], &finer).unwrap().mean;
        let d1 = (a.as_vector() - b.as_vector()).amax();
        let d2 = (b.as_vector() - c.as_vector()).amax();
        assert!(d1 < 0.01, "{d1}");
        // first-order scheme: error halves with the step
        assert!((d1 / d2 - 2.0).abs() < 0.2, "{d1} {d2}");
    }

    #[test]
    fn divergence_is_reported() {
        let m = scalar_linear(0.0, 1.0);
        let cfg = EstimatorConfig::new(1e3, 1.0, 2000).unwrap();
        let b0 = Beliefs::with_mean(gv(0, 1, &[0.0]));
        let err = step_estimate(&m, &b0, &gv(0, 1, &[1.0]), &[], &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn descent_never_increases_static_free_energy() {
        let m = scalar_linear(-0.8, 1.5);
        let y = gv(0, 1, &[2.0]);
        let cfg = EstimatorConfig::new(1.0, 0.05, 1).unwrap();
        let mut b = Beliefs::with_mean(gv(0, 1, &[-3.0]));
        let mut prev = vfe(&m, &b.mean, &y, &[]).unwrap();
        for _ in 0..200 {
            b = step_estimate(&m, &b, &y, &[], &cfg).unwrap();
            let f = vfe(&m, &b.mean, &y, &[]).unwrap();
            assert!(f <= prev + 1e-14);
            prev = f;
        }
    }

    #[test]
    fn free_energy_bounded_below_by_log_det() {
        let m = scalar_linear(-0.3, 1.0);
        let noise = NoisePrecisions::for_model(&m, 2).unwrap();
        for s in 0..20 {
            let t = s as f64 * 0.37;
            let mu = gv(2, 1, &[t.sin(), t.cos(), -t]);
            let y = gv(2, 1, &[t.cos(), 1.0, 0.5 * t]);
            assert!(vfe(&m, &mu, &y, &[]).unwrap() >= noise.log_det_term - 1e-12);
        }
    }

    #[test]
    fn conjugate_gaussian_posterior_is_recovered() {
        // prior x ~ N(m0, s0²) encoded as an attractor with τ = 1; y = x + z
        let (m0, s0sq, r, y) = (0.5, 2.0, 0.5, 3.0);
        let model = AttractorModel::new(
            AttractorGoal::new(DVector::from_element(1, m0), 1.0).unwrap(),
            DMatrix::identity(1, 1),
            NoiseSpec::isotropic(1, s0sq, 0.0).unwrap(),
            NoiseSpec::isotropic(1, r, 0.0).unwrap(),
        )
        .unwrap();
        let yv = gv(0, 1, &[y]);
        let cfg = EstimatorConfig::new(1.0, 0.05, 2000).unwrap();
        let b = step_estimate(
            &model,
            &Beliefs::with_mean(gv(0, 1, &[0.0])),
            &yv,
            &[],
            &cfg,
        )
        .unwrap();
        let post_prec = 1.0 / s0sq + 1.0 / r;
        let post_mean = (m0 / s0sq + y / r) / post_prec;
        assert_relative_eq!(b.mean.as_vector()[0], post_mean, epsilon = 1e-9);
        assert_relative_eq!(b.precision.matrix()[(0, 0)], post_prec, epsilon = 1e-12);

        // F at the mode, plus the Gaussian entropy and normalizers, is the
        // negative log evidence.
        let f = vfe(&model, &b.mean, &yv, &[]).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let neg_elbo = f + two_pi.ln() - 0.5 * (two_pi / post_prec).ln();
        let evidence_var = s0sq + r;
        let neg_log_evidence =
            0.5 * (y - m0).powi(2) / evidence_var + 0.5 * (two_pi * evidence_var).ln();
        assert_relative_eq!(neg_elbo, neg_log_evidence, epsilon = 1e-9);
    }

    #[test]
    fn noiseless_filter_tracks_linear_plant() {
        // x' = -x + v with v = 1, y = x; the state relaxes toward 1.
        let m = scalar_linear(-1.0, 1.0);
        let dt = 0.01;
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|k| 1.0 - (-(k as f64) * dt).exp()).collect();
        let obs: Vec<_> = xs.iter().map(|&x| DVector::from_element(1, x)).collect();
        let causes = vec![DVector::from_element(1, 1.0); n];
        let cfg = EstimatorConfig::new(20.0, dt, 1).unwrap();
        let beliefs = run_filter(&m, gv(1, 1, &[0.0, 0.0]), &obs, &causes, &cfg).unwrap();
        let tail = &beliefs[n - 100..];
        let mse = tail
            .iter()
            .zip(&xs[n - 100..])
            .map(|(b, x)| (b.mean.as_vector()[0] - x).powi(2))
            .sum::<f64>()
            / tail.len() as f64;
        assert!(mse < 1e-4, "{mse}");
    }

    #[test]
    fn estimator_rejects_bad_input() {
        let m = scalar_linear(0.0, 1.0);
        assert!(run_filter(&m, gv(0, 1, &[0.0]), &[], &[], &EstimatorConfig::default()).is_err());
        assert!(EstimatorConfig::<f64>::new(0.0, 0.1, 1).is_err());
        assert!(EstimatorConfig::<f64>::new(1.0, 0.1, 0).is_err());
        let mut est = Estimator::new(&m, gv(0, 1, &[0.0]), EstimatorConfig::default()).unwrap();
        assert!(est.update(&DVector::zeros(2), &[]).is_err());
        assert!(est.free_energy(&[]).is_err());
    }

    #[test]
    fn single_precision_filter_runs() {
        let m = LinearModel::<f32>::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::zeros(1, 0),
            DMatrix::identity(1, 1),
            NoiseSpec::isotropic(1, 1.0, 1.0).unwrap(),
            NoiseSpec::isotropic(1, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        let obs = vec![DVector::from_element(1, 0.5f32); 50];
        let cfg = EstimatorConfig::new(5.0f32, 0.01, 1).unwrap();
        let b = run_filter(&m, GeneralizedVector::zeros(1, 1), &obs, &[], &cfg).unwrap();
        assert!(b.last().unwrap().mean.is_finite());
    }
}
