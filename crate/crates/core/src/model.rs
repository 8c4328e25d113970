//! Generative models: flow `f`, observation map `g`, their Jacobians and the
//! noise that corrupts both, plus goal encodings (attractors and Boltzmann
//! preferences).

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_mismatch, Error, Result};
use crate::gencoords::{
    generalized_precision, smoothness_precision, GeneralizedPrecision, GeneralizedVector,
    SmoothnessKernel,
};
use crate::scalar::Real;

/// Gaussian noise with covariance `Σ` and temporal smoothness `σ`
/// (`σ = 0` means white noise, usable only at embedding order 0).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec<T: Real> {
    covariance: DMatrix<T>,
    precision: DMatrix<T>,
    sigma: T,
}

impl<T: Real> NoiseSpec<T> {
    pub fn new(covariance: DMatrix<T>, sigma: T) -> Result<Self> {
        if !covariance.is_square() {
            return Err(dim_mismatch(
                "NoiseSpec covariance",
                "square",
                format!("{}x{}", covariance.nrows(), covariance.ncols()),
            ));
        }
        if !crate::gencoords::is_symmetric(&covariance) {
            return Err(Error::InvalidParameter {
                name: "covariance",
                reason: "not symmetric".into(),
            });
        }
        if !(sigma >= T::zero()) || !sigma.is_finite() {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: format!("smoothness must be finite and >= 0, got {sigma}"),
            });
        }
        let precision = covariance
            .clone()
            .cholesky()
            .ok_or(Error::Singular("noise covariance"))?
            .inverse();
        Ok(Self {
            covariance,
            precision: crate::gencoords::symmetrize(&precision),
            sigma,
        })
    }

    /// Isotropic noise `variance · I`.
    pub fn isotropic(dim: usize, variance: T, sigma: T) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim) * variance, sigma)
    }

    pub fn covariance(&self) -> &DMatrix<T> {
        &self.covariance
    }

    pub fn precision(&self) -> &DMatrix<T> {
        &self.precision
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn kernel(&self, order: usize) -> Result<SmoothnessKernel<T>> {
        SmoothnessKernel::new(self.sigma, order)
    }

    /// `S(σ²) ⊗ Π` at the given embedding order.
    pub fn generalized_precision(&self, order: usize) -> Result<GeneralizedPrecision<T>> {
        if order == 0 {
            return GeneralizedPrecision::new(self.precision.clone());
        }
        let s = smoothness_precision(&self.kernel(order)?)?;
        generalized_precision(&s, &self.precision)
    }
}

/// Central-difference step for a coordinate of magnitude `x`.
fn fd_step<T: Real>(x: T) -> T {
    let base = if T::default_epsilon() < T::lit(1e-10) {
        T::lit(1e-6)
    } else {
        T::default_epsilon().cbrt()
    };
    base * x.abs().max(T::one())
}

fn fd_jacobian<T: Real>(
    x: &DVector<T>,
    out_dim: usize,
    f: impl Fn(&DVector<T>) -> DVector<T>,
) -> DMatrix<T> {
    let mut jac = DMatrix::zeros(out_dim, x.len());
    let mut probe = x.clone();
    for j in 0..x.len() {
        let h = fd_step(x[j]);
        probe[j] = x[j] + h;
        let up = f(&probe);
        probe[j] = x[j] - h;
        let down = f(&probe);
        probe[j] = x[j];
        jac.column_mut(j).copy_from(&((up - down) / (h + h)));
    }
    jac
}

/// A continuous-time generative model
/// `ẋ = f(x, v) + w`, `y = g(x) + z`.
///
/// Jacobians default to central finite differences; linear models override
/// them with their exact matrices.
pub trait GenerativeModel<T: Real> {
    fn state_dim(&self) -> usize;
    fn cause_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;

    /// Flow `f(x, v)` on base (order-0) coordinates.
    fn flow(&self, x: &DVector<T>, v: &DVector<T>) -> DVector<T>;

    /// Observation map `g(x)` on base coordinates.
    fn observe(&self, x: &DVector<T>) -> DVector<T>;

    fn process_noise(&self) -> &NoiseSpec<T>;
    fn observation_noise(&self) -> &NoiseSpec<T>;

    /// `∂f/∂x`, `n × n`.
    fn flow_jacobian(&self, x: &DVector<T>, v: &DVector<T>) -> DMatrix<T> {
        fd_jacobian(x, self.state_dim(), |p| self.flow(p, v))
    }

    /// `∂f/∂v`, `n × m`.
    fn cause_jacobian(&self, x: &DVector<T>, v: &DVector<T>) -> DMatrix<T> {
        fd_jacobian(v, self.state_dim(), |p| self.flow(x, p))
    }

    /// `∂g/∂x`, `q × n`.
    fn observation_jacobian(&self, x: &DVector<T>) -> DMatrix<T> {
        fd_jacobian(x, self.obs_dim(), |p| self.observe(p))
    }
}

impl<T: Real, M: GenerativeModel<T> + ?Sized> GenerativeModel<T> for &M {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn cause_dim(&self) -> usize {
        (**self).cause_dim()
    }
    fn obs_dim(&self) -> usize {
        (**self).obs_dim()
    }
    fn flow(&self, x: &DVector<T>, v: &DVector<T>) -> DVector<T> {
        (**self).flow(x, v)
    }
    fn observe(&self, x: &DVector<T>) -> DVector<T> {
        (**self).observe(x)
    }
    fn process_noise(&self) -> &NoiseSpec<T> {
        (**self).process_noise()
    }
    fn observation_noise(&self) -> &NoiseSpec<T> {
        (**self).observation_noise()
    }
    fn flow_jacobian(&self, x: &DVector<T>, v: &DVector<T>) -> DMatrix<T> {
        (**self).flow_jacobian(x, v)
    }
    fn cause_jacobian(&self, x: &DVector<T>, v: &DVector<T>) -> DMatrix<T> {
        (**self).cause_jacobian(x, v)
    }
    fn observation_jacobian(&self, x: &DVector<T>) -> DMatrix<T> {
        (**self).observation_jacobian(x)
    }
}

/// Cause block of order `k`: `causes[k]` if supplied, zero otherwise.
fn cause_block<T: Real>(causes: &[DVector<T>], k: usize, m: usize) -> DVector<T> {
    causes.get(k).cloned().unwrap_or_else(|| DVector::zeros(m))
}

fn check_causes<T: Real>(causes: &[DVector<T>], m: usize) -> Result<()> {
    match causes.iter().find(|c| c.len() != m) {
        Some(c) => Err(dim_mismatch("causes", m, c.len())),
        None => Ok(()),
    }
}

/// Generalized flow prediction: `f(x₀, v₀)` at order 0 and the local
/// linearization `∂f/∂x·x_k + ∂f/∂v·v_k` at higher orders.
///
/// `causes[k]` holds the order-`k` cause block; missing orders are zero, so
/// passing a single block replicates the causes at order 0 only.
pub fn predict_flow<T: Real, M: GenerativeModel<T> + ?Sized>(
    model: &M,
    x: &GeneralizedVector<T>,
    causes: &[DVector<T>],
) -> Result<GeneralizedVector<T>> {
    let n = model.state_dim();
    let m = model.cause_dim();
    if x.base_dim() != n {
        return Err(dim_mismatch("predict_flow state", n, x.base_dim()));
    }
    check_causes(causes, m)?;
    let x0 = x.block(0).into_owned();
    let v0 = cause_block(causes, 0, m);
    let mut out = GeneralizedVector::zeros(x.order(), n);
    out.block_mut(0).copy_from(&model.flow(&x0, &v0));
    if x.order() > 0 {
        let jx = model.flow_jacobian(&x0, &v0);
        let jv = if m > 0 && causes.len() > 1 {
            Some(model.cause_jacobian(&x0, &v0))
        } else {
            None
        };
        for k in 1..=x.order() {
            let mut blk = &jx * x.block(k);
            if let (Some(jv), Some(vk)) = (&jv, causes.get(k)) {
                blk += jv * vk;
            }
            out.block_mut(k).copy_from(&blk);
        }
    }
    Ok(out)
}

/// Generalized observation prediction: `g(x₀)` at order 0 and
/// `∂g/∂x·x_k` at higher orders.
pub fn predict_observation<T: Real, M: GenerativeModel<T> + ?Sized>(
    model: &M,
    x: &GeneralizedVector<T>,
) -> Result<GeneralizedVector<T>> {
    let n = model.state_dim();
    if x.base_dim() != n {
        return Err(dim_mismatch("predict_observation state", n, x.base_dim()));
    }
    let x0 = x.block(0).into_owned();
    let mut out = GeneralizedVector::zeros(x.order(), model.obs_dim());
    out.block_mut(0).copy_from(&model.observe(&x0));
    if x.order() > 0 {
        let jg = model.observation_jacobian(&x0);
        for k in 1..=x.order() {
            out.block_mut(k).copy_from(&(&jg * x.block(k)));
        }
    }
    Ok(out)
}

/// Jacobians `(∂f/∂x, ∂g/∂x)` at `(x, v)`.
pub fn jacobians<T: Real, M: GenerativeModel<T> + ?Sized>(
    model: &M,
    x: &DVector<T>,
    v: &DVector<T>,
) -> (DMatrix<T>, DMatrix<T>) {
    (model.flow_jacobian(x, v), model.observation_jacobian(x))
}

/// Linear time-invariant model `ẋ = Ax + Bv`, `y = Cx`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<T: Real> {
    a: DMatrix<T>,
    b: DMatrix<T>,
    c: DMatrix<T>,
    process_noise: NoiseSpec<T>,
    obs_noise: NoiseSpec<T>,
}

impl<T: Real> LinearModel<T> {
    pub fn new(
        a: DMatrix<T>,
        b: DMatrix<T>,
        c: DMatrix<T>,
        process_noise: NoiseSpec<T>,
        obs_noise: NoiseSpec<T>,
    ) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || n == 0 {
            return Err(dim_mismatch(
                "LinearModel A",
                "non-empty square",
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        if b.nrows() != n {
            return Err(dim_mismatch("LinearModel B rows", n, b.nrows()));
        }
        if c.ncols() != n {
            return Err(dim_mismatch("LinearModel C columns", n, c.ncols()));
        }
        if process_noise.dim() != n {
            return Err(dim_mismatch(
                "LinearModel process noise",
                n,
                process_noise.dim(),
            ));
        }
        if obs_noise.dim() != c.nrows() {
            return Err(dim_mismatch(
                "LinearModel observation noise",
                c.nrows(),
                obs_noise.dim(),
            ));
        }
        Ok(Self {
            a,
            b,
            c,
            process_noise,
            obs_noise,
        })
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
}

impl<T: Real> GenerativeModel<T> for LinearModel<T> {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn cause_dim(&self) -> usize {
        self.b.ncols()
    }
    fn obs_dim(&self) -> usize {
        self.c.nrows()
    }
    fn flow(&self, x: &DVector<T>, v: &DVector<T>) -> DVector<T> {
        let mut out = &self.a * x;
        if self.b.ncols() > 0 {
            out += &self.b * v;
        }
        out
    }
    fn observe(&self, x: &DVector<T>) -> DVector<T> {
        &self.c * x
    }
    fn process_noise(&self) -> &NoiseSpec<T> {
        &self.process_noise
    }
    fn observation_noise(&self) -> &NoiseSpec<T> {
        &self.obs_noise
    }
    fn flow_jacobian(&self, _x: &DVector<T>, _v: &DVector<T>) -> DMatrix<T> {
        self.a.clone()
    }
    fn cause_jacobian(&self, _x: &DVector<T>, _v: &DVector<T>) -> DMatrix<T> {
        self.b.clone()
    }
    fn observation_jacobian(&self, _x: &DVector<T>) -> DMatrix<T> {
        self.c.clone()
    }
}

/// Generalized prediction `A·x_k + B·v_k` for every order `k`.
pub fn linear_dynamics<T: Real>(
    model: &LinearModel<T>,
    x: &GeneralizedVector<T>,
    causes: &[DVector<T>],
) -> Result<GeneralizedVector<T>> {
    predict_flow(model, x, causes)
}

/// Goal prior `f(μ) = (μ_d − μ)/τ`: beliefs are pulled toward `target`
/// with time constant `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttractorGoal<T: Real> {
    target: DVector<T>,
    tau: T,
}

impl<T: Real> AttractorGoal<T> {
    pub fn new(target: DVector<T>, tau: T) -> Result<Self> {
        if !(tau > T::zero()) || !tau.is_finite() {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: format!("time constant must be positive, got {tau}"),
            });
        }
        if target.is_empty() {
            return Err(dim_mismatch("AttractorGoal target", ">= 1", 0));
        }
        Ok(Self { target, tau })
    }

    pub fn target(&self) -> &DVector<T> {
        &self.target
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn dim(&self) -> usize {
        self.target.len()
    }
}

/// Order 0: `(target − x₀)/τ`; order `k > 0`: `−x_k/τ`, so the target with
/// zero motion is a fixed point of the generalized flow.
pub fn attractor_dynamics<T: Real>(
    goal: &AttractorGoal<T>,
    x: &GeneralizedVector<T>,
) -> Result<GeneralizedVector<T>> {
    if x.base_dim() != goal.dim() {
        return Err(dim_mismatch("attractor_dynamics", goal.dim(), x.base_dim()));
    }
    let inv_tau = goal.tau.recip();
    let mut out = x * (-inv_tau);
    out.block_mut(0).axpy(inv_tau, &goal.target, T::one());
    Ok(out)
}

/// Goal-directed model for control: attractor flow toward a target and a
/// linear observation map `y = Cx`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttractorModel<T: Real> {
    goal: AttractorGoal<T>,
    c: DMatrix<T>,
    process_noise: NoiseSpec<T>,
    obs_noise: NoiseSpec<T>,
}

impl<T: Real> AttractorModel<T> {
    pub fn new(
        goal: AttractorGoal<T>,
        c: DMatrix<T>,
        process_noise: NoiseSpec<T>,
        obs_noise: NoiseSpec<T>,
    ) -> Result<Self> {
        let n = goal.dim();
        if c.ncols() != n {
            return Err(dim_mismatch("AttractorModel C columns", n, c.ncols()));
        }
        if process_noise.dim() != n {
            return Err(dim_mismatch(
                "AttractorModel process noise",
                n,
                process_noise.dim(),
            ));
        }
        if obs_noise.dim() != c.nrows() {
            return Err(dim_mismatch(
                "AttractorModel observation noise",
                c.nrows(),
                obs_noise.dim(),
            ));
        }
        Ok(Self {
            goal,
            c,
            process_noise,
            obs_noise,
        })
    }

    pub fn goal(&self) -> &AttractorGoal<T> {
        &self.goal
    }

    pub fn c(&self) -> &DMatrix<T> {
        &self.c
    }
}

impl<T: Real> GenerativeModel<T> for AttractorModel<T> {
    fn state_dim(&self) -> usize {
        self.goal.dim()
    }
    fn cause_dim(&self) -> usize {
        0
    }
    fn obs_dim(&self) -> usize {
        self.c.nrows()
    }
    fn flow(&self, x: &DVector<T>, _v: &DVector<T>) -> DVector<T> {
        (&self.goal.target - x) / self.goal.tau
    }
    fn observe(&self, x: &DVector<T>) -> DVector<T> {
        &self.c * x
    }
    fn process_noise(&self) -> &NoiseSpec<T> {
        &self.process_noise
    }
    fn observation_noise(&self) -> &NoiseSpec<T> {
        &self.obs_noise
    }
    fn flow_jacobian(&self, _x: &DVector<T>, _v: &DVector<T>) -> DMatrix<T> {
        DMatrix::identity(self.goal.dim(), self.goal.dim()) * (-self.goal.tau.recip())
    }
    fn cause_jacobian(&self, _x: &DVector<T>, _v: &DVector<T>) -> DMatrix<T> {
        DMatrix::zeros(self.goal.dim(), 0)
    }
    fn observation_jacobian(&self, _x: &DVector<T>) -> DMatrix<T> {
        self.c.clone()
    }
}

type BaseFn<T> = Box<dyn Fn(&DVector<T>, &DVector<T>) -> DVector<T> + Send + Sync>;
type ObsFn<T> = Box<dyn Fn(&DVector<T>) -> DVector<T> + Send + Sync>;

/// Model defined by closures; Jacobians come from finite differences.
pub struct FnModel<T: Real> {
    state_dim: usize,
    cause_dim: usize,
    obs_dim: usize,
    flow: BaseFn<T>,
    observe: ObsFn<T>,
    process_noise: NoiseSpec<T>,
    obs_noise: NoiseSpec<T>,
}

impl<T: Real> FnModel<T> {
    pub fn new(
        dims: (usize, usize, usize),
        flow: impl Fn(&DVector<T>, &DVector<T>) -> DVector<T> + Send + Sync + 'static,
        observe: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
        process_noise: NoiseSpec<T>,
        obs_noise: NoiseSpec<T>,
    ) -> Result<Self> {
        let (n, m, q) = dims;
        if process_noise.dim() != n {
            return Err(dim_mismatch(
                "FnModel process noise",
                n,
                process_noise.dim(),
            ));
        }
        if obs_noise.dim() != q {
            return Err(dim_mismatch(
                "FnModel observation noise",
                q,
                obs_noise.dim(),
            ));
        }
        Ok(Self {
            state_dim: n,
            cause_dim: m,
            obs_dim: q,
            flow: Box::new(flow),
            observe: Box::new(observe),
            process_noise,
            obs_noise,
        })
    }
}

impl<T: Real> fmt::Debug for FnModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnModel")
            .field("state_dim", &self.state_dim)
            .field("cause_dim", &self.cause_dim)
            .field("obs_dim", &self.obs_dim)
            .finish_non_exhaustive()
    }
}

impl<T: Real> GenerativeModel<T> for FnModel<T> {
    fn state_dim(&self) -> usize {
        self.state_dim
    }
    fn cause_dim(&self) -> usize {
        self.cause_dim
    }
    fn obs_dim(&self) -> usize {
        self.obs_dim
    }
    fn flow(&self, x: &DVector<T>, v: &DVector<T>) -> DVector<T> {
        (self.flow)(x, v)
    }
    fn observe(&self, x: &DVector<T>) -> DVector<T> {
        (self.observe)(x)
    }
    fn process_noise(&self) -> &NoiseSpec<T> {
        &self.process_noise
    }
    fn observation_noise(&self) -> &NoiseSpec<T> {
        &self.obs_noise
    }
}

/// Prior preference over observations, `ln p̃(y)` up to a constant.
pub enum PreferenceModel<T: Real, Y: ?Sized> {
    LogDensity(Box<dyn Fn(&Y) -> T + Send + Sync>),
    /// Boltzmann preference `ln p̃(y) = β·r(y)`.
    Reward {
        reward: Box<dyn Fn(&Y) -> T + Send + Sync>,
        beta: T,
    },
}

impl<T: Real, Y: ?Sized> PreferenceModel<T, Y> {
    pub fn log_density(&self, y: &Y) -> T {
        match self {
            Self::LogDensity(f) => f(y),
            Self::Reward { reward, beta } => *beta * reward(y),
        }
    }
}

impl<T: Real> PreferenceModel<T, usize> {
    /// Tabulates the preference over discrete observation indices.
    pub fn tabulate(&self, num_obs: usize) -> DVector<T> {
        DVector::from_iterator(num_obs, (0..num_obs).map(|y| self.log_density(&y)))
    }
}

impl<T: Real, Y: ?Sized> fmt::Debug for PreferenceModel<T, Y> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LogDensity(_) => f.write_str("PreferenceModel::LogDensity"),
            Self::Reward { beta, .. } => write!(f, "PreferenceModel::Reward {{ beta: {beta} }}"),
        }
    }
}

/// Boltzmann preference around a reward: `ln p̃(y) = β·r(y)`, unnormalized.
pub fn boltzmann_preference<T: Real, Y: ?Sized>(
    reward: impl Fn(&Y) -> T + Send + Sync + 'static,
    beta: T,
) -> Result<PreferenceModel<T, Y>> {
    if !(beta > T::zero()) || !beta.is_finite() {
        return Err(Error::InvalidParameter {
            name: "beta",
            reason: format!("inverse temperature must be positive, got {beta}"),
        });
    }
    Ok(PreferenceModel::Reward {
        reward: Box::new(reward),
        beta,
    })
}
