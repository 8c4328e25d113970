//! Reference implementations used to check the main algorithms.
//!
//! Nothing here calls into `inference` or `planning` arithmetic: the Kalman
//! filter, the finite-difference derivatives and the brute-force plan
//! evaluation are written from their textbook definitions.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_mismatch, Error, Result};
use crate::planning::{DiscretePomdp, Plan, PlanPosterior};
use crate::scalar::Real;

/// Gaussian state estimate of a discrete-time Kalman filter.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState<T: Real> {
    pub mean: DVector<T>,
    pub covariance: DMatrix<T>,
}

impl<T: Real> KalmanState<T> {
    pub fn new(mean: DVector<T>, covariance: DMatrix<T>) -> Self {
        Self { mean, covariance }
    }
}

/// One predict/update cycle of `x' = Ax + Bu + w`, `y = Cx + v` with
/// `w ~ N(0, Q)` and `v ~ N(0, R)`.
#[allow(clippy::too_many_arguments)]
pub fn kalman_step<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    state: &KalmanState<T>,
    u: &DVector<T>,
    y: &DVector<T>,
) -> Result<KalmanState<T>> {
    let n = a.nrows();
    if state.mean.len() != n || c.ncols() != n || y.len() != c.nrows() || b.ncols() != u.len() {
        return Err(dim_mismatch(
            "kalman_step",
            format!("state {n}, obs {}", c.nrows()),
            format!("state {}, obs {}", state.mean.len(), y.len()),
        ));
    }
    let mean_prior = a * &state.mean + b * u;
    let cov_prior = a * &state.covariance * a.transpose() + q;
    let innovation = y - c * &mean_prior;
    let s = c * &cov_prior * c.transpose() + r;
    let s_inv = s
        .try_inverse()
        .ok_or(Error::Singular("innovation covariance"))?;
    let gain = &cov_prior * c.transpose() * s_inv;
    let mean = &mean_prior + &gain * innovation;
    let i_kc = DMatrix::identity(n, n) - &gain * c;
    // Joseph form keeps the covariance symmetric positive semidefinite.
    let covariance = &i_kc * cov_prior * i_kc.transpose() + &gain * r * gain.transpose();
    Ok(KalmanState { mean, covariance })
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<T: Real>(f: impl Fn(&DVector<T>) -> T, x: &DVector<T>, h: T) -> DVector<T> {
    let mut probe = x.clone();
    DVector::from_fn(x.len(), |i, _| {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        (up - down) / (h + h)
    })
}

/// Central-difference Jacobian of a vector function.
pub fn fd_jacobian<T: Real>(
    f: impl Fn(&DVector<T>) -> DVector<T>,
    x: &DVector<T>,
    h: T,
) -> DMatrix<T> {
    let f0 = f(x);
    let mut jac = DMatrix::zeros(f0.len(), x.len());
    let mut probe = x.clone();
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let up = f(&probe);
        probe[j] = x[j] - h;
        let down = f(&probe);
        probe[j] = x[j];
        jac.set_column(j, &((up - down) / (h + h)));
    }
    jac
}

/// Hessian by nested central differences of a scalar function.
pub fn fd_hessian<T: Real>(f: impl Fn(&DVector<T>) -> T, x: &DVector<T>, h: T) -> DMatrix<T> {
    let n = x.len();
    let four_h2 = T::lit(4.0) * h * h;
    let mut hess = DMatrix::zeros(n, n);
    let mut probe = x.clone();
    for i in 0..n {
        for j in 0..n {
            let mut eval = |si: T, sj: T| {
                probe[i] += si;
                probe[j] += sj;
                let v = f(&probe);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            hess[(i, j)] = (eval(h, h) - eval(h, -h) - eval(-h, h) + eval(-h, -h)) / four_h2;
        }
    }
    hess
}

/// Budget for the brute-force planner, in plans.
pub const BRUTE_FORCE_BUDGET: usize = 4096;

/// `G(π)` from its definition
/// `Σ_t E_{q(x_t, y_t)}[ln q(x_t) − ln q(x_t | y_t) − ln p̃(y_t)]`, with the
/// expectation taken by enumerating every joint state/observation path.
pub fn efe_by_definition<T: Real>(
    pomdp: &DiscretePomdp<T>,
    belief: &DVector<T>,
    actions: &[usize],
) -> T {
    let s = pomdp.num_states();
    let o = pomdp.num_obs();
    let horizon = actions.len();
    let lik = pomdp.likelihood();

    // All state paths x_1..x_T with their probabilities.
    let mut paths: Vec<(Vec<usize>, T)> = vec![(Vec::new(), T::one())];
    for (t, &a) in actions.iter().enumerate() {
        let tr = pomdp.transition(a);
        let mut next = Vec::with_capacity(paths.len() * s);
        for (path, p) in &paths {
            for x_new in 0..s {
                let step = if t == 0 {
                    (0..s).fold(T::zero(), |acc, x0| acc + tr[(x_new, x0)] * belief[x0])
                } else {
                    tr[(x_new, *path.last().expect("non-empty"))]
                };
                let q = *p * step;
                if q > T::zero() {
                    let mut np = path.clone();
                    np.push(x_new);
                    next.push((np, q));
                }
            }
        }
        paths = next;
    }

    // Marginals q(x_t) from the path distribution.
    let mut marginals = vec![vec![T::zero(); s]; horizon];
    for (path, p) in &paths {
        for (t, &x) in path.iter().enumerate() {
            marginals[t][x] += *p;
        }
    }
    let evidence =
        |t: usize, y: usize| (0..s).fold(T::zero(), |acc, x| acc + lik[(y, x)] * marginals[t][x]);

    let mut total = T::zero();
    for (path, p_path) in &paths {
        // Enumerate observation sequences y_1..y_T for this state path.
        let mut obs_seqs: Vec<(Vec<usize>, T)> = vec![(Vec::new(), T::one())];
        for &x in path {
            let mut next = Vec::new();
            for (seq, p) in &obs_seqs {
                for y in 0..o {
                    let q = *p * lik[(y, x)];
                    if q > T::zero() {
                        let mut ns = seq.clone();
                        ns.push(y);
                        next.push((ns, q));
                    }
                }
            }
            obs_seqs = next;
        }
        for (seq, p_obs) in &obs_seqs {
            let weight = *p_path * *p_obs;
            let mut g = T::zero();
            for t in 0..horizon {
                let (x, y) = (path[t], seq[t]);
                let qx = marginals[t][x];
                let post = lik[(y, x)] * qx / evidence(t, y);
                g += qx.ln() - post.ln() - pomdp.preferences()[y];
            }
            total += weight * g;
        }
    }
    total
}

/// Enumerates every plan of length `horizon` (first action slowest), scores
/// each with [`efe_by_definition`] and applies `softmax(ln p(π) − G)`.
pub fn brute_force_plan_posterior<T: Real>(
    pomdp: &DiscretePomdp<T>,
    belief: &DVector<T>,
    horizon: usize,
    log_prior: &[T],
) -> Result<PlanPosterior<T>> {
    let u = pomdp.num_actions();
    let count = (u as u128).checked_pow(horizon as u32).unwrap_or(u128::MAX);
    if count > BRUTE_FORCE_BUDGET as u128 {
        return Err(Error::EnumerationBudget {
            count,
            budget: BRUTE_FORCE_BUDGET,
        });
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: "must be positive".into(),
        });
    }
    let count = count as usize;
    if !log_prior.is_empty() && log_prior.len() != count {
        return Err(dim_mismatch("plan log prior", count, log_prior.len()));
    }
    let mut plans = Vec::with_capacity(count);
    for idx in 0..count {
        let mut actions = vec![0; horizon];
        let mut rest = idx;
        for slot in actions.iter_mut().rev() {
            *slot = rest % u;
            rest /= u;
        }
        plans.push(Plan::new(actions, u)?);
    }
    let log_prior: Vec<T> = if log_prior.is_empty() {
        vec![T::zero(); count]
    } else {
        log_prior.to_vec()
    };
    let logits: Vec<T> = plans
        .iter()
        .zip(&log_prior)
        .map(|(p, &lp)| lp - efe_by_definition(pomdp, belief, p.actions()))
        .collect();
    let max = logits
        .iter()
        .copied()
        .fold(T::lit(f64::NEG_INFINITY), T::max);
    let unnorm: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z = unnorm.iter().fold(T::zero(), |a, &b| a + b);
    Ok(PlanPosterior {
        plans,
        log_prior,
        probabilities: DVector::from_iterator(count, unnorm.into_iter().map(|w| w / z)),
    })
}
