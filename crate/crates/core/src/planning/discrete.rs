//! Expected free energy over discrete plans in a POMDP.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_mismatch, Error, Result};
use crate::scalar::Real;

/// Plans are enumerated only while `U^T` stays within this budget.
pub const ENUMERATION_BUDGET: usize = 1024;

/// Probabilities are clipped here before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-300;

fn stochastic_tolerance<T: Real>() -> T {
    let eps = T::default_epsilon() * T::lit(1e3);
    if eps > T::lit(1e-9) {
        eps
    } else {
        T::lit(1e-9)
    }
}

fn is_distribution<T: Real>(v: impl Iterator<Item = T>) -> bool {
    let mut sum = T::zero();
    for x in v {
        if !(x >= T::zero()) || !x.is_finite() {
            return false;
        }
        sum += x;
    }
    (sum - T::one()).abs() <= stochastic_tolerance::<T>()
}

/// Discrete generative model: `p(y|x)` (`O × S`), one `S × S` transition
/// matrix `p(x'|x, a)` per action, log-preferences over observations and a
/// prior over states. All matrices are column-stochastic.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePomdp<T: Real> {
    likelihood: DMatrix<T>,
    transitions: Vec<DMatrix<T>>,
    preferences: DVector<T>,
    prior: DVector<T>,
}

impl<T: Real> DiscretePomdp<T> {
    pub fn new(
        likelihood: DMatrix<T>,
        transitions: Vec<DMatrix<T>>,
        preferences: DVector<T>,
        prior: DVector<T>,
    ) -> Result<Self> {
        let (o, s) = likelihood.shape();
        if o == 0 || s == 0 {
            return Err(dim_mismatch("likelihood", "non-empty", format!("{o}x{s}")));
        }
        if transitions.is_empty() {
            return Err(Error::InvalidParameter {
                name: "transitions",
                reason: "at least one action required".into(),
            });
        }
        for (a, t) in transitions.iter().enumerate() {
            if t.shape() != (s, s) {
                return Err(dim_mismatch(
                    "transition matrix",
                    format!("{s}x{s}"),
                    format!("action {a}: {}x{}", t.nrows(), t.ncols()),
                ));
            }
            if !t.column_iter().all(|c| is_distribution(c.iter().copied())) {
                return Err(Error::InvalidParameter {
                    name: "transitions",
                    reason: format!("action {a} matrix is not column-stochastic"),
                });
            }
        }
        if !likelihood
            .column_iter()
            .all(|c| is_distribution(c.iter().copied()))
        {
            return Err(Error::InvalidParameter {
                name: "likelihood",
                reason: "not column-stochastic".into(),
            });
        }
        if preferences.len() != o {
            return Err(dim_mismatch("preferences", o, preferences.len()));
        }
        if !preferences.iter().all(|p| p.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "preferences",
                reason: "log-preferences must be finite".into(),
            });
        }
        if prior.len() != s {
            return Err(dim_mismatch("prior", s, prior.len()));
        }
        if !is_distribution(prior.iter().copied()) {
            return Err(Error::InvalidParameter {
                name: "prior",
                reason: "not on the probability simplex".into(),
            });
        }
        Ok(Self {
            likelihood,
            transitions,
            preferences,
            prior,
        })
    }

    pub fn num_states(&self) -> usize {
        self.likelihood.ncols()
    }
    pub fn num_obs(&self) -> usize {
        self.likelihood.nrows()
    }
    pub fn num_actions(&self) -> usize {
        self.transitions.len()
    }
    pub fn likelihood(&self) -> &DMatrix<T> {
        &self.likelihood
    }
    pub fn transitions(&self) -> &[DMatrix<T>] {
        &self.transitions
    }
    pub fn transition(&self, action: usize) -> &DMatrix<T> {
        &self.transitions[action]
    }
    pub fn preferences(&self) -> &DVector<T> {
        &self.preferences
    }
    pub fn prior(&self) -> &DVector<T> {
        &self.prior
    }

    pub fn with_preferences(mut self, preferences: DVector<T>) -> Result<Self> {
        if preferences.len() != self.num_obs() {
            return Err(dim_mismatch(
                "preferences",
                self.num_obs(),
                preferences.len(),
            ));
        }
        self.preferences = preferences;
        Ok(self)
    }
}

/// A fixed sequence of action indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Plan {
    actions: Vec<usize>,
}

impl Plan {
    pub fn new(actions: Vec<usize>, num_actions: usize) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::InvalidParameter {
                name: "plan",
                reason: "plans need at least one action".into(),
            });
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= num_actions) {
            return Err(Error::InvalidParameter {
                name: "plan",
                reason: format!("action {a} out of range (U = {num_actions})"),
            });
        }
        Ok(Self { actions })
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn first(&self) -> usize {
        self.actions[0]
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }
}

/// Every plan of length `horizon` in lexicographic order (first action
/// varies slowest).
pub fn enumerate_plans(num_actions: usize, horizon: usize) -> Result<Vec<Plan>> {
    let count = (num_actions as u128)
        .checked_pow(horizon as u32)
        .unwrap_or(u128::MAX);
    if horizon == 0 || num_actions == 0 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: "horizon and action count must be positive".into(),
        });
    }
    if count > ENUMERATION_BUDGET as u128 {
        return Err(Error::EnumerationBudget {
            count,
            budget: ENUMERATION_BUDGET,
        });
    }
    let mut plans = Vec::with_capacity(count as usize);
    let mut digits = vec![0usize; horizon];
    loop {
        plans.push(Plan {
            actions: digits.clone(),
        });
        let mut i = horizon;
        loop {
            if i == 0 {
                return Ok(plans);
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < num_actions {
                break;
            }
            digits[i] = 0;
        }
    }
}

/// Exact posterior `q(x|y) ∝ p(y|x) q(x)`.
pub fn bayes_update<T: Real>(
    pomdp: &DiscretePomdp<T>,
    belief: &DVector<T>,
    obs: usize,
) -> Result<DVector<T>> {
    if obs >= pomdp.num_obs() {
        return Err(Error::InvalidParameter {
            name: "obs",
            reason: format!("observation {obs} out of range (O = {})", pomdp.num_obs()),
        });
    }
    if belief.len() != pomdp.num_states() {
        return Err(dim_mismatch("belief", pomdp.num_states(), belief.len()));
    }
    let joint = pomdp.likelihood.row(obs).transpose().component_mul(belief);
    let total = joint.sum();
    if !(total > T::zero()) {
        return Err(Error::ImpossibleObservation { obs });
    }
    Ok(joint / total)
}

/// Predicted state and observation beliefs after each action of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutStep<T: Real> {
    pub state: DVector<T>,
    pub obs: DVector<T>,
}

/// `q(x_{t+1}) = B[a_t] q(x_t)`, `q(y_t) = A q(x_t)`, one entry per action.
pub fn predict_rollout<T: Real>(
    pomdp: &DiscretePomdp<T>,
    belief: &DVector<T>,
    plan: &Plan,
) -> Result<Vec<RolloutStep<T>>> {
    if belief.len() != pomdp.num_states() {
        return Err(dim_mismatch("belief", pomdp.num_states(), belief.len()));
    }
    if let Some(&a) = plan.actions.iter().find(|&&a| a >= pomdp.num_actions()) {
        return Err(Error::InvalidParameter {
            name: "plan",
            reason: format!("action {a} out of range"),
        });
    }
    let mut state = belief.clone();
    Ok(plan
        .actions
        .iter()
        .map(|&a| {
            state = &pomdp.transitions[a] * &state;
            RolloutStep {
                state: state.clone(),
                obs: &pomdp.likelihood * &state,
            }
        })
        .collect())
}

fn safe_ln<T: Real>(p: T) -> T {
    p.max(T::lit(LOG_FLOOR)).ln()
}

/// `KL[p ‖ q]` with `0 ln 0 = 0`.
pub fn kl_divergence<T: Real>(p: &DVector<T>, q: &DVector<T>) -> T {
    p.iter()
        .zip(q.iter())
        .filter(|(&pi, _)| pi > T::zero())
        .map(|(&pi, &qi)| pi * (safe_ln(pi) - safe_ln(qi)))
        .fold(T::zero(), |a, b| a + b)
}

/// One time step's `(extrinsic, intrinsic)` value:
/// extrinsic `= −E_{q(y)}[ln p̃(y)]`, intrinsic `= E_{q(y)} KL[q(x|y) ‖ q(x)]`.
pub fn efe_timestep<T: Real>(
    pomdp: &DiscretePomdp<T>,
    state_belief: &DVector<T>,
    obs_belief: &DVector<T>,
) -> Result<(T, T)> {
    if obs_belief.len() != pomdp.num_obs() {
        return Err(dim_mismatch(
            "observation belief",
            pomdp.num_obs(),
            obs_belief.len(),
        ));
    }
    let extrinsic = -obs_belief.dot(&pomdp.preferences);
    let mut intrinsic = T::zero();
    for (y, &qy) in obs_belief.iter().enumerate() {
        if qy > T::zero() {
            let posterior = bayes_update(pomdp, state_belief, y)?;
            intrinsic += qy * kl_divergence(&posterior, state_belief);
        }
    }
    Ok((extrinsic, intrinsic))
}

/// Expected free energy of one plan, with its per-step decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct EfeBreakdown<T: Real> {
    pub total: T,
    pub extrinsic: T,
    pub intrinsic: T,
    pub per_step: Vec<(T, T)>,
}

impl<T: Real> EfeBreakdown<T> {
    /// `w_e·extrinsic − w_i·intrinsic`, used for ablations.
    pub fn weighted_total(&self, weights: EfeWeights<T>) -> T {
        weights.extrinsic * self.extrinsic - weights.intrinsic * self.intrinsic
    }
}

/// Weights applied to the two EFE components (both 1 for the full agent).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfeWeights<T: Real> {
    pub extrinsic: T,
    pub intrinsic: T,
}

impl<T: Real> EfeWeights<T> {
    pub fn full() -> Self {
        Self {
            extrinsic: T::one(),
            intrinsic: T::one(),
        }
    }

    pub fn extrinsic_only() -> Self {
        Self {
            extrinsic: T::one(),
            intrinsic: T::zero(),
        }
    }
}

impl<T: Real> Default for EfeWeights<T> {
    fn default() -> Self {
        Self::full()
    }
}

/// `G(π) = Σ_t (extrinsic_t − intrinsic_t)` along the predicted rollout.
pub fn efe_plan<T: Real>(
    pomdp: &DiscretePomdp<T>,
    belief: &DVector<T>,
    plan: &Plan,
) -> Result<EfeBreakdown<T>> {
    let rollout = predict_rollout(pomdp, belief, plan)?;
    let per_step = rollout
        .iter()
        .map(|s| efe_timestep(pomdp, &s.state, &s.obs))
        .collect::<Result<Vec<_>>>()?;
    let extrinsic = per_step.iter().fold(T::zero(), |a, s| a + s.0);
    let intrinsic = per_step.iter().fold(T::zero(), |a, s| a + s.1);
    Ok(EfeBreakdown {
        total: extrinsic - intrinsic,
        extrinsic,
        intrinsic,
        per_step,
    })
}

/// Posterior over plans `q(π) = σ(ln p(π) − G(π))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanPosterior<T: Real> {
    pub plans: Vec<Plan>,
    pub log_prior: Vec<T>,
    pub probabilities: DVector<T>,
}

impl<T: Real> PlanPosterior<T> {
    /// Index of the most probable plan; ties go to the lowest index.
    pub fn most_likely(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probabilities.iter().enumerate() {
            if p > self.probabilities[best] {
                best = i;
            }
        }
        best
    }
}

/// Numerically stable softmax of `log_prior − efes`. An empty `log_prior`
/// means a uniform prior.
pub fn plan_posterior<T: Real>(
    plans: Vec<Plan>,
    efes: &[T],
    log_prior: &[T],
) -> Result<PlanPosterior<T>> {
    if efes.len() != plans.len() {
        return Err(dim_mismatch("plan EFE values", plans.len(), efes.len()));
    }
    if plans.is_empty() {
        return Err(Error::InvalidParameter {
            name: "plans",
            reason: "at least one plan required".into(),
        });
    }
    let log_prior: Vec<T> = if log_prior.is_empty() {
        vec![T::zero(); plans.len()]
    } else if log_prior.len() == plans.len() {
        log_prior.to_vec()
    } else {
        return Err(dim_mismatch("plan log prior", plans.len(), log_prior.len()));
    };
    let logits: Vec<T> = log_prior.iter().zip(efes).map(|(&lp, &g)| lp - g).collect();
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "efes",
            reason: "plan scores must be finite".into(),
        });
    }
    let max = logits.iter().fold(logits[0], |m, &l| m.max(l));
    let weights = DVector::from_iterator(logits.len(), logits.iter().map(|&l| (l - max).exp()));
    let total = weights.sum();
    Ok(PlanPosterior {
        plans,
        log_prior,
        probabilities: weights / total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    MostLikely,
    Sample { seed: u64 },
}

/// First action of the selected plan.
pub fn select_action<T: Real>(posterior: &PlanPosterior<T>, mode: SelectionMode) -> usize {
    let idx = match mode {
        SelectionMode::MostLikely => posterior.most_likely(),
        SelectionMode::Sample { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = posterior.probabilities.len() - 1;
            for (i, p) in posterior.probabilities.iter().enumerate() {
                acc += p.as_f64();
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        }
    };
    posterior.plans[idx].first()
}

/// Scores every plan of length `horizon` and returns the plan posterior
/// together with the per-plan breakdowns.
pub fn evaluate_plans<T: Real>(
    pomdp: &DiscretePomdp<T>,
    belief: &DVector<T>,
    horizon: usize,
    weights: EfeWeights<T>,
) -> Result<(PlanPosterior<T>, Vec<EfeBreakdown<T>>)> {
    let plans = enumerate_plans(pomdp.num_actions(), horizon)?;
    let breakdowns = plans
        .iter()
        .map(|p| efe_plan(pomdp, belief, p))
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<T> = breakdowns
        .iter()
        .map(|b| b.weighted_total(weights))
        .collect();
    Ok((plan_posterior(plans, &scores, &[])?, breakdowns))
}
