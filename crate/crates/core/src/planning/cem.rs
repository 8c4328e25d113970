//! Cross-entropy method over continuous action sequences.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{dim_mismatch, Error, Result};
use crate::scalar::Real;

/// Diagonal Gaussian over a `T × m` action sequence (one row per step).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPlan<T: Real> {
    mean: DMatrix<T>,
    stddev: DMatrix<T>,
}

impl<T: Real> GaussianPlan<T> {
    /// A zero standard deviation is accepted and yields a point mass.
    pub fn new(mean: DMatrix<T>, stddev: DMatrix<T>) -> Result<Self> {
        if mean.shape() != stddev.shape() {
            return Err(dim_mismatch(
                "GaussianPlan stddev",
                format!("{}x{}", mean.nrows(), mean.ncols()),
                format!("{}x{}", stddev.nrows(), stddev.ncols()),
            ));
        }
        if mean.is_empty() {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: "plans need at least one step and one action dimension".into(),
            });
        }
        if !stddev.iter().all(|s| *s >= T::zero() && s.is_finite())
            || !mean.iter().all(|m| m.is_finite())
        {
            return Err(Error::InvalidParameter {
                name: "stddev",
                reason: "must be finite and non-negative".into(),
            });
        }
        Ok(Self { mean, stddev })
    }

    pub fn mean(&self) -> &DMatrix<T> {
        &self.mean
    }

    pub fn stddev(&self) -> &DMatrix<T> {
        &self.stddev
    }

    pub fn horizon(&self) -> usize {
        self.mean.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.mean.ncols()
    }

    /// Drops the first step and repeats the last one, for warm-starting the
    /// next receding-horizon solve.
    pub fn shifted(&self, std_reset: T) -> Self {
        let h = self.horizon();
        let mut mean = self.mean.clone();
        for r in 0..h.saturating_sub(1) {
            let next = self.mean.row(r + 1).into_owned();
            mean.row_mut(r).copy_from(&next);
        }
        Self {
            mean,
            stddev: DMatrix::from_element(h, self.action_dim(), std_reset),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CemConfig<T: Real> {
    pub population: usize,
    pub elite_frac: T,
    pub iters: usize,
    pub init_mean: DMatrix<T>,
    pub init_std: DMatrix<T>,
    pub seed: u64,
    /// Samples are clipped to this box before scoring.
    pub bounds: Option<(T, T)>,
}

impl<T: Real> CemConfig<T> {
    /// Zero-mean, unit-std initialisation for a `horizon × dims` plan.
    pub fn new(
        horizon: usize,
        dims: usize,
        population: usize,
        elite_frac: T,
        iters: usize,
        seed: u64,
    ) -> Self {
        Self {
            population,
            elite_frac,
            iters,
            init_mean: DMatrix::zeros(horizon, dims),
            init_std: DMatrix::from_element(horizon, dims, T::one()),
            seed,
            bounds: None,
        }
    }

    pub fn with_init(mut self, plan: &GaussianPlan<T>) -> Self {
        self.init_mean = plan.mean.clone();
        self.init_std = plan.stddev.clone();
        self
    }

    pub fn with_bounds(mut self, lo: T, hi: T) -> Self {
        self.bounds = Some((lo, hi));
        self
    }

    pub fn num_elites(&self) -> usize {
        let k = (self.elite_frac * T::from_count(self.population)).ceil();
        k.to_usize().unwrap_or(1).clamp(1, self.population)
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::InvalidParameter {
                name: "population",
                reason: "must be at least 2".into(),
            });
        }
        if !(self.elite_frac > T::zero() && self.elite_frac <= T::one()) {
            return Err(Error::InvalidParameter {
                name: "elite_frac",
                reason: "must lie in (0, 1]".into(),
            });
        }
        if let Some((lo, hi)) = self.bounds {
            if !(lo <= hi) {
                return Err(Error::InvalidParameter {
                    name: "bounds",
                    reason: "lower bound exceeds upper bound".into(),
                });
            }
        }
        GaussianPlan::new(self.init_mean.clone(), self.init_std.clone()).map(|_| ())
    }
}

/// Draw `j` of iteration `it`. Each draw has its own ChaCha stream, so the
/// result does not depend on the order in which samples are scored.
fn sample_plan<T: Real>(dist: &GaussianPlan<T>, cfg: &CemConfig<T>, stream: u64) -> DMatrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let mut out = dist.mean.clone();
    for (x, s) in out.iter_mut().zip(dist.stddev.iter()) {
        let z: f64 = StandardNormal.sample(&mut rng);
        *x += *s * T::lit(z);
        if let Some((lo, hi)) = cfg.bounds {
            *x = x.clamp(lo, hi);
        }
    }
    out
}

/// Minimises `score` over action sequences. Lower scores are better; each
/// iteration refits the mean and (population) standard deviation to the
/// elite set. Ties keep sampling order.
pub fn cem_optimize<T: Real>(
    score: impl Fn(&DMatrix<T>) -> T,
    cfg: &CemConfig<T>,
) -> Result<GaussianPlan<T>> {
    cfg.validate()?;
    let mut dist = GaussianPlan::new(cfg.init_mean.clone(), cfg.init_std.clone())?;
    let k = cfg.num_elites();
    let kt = T::from_count(k);
    for it in 0..cfg.iters {
        let mut scored = Vec::with_capacity(cfg.population);
        for j in 0..cfg.population {
            let stream = (it * cfg.population + j) as u64;
            let plan = sample_plan(&dist, cfg, stream);
            let s = score(&plan);
            if !s.is_finite() {
                return Err(Error::NonFiniteScore {
                    sample: it * cfg.population + j,
                });
            }
            scored.push((s, plan));
        }
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
        let elites = &scored[..k];
        let mean = elites.iter().fold(
            DMatrix::zeros(dist.horizon(), dist.action_dim()),
            |acc, e| acc + &e.1,
        ) / kt;
        let var = elites.iter().fold(
            DMatrix::zeros(dist.horizon(), dist.action_dim()),
            |acc, e| {
                let d = &e.1 - &mean;
                acc + d.component_mul(&d)
            },
        ) / kt;
        dist = GaussianPlan {
            mean,
            stddev: var.map(|v| v.sqrt()),
        };
    }
    Ok(dist)
}
