//! Gaussian-kernel colored noise.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct ColoredNoiseConfig<T: Real> {
    /// Kernel width in time units; zero gives white noise.
    pub sigma: T,
    pub covariance: DMatrix<T>,
    pub seed: u64,
}

impl<T: Real> ColoredNoiseConfig<T> {
    pub fn new(sigma: T, covariance: DMatrix<T>, seed: u64) -> Self {
        Self {
            sigma,
            covariance,
            seed,
        }
    }

    pub fn white(covariance: DMatrix<T>, seed: u64) -> Self {
        Self::new(T::zero(), covariance, seed)
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }
}

/// Discrete Gaussian kernel `exp(−t²/(2σ²))` sampled at `dt`, truncated at
/// `4σ` and scaled to unit ℓ² norm. Filtering white noise with it gives the
/// autocorrelation `exp(−h²/(4σ²))`.
pub fn gaussian_kernel<T: Real>(sigma: T, dt: T) -> Vec<T> {
    if sigma <= T::zero() {
        return vec![T::one()];
    }
    let half = (T::lit(4.0) * sigma / dt).floor().to_usize().unwrap_or(0);
    let two_s2 = T::lit(2.0) * sigma * sigma;
    let taps: Vec<T> = (0..=2 * half)
        .map(|k| {
            let t = (T::from_count(k) - T::from_count(half)) * dt;
            (-(t * t) / two_s2).exp()
        })
        .collect();
    let norm = taps.iter().fold(T::zero(), |a, &h| a + h * h).sqrt();
    taps.into_iter().map(|h| h / norm).collect()
}

/// Streaming colored-noise source. The white-noise buffer is filled before
/// the first draw, so output is stationary from the start.
#[derive(Debug, Clone)]
pub struct ColoredNoise<T: Real> {
    kernel: Vec<T>,
    scale: DMatrix<T>,
    buffer: VecDeque<DVector<T>>,
    rng: ChaCha8Rng,
}

impl<T: Real> ColoredNoise<T> {
    pub fn new(cfg: &ColoredNoiseConfig<T>, dt: T) -> Result<Self> {
        if !(cfg.sigma >= T::zero()) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: "kernel width must be non-negative".into(),
            });
        }
        if !(dt > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: "sample interval must be positive".into(),
            });
        }
        let scale = cfg
            .covariance
            .clone()
            .cholesky()
            .ok_or(Error::InvalidParameter {
                name: "covariance",
                reason: "must be symmetric positive definite".into(),
            })?
            .l();
        let kernel = gaussian_kernel(cfg.sigma, dt);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let dim = cfg.dim();
        let buffer = (0..kernel.len()).map(|_| white(&mut rng, dim)).collect();
        Ok(Self {
            kernel,
            scale,
            buffer,
            rng,
        })
    }

    pub fn dim(&self) -> usize {
        self.scale.nrows()
    }

    pub fn kernel_len(&self) -> usize {
        self.kernel.len()
    }

    pub fn next_sample(&mut self) -> DVector<T> {
        let dim = self.dim();
        self.buffer.pop_front();
        self.buffer.push_back(white(&mut self.rng, dim));
        let mut acc = DVector::zeros(dim);
        for (h, w) in self.kernel.iter().zip(self.buffer.iter()) {
            acc.axpy(*h, w, T::one());
        }
        &self.scale * acc
    }
}

fn white<T: Real>(rng: &mut ChaCha8Rng, dim: usize) -> DVector<T> {
    DVector::from_fn(dim, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        T::lit(z)
    })
}

/// `n_samples × dim` matrix of colored noise, one sample per row.
pub fn colored_noise<T: Real>(
    n_samples: usize,
    cfg: &ColoredNoiseConfig<T>,
    dt: T,
) -> Result<DMatrix<T>> {
    let mut gen = ColoredNoise::new(cfg, dt)?;
    let mut out = DMatrix::zeros(n_samples, cfg.dim());
    for r in 0..n_samples {
        let s = gen.next_sample();
        out.row_mut(r).copy_from(&s.transpose());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn autocorr(xs: &[f64], lag: usize) -> f64 {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let cov = (0..n - lag)
            .map(|i| (xs[i] - mean) * (xs[i + lag] - mean))
            .sum::<f64>()
            / (n - lag) as f64;
        cov / var
    }

    fn scalar(sigma: f64, var: f64, seed: u64) -> ColoredNoiseConfig<f64> {
        ColoredNoiseConfig::new(sigma, DMatrix::from_element(1, 1, var), seed)
    }

    #[test]
    fn white_limit_is_uncorrelated() {
        let xs = colored_noise(100_000, &scalar(0.0, 1.0, 1), 0.1).unwrap();
        assert!(autocorr(xs.as_slice(), 1).abs() < 0.05);
    }

    #[test]
    fn autocorrelation_follows_gaussian_shape() {
        let dt = 0.1;
        let xs = colored_noise(100_000, &scalar(1.0, 1.0, 2), dt).unwrap();
        for lag in [1usize, 5, 10, 15, 20] {
            let h = lag as f64 * dt;
            let expected = (-h * h / 4.0).exp();
            let got = autocorr(xs.as_slice(), lag);
            assert!(
                (got - expected).abs() < 0.05,
                "lag {lag}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn variance_matches_target() {
        for (sigma, seed) in [(0.0, 3), (0.5, 4), (1.0, 5)] {
            let xs = colored_noise(100_000, &scalar(sigma, 2.5, seed), 0.1).unwrap();
            let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
            assert!((var / 2.5 - 1.0).abs() < 0.05, "sigma {sigma}: var {var}");
        }
    }

    #[test]
    fn cross_covariance_matches_target() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 2.0]);
        let xs =
            colored_noise(100_000, &ColoredNoiseConfig::new(0.3, cov.clone(), 9), 0.1).unwrap();
        let emp = xs.transpose() * &xs / xs.nrows() as f64;
        for (e, t) in emp.iter().zip(cov.iter()) {
            assert!((e - t).abs() < 0.05 * 2.0, "{emp} vs {cov}");
        }
    }

    #[test]
    fn seeded_output_is_bit_identical() {
        let cfg = scalar(1.0, 1.0, 42);
        let a = colored_noise(1000, &cfg, 0.05).unwrap();
        let b = colored_noise(1000, &cfg, 0.05).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kernel_has_unit_energy_and_4_sigma_support() {
        let k = gaussian_kernel(1.0, 0.1);
        assert_eq!(k.len(), 81);
        let energy: f64 = k.iter().map(|h| h * h).sum();
        assert!((energy - 1.0).abs() < 1e-12);
        assert_eq!(gaussian_kernel(0.0, 0.1), vec![1.0]);
    }

    #[test]
    fn rejects_invalid_covariance() {
        let cfg = scalar(1.0, -1.0, 0);
        assert!(colored_noise(10, &cfg, 0.1).is_err());
    }
}
