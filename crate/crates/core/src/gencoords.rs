//! Generalized coordinates of motion.
//!
//! A trajectory is represented locally by a value and its first `p` time
//! derivatives stacked into one vector `[x, x', x'', ...]`. Colored noise is
//! handled by giving each derivative order its own (correlated) precision,
//! built from the autocorrelation of Gaussian-filtered white noise.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, DVectorView, DVectorViewMut};

use crate::error::{dim_mismatch, Error, Result};
use crate::scalar::Real;

/// Highest embedding order supported by [`smoothness_precision`].
pub const MAX_SMOOTHNESS_ORDER: usize = 6;

/// A base vector of dimension `n` together with its first `p` derivatives,
/// laid out as `p + 1` consecutive blocks of length `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedVector<T: Real> {
    order: usize,
    base_dim: usize,
    data: DVector<T>,
}

impl<T: Real> GeneralizedVector<T> {
    pub fn new(order: usize, base_dim: usize, data: DVector<T>) -> Result<Self> {
        if base_dim == 0 {
            return Err(Error::InvalidParameter {
                name: "base_dim",
                reason: "must be at least 1".into(),
            });
        }
        let expected = base_dim * (order + 1);
        if data.len() != expected {
            return Err(dim_mismatch("GeneralizedVector", expected, data.len()));
        }
        Ok(Self {
            order,
            base_dim,
            data,
        })
    }

    pub fn from_slice(order: usize, base_dim: usize, values: &[T]) -> Result<Self> {
        Self::new(order, base_dim, DVector::from_column_slice(values))
    }

    pub fn zeros(order: usize, base_dim: usize) -> Self {
        assert!(base_dim > 0, "base_dim must be at least 1");
        Self {
            order,
            base_dim,
            data: DVector::zeros(base_dim * (order + 1)),
        }
    }

    /// Builds a generalized vector whose order-0 block is `base` and whose
    /// higher-order blocks are zero.
    pub fn from_base(order: usize, base: &DVector<T>) -> Self {
        let mut v = Self::zeros(order, base.len());
        v.block_mut(0).copy_from(base);
        v
    }

    pub fn from_blocks(blocks: &[DVector<T>]) -> Result<Self> {
        let first = blocks.first().ok_or(Error::InvalidParameter {
            name: "blocks",
            reason: "at least one block required".into(),
        })?;
        let n = first.len();
        if n == 0 {
            return Err(dim_mismatch("GeneralizedVector::from_blocks", ">= 1", 0));
        }
        let mut v = Self::zeros(blocks.len() - 1, n);
        for (k, b) in blocks.iter().enumerate() {
            if b.len() != n {
                return Err(dim_mismatch("GeneralizedVector::from_blocks", n, b.len()));
            }
            v.block_mut(k).copy_from(b);
        }
        Ok(v)
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    /// Number of derivative blocks, `p + 1`.
    #[inline]
    pub fn num_blocks(&self) -> usize {
        self.order + 1
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn block(&self, k: usize) -> DVectorView<'_, T> {
        self.data.rows(k * self.base_dim, self.base_dim)
    }

    pub fn block_mut(&mut self, k: usize) -> DVectorViewMut<'_, T> {
        self.data.rows_mut(k * self.base_dim, self.base_dim)
    }

    pub fn as_vector(&self) -> &DVector<T> {
        &self.data
    }

    pub fn into_vector(self) -> DVector<T> {
        self.data
    }

    /// Replaces the data, keeping order and base dimension.
    pub fn with_data(&self, data: DVector<T>) -> Result<Self> {
        Self::new(self.order, self.base_dim, data)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.order == other.order && self.base_dim == other.base_dim
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert!(
            self.same_shape(other),
            "generalized vectors differ in shape: (p={}, n={}) vs (p={}, n={})",
            self.order,
            self.base_dim,
            other.order,
            other.base_dim
        );
        Self {
            order: self.order,
            base_dim: self.base_dim,
            data: self.data.zip_map(&other.data, f),
        }
    }
}

impl<T: Real> Add for &GeneralizedVector<T> {
    type Output = GeneralizedVector<T>;
    fn add(self, rhs: Self) -> GeneralizedVector<T> {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl<T: Real> Sub for &GeneralizedVector<T> {
    type Output = GeneralizedVector<T>;
    fn sub(self, rhs: Self) -> GeneralizedVector<T> {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl<T: Real> Mul<T> for &GeneralizedVector<T> {
    type Output = GeneralizedVector<T>;
    fn mul(self, rhs: T) -> GeneralizedVector<T> {
        GeneralizedVector {
            order: self.order,
            base_dim: self.base_dim,
            data: &self.data * rhs,
        }
    }
}

impl<T: Real> Neg for &GeneralizedVector<T> {
    type Output = GeneralizedVector<T>;
    fn neg(self) -> GeneralizedVector<T> {
        self * -T::one()
    }
}

/// The temporal shift operator `D`: block `k` of the output is block `k + 1`
/// of the input, and the highest block becomes zero.
pub fn shift<T: Real>(v: &GeneralizedVector<T>) -> GeneralizedVector<T> {
    let n = v.base_dim;
    let len = v.len();
    let mut data = DVector::zeros(len);
    if len > n {
        data.rows_mut(0, len - n)
            .copy_from(&v.data.rows(n, len - n));
    }
    GeneralizedVector {
        order: v.order,
        base_dim: n,
        data,
    }
}

/// Matrix form of [`shift`] for `p + 1` blocks of size `n`: `D_p ⊗ I_n`.
pub fn shift_matrix<T: Real>(order: usize, base_dim: usize) -> DMatrix<T> {
    let size = base_dim * (order + 1);
    let mut d = DMatrix::zeros(size, size);
    for i in 0..size.saturating_sub(base_dim) {
        d[(i, i + base_dim)] = T::one();
    }
    d
}

/// Block-diagonal `I_{p+1} ⊗ m`: applies a base-space linear map to every
/// derivative order.
pub fn block_diagonal<T: Real>(order: usize, m: &DMatrix<T>) -> DMatrix<T> {
    DMatrix::<T>::identity(order + 1, order + 1).kronecker(m)
}

/// Estimates a generalized vector from uniformly spaced samples (oldest
/// first) using backward differences over the last `p + 1` samples.
///
/// Block `k` is the `k`-th derivative at the most recent sample of the
/// unique degree-`p` polynomial through those samples, so polynomials of
/// degree `<= p` are embedded exactly.
pub fn embed_taylor<T: Real>(
    samples: &[DVector<T>],
    dt: T,
    order: usize,
) -> Result<GeneralizedVector<T>> {
    TaylorEmbedder::new(order, dt)?.embed(samples)
}

/// Reusable backward-difference weights for [`embed_taylor`].
#[derive(Debug, Clone)]
pub struct TaylorEmbedder<T: Real> {
    order: usize,
    // weights[(k, j)] multiplies the sample j steps back when forming the
    // k-th derivative.
    weights: DMatrix<T>,
}

impl<T: Real> TaylorEmbedder<T> {
    pub fn new(order: usize, dt: T) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: "must be positive and finite".into(),
            });
        }
        let m = order + 1;
        // y(t - j dt) = sum_k d_k (-j dt)^k / k!  in units where dt = 1.
        let mut vander = DMatrix::<f64>::zeros(m, m);
        for j in 0..m {
            let mut term = 1.0;
            for k in 0..m {
                vander[(j, k)] = term;
                term *= -(j as f64) / (k as f64 + 1.0);
            }
        }
        let inv = vander
            .try_inverse()
            .ok_or(Error::Singular("backward-difference system"))?;
        let mut weights = DMatrix::<T>::zeros(m, m);
        let mut scale = T::one();
        for k in 0..m {
            for j in 0..m {
                weights[(k, j)] = T::lit(inv[(k, j)]) / scale;
            }
            scale *= dt;
        }
        Ok(Self { order, weights })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn window(&self) -> usize {
        self.order + 1
    }

    pub fn embed(&self, samples: &[DVector<T>]) -> Result<GeneralizedVector<T>> {
        let m = self.window();
        if samples.len() < m {
            return Err(Error::InsufficientSamples {
                needed: m,
                got: samples.len(),
            });
        }
        let latest = &samples[samples.len() - 1];
        let n = latest.len();
        if n == 0 {
            return Err(dim_mismatch("embed_taylor", ">= 1", 0));
        }
        let mut out = GeneralizedVector::zeros(self.order, n);
        for j in 0..m {
            let s = &samples[samples.len() - 1 - j];
            if s.len() != n {
                return Err(dim_mismatch("embed_taylor sample", n, s.len()));
            }
            for k in 0..m {
                let w = self.weights[(k, j)];
                if w != T::zero() {
                    out.block_mut(k).axpy(w, s, T::one());
                }
            }
        }
        Ok(out)
    }
}

/// Width and embedding order of the Gaussian kernel that colors the noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessKernel<T: Real> {
    sigma: T,
    order: usize,
}

impl<T: Real> SmoothnessKernel<T> {
    pub fn new(sigma: T, order: usize) -> Result<Self> {
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: format!("kernel width must be positive, got {sigma}"),
            });
        }
        if order > MAX_SMOOTHNESS_ORDER {
            return Err(Error::InvalidParameter {
                name: "order",
                reason: format!("embedding order {order} exceeds {MAX_SMOOTHNESS_ORDER}"),
            });
        }
        Ok(Self { sigma, order })
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

/// `(2k)! / k!`
fn double_factorial_ratio(k: usize) -> f64 {
    ((k + 1)..=(2 * k)).map(|i| i as f64).product()
}

/// Unit-width derivative covariance: entry `(i, j)` of `M` at `1/(4σ²) = 1`.
fn unit_derivative_covariance(order: usize) -> DMatrix<f64> {
    let m = order + 1;
    DMatrix::from_fn(m, m, |i, j| {
        if (i + j) % 2 == 1 {
            return 0.0;
        }
        let k = (i + j) / 2;
        let sign = if (i + k) % 2 == 0 { 1.0 } else { -1.0 };
        sign * double_factorial_ratio(k)
    })
}

/// Covariance `M` between the derivatives of noise with autocorrelation
/// `ρ(h) = exp(-h² / (4σ²))`, i.e. white noise convolved with a Gaussian
/// kernel of width `σ`: `M[i][j] = (-1)^i ρ^(i+j)(0)`.
///
/// Leading entries: `1, 1/(2σ²), -1/(2σ²), 3/(4σ⁴)`.
pub fn smoothness_covariance<T: Real>(kernel: &SmoothnessKernel<T>) -> DMatrix<T> {
    let a = (4.0 * kernel.sigma.as_f64().powi(2)).recip();
    let unit = unit_derivative_covariance(kernel.order);
    DMatrix::from_fn(unit.nrows(), unit.ncols(), |i, j| {
        T::lit(unit[(i, j)] * a.powf((i + j) as f64 / 2.0))
    })
}

/// Smoothness precision `S(σ²) = M⁻¹`, size `(p+1) × (p+1)`.
///
/// `M = Λ M₁ Λ` with `Λ = diag(a^{i/2})` and `M₁` the unit-width matrix, so the
/// inverse is taken on the well-conditioned `M₁` and rescaled.
pub fn smoothness_precision<T: Real>(kernel: &SmoothnessKernel<T>) -> Result<DMatrix<T>> {
    let a = (4.0 * kernel.sigma.as_f64().powi(2)).recip();
    let unit = unit_derivative_covariance(kernel.order);
    let unit_inv = unit
        .cholesky()
        .ok_or(Error::Singular("smoothness covariance"))?
        .inverse();
    let m = unit_inv.nrows();
    let s = DMatrix::from_fn(m, m, |i, j| {
        T::lit(unit_inv[(i, j)] / a.powf((i + j) as f64 / 2.0))
    });
    Ok(symmetrize(&s))
}

pub(crate) fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

pub(crate) fn symmetry_tolerance<T: Real>() -> T {
    let eps = T::default_epsilon() * T::lit(100.0);
    if eps > T::lit(1e-9) {
        eps
    } else {
        T::lit(1e-9)
    }
}

pub(crate) fn is_symmetric<T: Real>(m: &DMatrix<T>) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.iter().fold(T::one(), |acc, x| acc.max(x.abs()));
    let tol = symmetry_tolerance::<T>() * scale;
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Symmetric precision matrix over a generalized vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedPrecision<T: Real> {
    matrix: DMatrix<T>,
}

impl<T: Real> GeneralizedPrecision<T> {
    /// Wraps a symmetric matrix, removing rounding-level asymmetry.
    pub fn new(matrix: DMatrix<T>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(dim_mismatch(
                "GeneralizedPrecision",
                "square matrix",
                format!("{}x{}", matrix.nrows(), matrix.ncols()),
            ));
        }
        if !is_symmetric(&matrix) {
            return Err(Error::InvalidParameter {
                name: "precision",
                reason: "matrix is not symmetric".into(),
            });
        }
        Ok(Self {
            matrix: symmetrize(&matrix),
        })
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.matrix.clone().cholesky().is_some()
    }

    /// `ln |Π|`, requiring positive definiteness.
    pub fn log_det(&self) -> Result<T> {
        let chol = self
            .matrix
            .clone()
            .cholesky()
            .ok_or(Error::Singular("generalized precision"))?;
        let two = T::lit(2.0);
        Ok(chol
            .l()
            .diagonal()
            .iter()
            .map(|d| two * d.ln())
            .fold(T::zero(), |a, b| a + b))
    }

    /// Covariance `Π⁻¹`.
    pub fn covariance(&self) -> Result<DMatrix<T>> {
        self.matrix
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or(Error::Singular("generalized precision"))
    }

    /// `xᵀ Π x`
    pub fn quadratic_form(&self, x: &DVector<T>) -> T {
        x.dot(&(&self.matrix * x))
    }
}

/// Generalized noise precision `S ⊗ Π` for the block layout used by
/// [`GeneralizedVector`].
pub fn generalized_precision<T: Real>(
    smoothness: &DMatrix<T>,
    precision: &DMatrix<T>,
) -> Result<GeneralizedPrecision<T>> {
    if !smoothness.is_square() {
        return Err(dim_mismatch(
            "generalized_precision smoothness",
            "square",
            format!("{}x{}", smoothness.nrows(), smoothness.ncols()),
        ));
    }
    if !precision.is_square() {
        return Err(dim_mismatch(
            "generalized_precision noise precision",
            "square",
            format!("{}x{}", precision.nrows(), precision.ncols()),
        ));
    }
    GeneralizedPrecision::new(smoothness.kronecker(precision))
}
