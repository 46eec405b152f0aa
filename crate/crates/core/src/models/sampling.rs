use crate::diffmath::{Matrix, MathError, Real};

use super::{LOGVAR_MAX, LOGVAR_MIN};

#[inline]
pub(crate) fn clamp_logvar<T: Real>(v: T) -> T {
    v.max(T::lit(LOGVAR_MIN)).min(T::lit(LOGVAR_MAX))
}

/// 1 where a raw log-variance lies inside the clamp range, else 0.
#[inline]
pub(crate) fn logvar_mask<T: Real>(v: T) -> T {
    if v >= T::lit(LOGVAR_MIN) && v <= T::lit(LOGVAR_MAX) {
        T::one()
    } else {
        T::zero()
    }
}

/// `z = μ + exp(logvar/2) ⊙ noise`, with `logvar` clamped to `[-10, 10]`.
pub fn reparam_gaussian<T: Real>(mu: &Matrix<T>, logvar: &Matrix<T>, noise: &Matrix<T>) -> Result<Matrix<T>, MathError> {
    mu.ensure_same_shape(logvar, "reparam_gaussian")?;
    mu.ensure_same_shape(noise, "reparam_gaussian")?;
    let half = T::lit(0.5);
    let data = mu
        .data()
        .iter()
        .zip(logvar.data())
        .zip(noise.data())
        .map(|((&m, &lv), &e)| m + (half * clamp_logvar(lv)).exp() * e)
        .collect();
    Matrix::from_vec(mu.rows(), mu.cols(), data)
}

/// Gradients of [`reparam_gaussian`] with respect to `(μ, logvar)`.
pub fn reparam_backward<T: Real>(
    logvar: &Matrix<T>,
    noise: &Matrix<T>,
    upstream: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>), MathError> {
    logvar.ensure_same_shape(upstream, "reparam_backward")?;
    let half = T::lit(0.5);
    let data = logvar
        .data()
        .iter()
        .zip(noise.data())
        .zip(upstream.data())
        .map(|((&lv, &e), &u)| u * e * half * (half * clamp_logvar(lv)).exp() * logvar_mask(lv))
        .collect();
    Ok((upstream.clone(), Matrix::from_vec(logvar.rows(), logvar.cols(), data)?))
}

/// Binary sample `z = ½(sign(α − ξ) + 1)` with `sign(0) = +1`.
pub fn sample_bernoulli_st<T: Real>(alpha: &Matrix<T>, xi: &Matrix<T>) -> Result<Matrix<T>, MathError> {
    alpha.ensure_same_shape(xi, "sample_bernoulli_st")?;
    let data = alpha
        .data()
        .iter()
        .zip(xi.data())
        .map(|(&a, &x)| if a - x >= T::zero() { T::one() } else { T::zero() })
        .collect();
    Matrix::from_vec(alpha.rows(), alpha.cols(), data)
}

/// Straight-through surrogate: `∂z/∂g ≈ ½ σ'(g) = ½ α(1 − α)`, returned as
/// the gradient with respect to the logits `g` where `α = σ(g)`.
pub fn st_backward<T: Real>(alpha: &Matrix<T>, upstream: &Matrix<T>) -> Result<Matrix<T>, MathError> {
    alpha.ensure_same_shape(upstream, "st_backward")?;
    let half = T::lit(0.5);
    let data = alpha
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&a, &u)| u * half * a * (T::one() - a))
        .collect();
    Matrix::from_vec(alpha.rows(), alpha.cols(), data)
}

/// `z' = z + exp(logvar/2) ⊙ eps`, with `logvar` clamped to `[-10, 10]`.
pub fn inject_noise<T: Real>(z: &Matrix<T>, noise_logvar: &Matrix<T>, eps: &Matrix<T>) -> Result<Matrix<T>, MathError> {
    reparam_gaussian(z, noise_logvar, eps)
}

/// Gradient of [`inject_noise`] with respect to the noise log-variance.
pub fn inject_noise_backward<T: Real>(
    noise_logvar: &Matrix<T>,
    eps: &Matrix<T>,
    upstream: &Matrix<T>,
) -> Result<Matrix<T>, MathError> {
    reparam_backward(noise_logvar, eps, upstream).map(|(_, d)| d)
}
