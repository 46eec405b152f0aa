//! Closed-form KL terms of the mixture-prior lower bound.
//!
//! All functions work on a single document; the batched loss in
//! `elbo` calls them row by row so there is one definition of each term.

use crate::diffmath::{softplus_scalar, Matrix, Real};

use super::ALPHA_EPS;

/// `Σ_c β_c (ln β_c − ln π_c)` from log-probabilities, with `0 · ln 0 = 0`.
pub(crate) fn kl_categorical_log<T: Real>(log_beta: &[T], log_pi: &[T]) -> T {
    log_beta
        .iter()
        .zip(log_pi)
        .map(|(&lb, &lp)| {
            let b = lb.exp();
            if b == T::zero() {
                T::zero()
            } else {
                b * (lb - lp)
            }
        })
        .sum()
}

/// `KL(Cat(β) ‖ Cat(π)) = Σ_c β_c ln(β_c / π_c)`.
pub fn kl_categorical<T: Real>(beta: &[T], pi: &[T]) -> T {
    beta.iter()
        .zip(pi)
        .map(|(&b, &p)| if b == T::zero() { T::zero() } else { b * (b.ln() - p.ln()) })
        .sum()
}

/// Per-component `KL(N(μ_q, diag σ_q²) ‖ N(μ_c, diag σ_c²))` for one document.
/// `prior_mean` and `prior_logvar` are `K x m`.
pub(crate) fn gaussian_component_kls<T: Real>(
    mu_q: &[T],
    logvar_q: &[T],
    prior_mean: &Matrix<T>,
    prior_logvar: &Matrix<T>,
) -> Vec<T> {
    let half = T::lit(0.5);
    (0..prior_mean.rows())
        .map(|c| {
            let mc = prior_mean.row(c);
            let lc = prior_logvar.row(c);
            let mut acc = T::zero();
            for i in 0..mu_q.len() {
                let d = mu_q[i] - mc[i];
                acc = acc + lc[i] - logvar_q[i] + (logvar_q[i].exp() + d * d) * (-lc[i]).exp() - T::one();
            }
            half * acc
        })
        .collect()
}

/// `Σ_c β_c KL(q(z|x) ‖ p(z|c))` for a diagonal Gaussian posterior and a
/// Gaussian mixture prior given by per-component means and log-variances.
pub fn expected_kl_gaussian<T: Real>(
    mu_q: &[T],
    logvar_q: &[T],
    beta: &[T],
    prior_mean: &Matrix<T>,
    prior_logvar: &Matrix<T>,
) -> T {
    gaussian_component_kls(mu_q, logvar_q, prior_mean, prior_logvar)
        .into_iter()
        .zip(beta)
        .map(|(kl, &b)| b * kl)
        .sum()
}

#[inline]
pub(crate) fn clamp_alpha<T: Real>(a: T) -> T {
    let eps = T::lit(ALPHA_EPS);
    a.max(eps).min(T::one() - eps)
}

/// Per-component Bernoulli KL for one document. `gamma_logits` is `K x m`;
/// `ln γ` and `ln(1 − γ)` are taken from the logits directly.
pub(crate) fn bernoulli_component_kls<T: Real>(alpha: &[T], gamma_logits: &Matrix<T>) -> Vec<T> {
    let alpha: Vec<T> = alpha.iter().map(|&a| clamp_alpha(a)).collect();
    let neg_entropy: T = alpha
        .iter()
        .map(|&a| a * a.ln() + (T::one() - a) * (T::one() - a).ln())
        .sum();
    (0..gamma_logits.rows())
        .map(|c| {
            let cross: T = alpha
                .iter()
                .zip(gamma_logits.row(c))
                .map(|(&a, &l)| {
                    let log_g = -softplus_scalar(-l);
                    let log_1mg = -softplus_scalar(l);
                    a * log_g + (T::one() - a) * log_1mg
                })
                .sum();
            neg_entropy - cross
        })
        .collect()
}

/// `Σ_c β_c Σ_i [α_i ln(α_i/γ_ci) + (1−α_i) ln((1−α_i)/(1−γ_ci))]` with
/// `γ = sigmoid(gamma_logits)` and `α` clamped to `[1e-6, 1 − 1e-6]`.
pub fn expected_kl_bernoulli<T: Real>(alpha: &[T], beta: &[T], gamma_logits: &Matrix<T>) -> T {
    bernoulli_component_kls(alpha, gamma_logits)
        .into_iter()
        .zip(beta)
        .map(|(kl, &b)| b * kl)
        .sum()
}

/// Logit of a probability, the inverse of [`sigmoid_scalar`].
pub fn logit<T: Real>(p: T) -> T {
    (p / (T::one() - p)).ln()
}
