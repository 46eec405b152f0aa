use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Param, Real};

/// Anything that exposes its trainable tensors in a fixed order.
pub trait Parameterized<T: Real> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Relative error with the denominator floored at `1e-6`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares the gradients currently stored in `model` against central
/// differences of `loss`.
///
/// Each tensor is probed at up to `coords_per_tensor` randomly chosen
/// coordinates (all of them when the tensor is smaller). `loss` must be a
/// deterministic function of the parameter values.
pub fn finite_difference_check<T, M, F>(
    model: &mut M,
    mut loss: F,
    epsilon: f64,
    coords_per_tensor: usize,
    seed: u64,
) -> GradCheckReport
where
    T: Real,
    M: Parameterized<T>,
    F: FnMut(&M) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let analytic: Vec<(String, Vec<f64>)> = model
        .params()
        .iter()
        .map(|p| {
            (
                p.name.clone(),
                p.grad.data().iter().map(|g| g.to_f64().unwrap_or(f64::NAN)).collect(),
            )
        })
        .collect();

    let mut tensors = Vec::with_capacity(analytic.len());
    for (t, (name, grads)) in analytic.iter().enumerate() {
        let n = grads.len();
        let coords: Vec<usize> = if n <= coords_per_tensor {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, coords_per_tensor).into_vec();
            c.sort_unstable();
            c
        };
        let mut max_err = 0.0f64;
        let mut worst = 0;
        for &i in &coords {
            let original = model.params()[t].value.data()[i];
            model.params_mut()[t].value.data_mut()[i] = original + T::lit(epsilon);
            let plus = loss(model);
            model.params_mut()[t].value.data_mut()[i] = original - T::lit(epsilon);
            let minus = loss(model);
            model.params_mut()[t].value.data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let err = relative_error(grads[i], numeric);
            if err > max_err || err.is_nan() {
                max_err = if err.is_nan() { f64::INFINITY } else { err };
                worst = i;
            }
        }
        tensors.push(TensorCheck {
            name: name.clone(),
            checked: coords.len(),
            max_rel_error: max_err,
            worst_index: worst,
        });
    }
    GradCheckReport { epsilon, tensors }
}
