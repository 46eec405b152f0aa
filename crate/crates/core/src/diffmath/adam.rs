use serde::{Deserialize, Serialize};

use super::{Matrix, MathError, Param, Real};

/// Adam hyperparameters with a staircase learning-rate decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Multiplicative decay applied once every `decay_interval` steps.
    pub decay: f64,
    pub decay_interval: u64,
    /// Global gradient-norm clip applied before each update.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay: 0.96,
            decay_interval: 10_000,
            clip_norm: Some(5.0),
        }
    }
}

#[derive(Debug, Clone)]
struct Moments<T> {
    first: Matrix<T>,
    second: Matrix<T>,
}

#[derive(Debug, Clone)]
pub struct Adam<T = f32> {
    config: AdamConfig,
    step: u64,
    moments: Vec<Moments<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Number of updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_step_count(&mut self, step: u64) {
        self.step = step;
    }

    /// Learning rate that the next call to [`Adam::step`] will use.
    pub fn effective_lr(&self) -> f64 {
        let interval = self.config.decay_interval.max(1);
        let exponent = (self.step / interval) as i32;
        self.config.learning_rate * self.config.decay.powi(exponent)
    }

    /// Applies one update to `params`, then zeroes their gradients.
    ///
    /// The parameter list must have the same order and shapes on every call.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<(), MathError> {
        for p in params.iter() {
            if !p.grad.is_finite() {
                return Err(MathError::NonFiniteGradient(p.name.clone()));
            }
        }
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| Moments {
                    first: Matrix::zeros(p.value.rows(), p.value.cols()),
                    second: Matrix::zeros(p.value.rows(), p.value.cols()),
                })
                .collect();
        }
        if self.moments.len() != params.len()
            || self
                .moments
                .iter()
                .zip(params.iter())
                .any(|(m, p)| m.first.shape() != p.value.shape())
        {
            return Err(MathError::OptimizerLayout);
        }

        let clip_scale = match self.config.clip_norm {
            Some(max_norm) => {
                let norm = params.iter().map(|p| p.grad.sum_sq()).sum::<f64>().sqrt();
                if norm > max_norm {
                    max_norm / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };

        let lr = self.effective_lr();
        let t = (self.step + 1) as i32;
        let b1 = self.config.beta1;
        let b2 = self.config.beta2;
        let correction1 = 1.0 - b1.powi(t);
        let correction2 = 1.0 - b2.powi(t);
        let (b1, b2) = (T::lit(b1), T::lit(b2));
        let (one, eps) = (T::one(), T::lit(self.config.epsilon));
        let step_size = T::lit(lr / correction1);
        let sqrt_c2 = T::lit(correction2.sqrt());
        let clip = T::lit(clip_scale);

        for (p, m) in params.iter_mut().zip(self.moments.iter_mut()) {
            let Param { value, grad, .. } = &mut **p;
            for (((w, g), mv), vv) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data_mut().iter_mut())
                .zip(m.first.data_mut())
                .zip(m.second.data_mut())
            {
                let gc = *g * clip;
                *mv = b1 * *mv + (one - b1) * gc;
                *vv = b2 * *vv + (one - b2) * gc * gc;
                *w = *w - step_size * *mv / (vv.sqrt() / sqrt_c2 + eps);
                *g = T::zero();
            }
        }
        self.step += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(v: f64, g: f64) -> Param<f64> {
        let mut p = Param::new("w", Matrix::row_vector(vec![v]));
        p.grad.set(0, 0, g);
        p
    }

    #[test]
    fn staircase_decay_boundary() {
        let mut adam = Adam::<f32>::new(AdamConfig::default());
        adam.set_step_count(9_999);
        assert_relative_eq!(adam.effective_lr(), 1e-3);
        adam.set_step_count(10_000);
        assert_relative_eq!(adam.effective_lr(), 9.6e-4, epsilon = 1e-15);
    }

    #[test]
    fn zero_gradients_fixed_point() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = scalar(0.25, 0.0);
        adam.step(&mut [&mut p]).unwrap();
        adam.step(&mut [&mut p]).unwrap();
        assert_eq!(p.value.get(0, 0), 0.25);
        assert_eq!(adam.step_count(), 2);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g² after bias correction, so |Δ| = lr · 1/(1 + ε).
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = scalar(0.0, 1.0);
        adam.step(&mut [&mut p]).unwrap();
        assert_relative_eq!(p.value.get(0, 0), -1e-3 / (1.0 + 1e-8), epsilon = 1e-15);
        assert_eq!(p.grad.get(0, 0), 0.0);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = scalar(0.0, f64::NAN);
        p.name = "decoder.E".into();
        match adam.step(&mut [&mut p]) {
            Err(MathError::NonFiniteGradient(name)) => assert_eq!(name, "decoder.E"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn clipping_bounds_update_direction_not_magnitude() {
        // With a single step Adam normalizes the gradient, so clipping only
        // changes the moment estimates; the first update is still ±lr.
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = scalar(0.0, 1e6);
        adam.step(&mut [&mut p]).unwrap();
        assert_relative_eq!(p.value.get(0, 0), -1e-3, epsilon = 1e-9);
    }
}
