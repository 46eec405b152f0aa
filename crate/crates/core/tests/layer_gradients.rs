//! Central differences against each layer's backward in isolation.

use mixhash::diffmath::{
    affine, affine_backward, log_softmax, log_softmax_backward, relu, relu_backward, sigmoid, sigmoid_backward,
    softplus, softplus_backward, Matrix,
};
use mixhash::models::{
    inject_noise, inject_noise_backward, reparam_backward, reparam_gaussian, sample_bernoulli_st,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-6;

fn random(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

fn dot(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Numeric gradient of `x ↦ ⟨w, f(x)⟩`, compared elementwise to `analytic`.
fn check(x: &Matrix<f64>, w: &Matrix<f64>, f: impl Fn(&Matrix<f64>) -> Matrix<f64>, analytic: &Matrix<f64>) {
    assert_eq!(x.shape(), analytic.shape());
    for i in 0..x.data().len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += EPS;
        let mut minus = x.clone();
        minus.data_mut()[i] -= EPS;
        let numeric = (dot(w, &f(&plus)) - dot(w, &f(&minus))) / (2.0 * EPS);
        let a = analytic.data()[i];
        assert!((a - numeric).abs() <= 1e-6 * (1.0 + numeric.abs()), "coord {i}: {a} vs {numeric}");
    }
}

#[test]
fn affine_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (x, wt, b) = (random(&mut rng, 3, 4), random(&mut rng, 4, 5), random(&mut rng, 1, 5));
    let up = random(&mut rng, 3, 5);
    let g = affine_backward(&x, &wt, &up).unwrap();
    check(&x, &up, |x| affine(x, &wt, &b).unwrap(), &g.input);
    check(&wt, &up, |wt| affine(&x, wt, &b).unwrap(), &g.weight);
    check(&b, &up, |b| affine(&x, &wt, b).unwrap(), &g.bias);
}

#[test]
fn elementwise_activations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&mut rng, 3, 6).map(|v| if v.abs() < 0.05 { 0.3 } else { v });
    let up = random(&mut rng, 3, 6);
    check(&x, &up, relu, &relu_backward(&x, &up).unwrap());
    check(&x, &up, sigmoid, &sigmoid_backward(&sigmoid(&x), &up).unwrap());
    check(&x, &up, softplus, &softplus_backward(&x, &up).unwrap());
}

#[test]
fn log_softmax_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&mut rng, 4, 7);
    let up = random(&mut rng, 4, 7);
    check(&x, &up, log_softmax, &log_softmax_backward(&log_softmax(&x), &up).unwrap());
}

#[test]
fn reparameterization_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mu, lv, eps) = (random(&mut rng, 2, 5), random(&mut rng, 2, 5), random(&mut rng, 2, 5));
    let up = random(&mut rng, 2, 5);
    let (dmu, dlv) = reparam_backward(&lv, &eps, &up).unwrap();
    check(&mu, &up, |mu| reparam_gaussian(mu, &lv, &eps).unwrap(), &dmu);
    check(&lv, &up, |lv| reparam_gaussian(&mu, lv, &eps).unwrap(), &dlv);
    let d = inject_noise_backward(&lv, &eps, &up).unwrap();
    check(&lv, &up, |lv| inject_noise(&mu, lv, &eps).unwrap(), &d);
}

#[test]
fn clamped_log_variance_has_zero_gradient() {
    let lv = Matrix::row_vector(vec![-12.0, 12.0, 10.0]);
    let eps = Matrix::row_vector(vec![1.0, 1.0, 1.0]);
    let (_, dlv) = reparam_backward(&lv, &eps, &eps).unwrap();
    assert_eq!(dlv.get(0, 0), 0.0);
    assert_eq!(dlv.get(0, 1), 0.0);
    assert!(dlv.get(0, 2) > 0.0);
}

#[test]
fn hard_samples_are_unbiased() {
    let n = 100_000;
    let alpha = Matrix::filled(1, n, 0.7);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xi = Matrix::from_vec(1, n, (0..n).map(|_| rng.random::<f64>()).collect()).unwrap();
    let z = sample_bernoulli_st(&alpha, &xi).unwrap();
    let mean = z.data().iter().sum::<f64>() / n as f64;
    assert!((mean - 0.7).abs() <= 3.0 * (0.21f64 / n as f64).sqrt(), "{mean}");
}
