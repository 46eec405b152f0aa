//! Independent reference implementations used by the integration tests and
//! the acceptance harness. Nothing here calls into the library's math.

#![allow(dead_code)]

use mixhash::diffmath::{Matrix, SparseMatrix};
use mixhash::models::{Batch, ModelParams, Noise};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn dense_layer(input: &[Vec<f64>], w: &Matrix<f64>, b: &Matrix<f64>, relu: bool) -> Vec<Vec<f64>> {
    input
        .iter()
        .map(|x| {
            (0..w.cols())
                .map(|j| {
                    let mut s = b.get(0, j);
                    for (i, &xi) in x.iter().enumerate() {
                        s += xi * w.get(i, j);
                    }
                    if relu && s < 0.0 {
                        0.0
                    } else {
                        s
                    }
                })
                .collect()
        })
        .collect()
}

fn densify(x: &SparseMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.rows())
        .map(|r| {
            let mut row = vec![0.0; x.cols()];
            let (idx, val) = x.row(r);
            for (&i, &v) in idx.iter().zip(val) {
                row[i as usize] = v;
            }
            row
        })
        .collect()
}

/// Plain single-Gaussian VAE objective with a standard normal prior:
/// mean over the batch of `−Σ count·log softmax(zE + b) + KL(q ‖ N(0, I))`.
pub fn plain_vae_loss(p: &ModelParams<f64>, batch: &Batch<f64>, noise: &Noise<f64>) -> f64 {
    let e = &p.encoder;
    let x = densify(&batch.tfidf);
    let h1 = dense_layer(&x, &e.layer1.weight.value, &e.layer1.bias.value, true);
    let h2 = dense_layer(&h1, &e.layer2.weight.value, &e.layer2.bias.value, true);
    let mu = dense_layer(&h2, &e.latent.weight.value, &e.latent.bias.value, false);
    let spread = e.spread.as_ref().expect("Gaussian encoder");
    let lv = dense_layer(&h2, &spread.weight.value, &spread.bias.value, false);
    let counts = densify(&batch.counts);
    let mut total = 0.0;
    for r in 0..x.len() {
        let z: Vec<f64> = (0..mu[r].len())
            .map(|i| mu[r][i] + (lv[r][i] / 2.0).exp() * noise.normal.get(r, i))
            .collect();
        let logits = dense_layer(&[z], &p.decoder.embedding.value, &p.decoder.bias.value, false).remove(0);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let recon: f64 = counts[r].iter().zip(&logits).map(|(c, l)| c * (l - lse)).sum();
        let kl: f64 = (0..mu[r].len())
            .map(|i| 0.5 * (mu[r][i] * mu[r][i] + lv[r][i].exp() - lv[r][i] - 1.0))
            .sum();
        total += -recon + kl;
    }
    total / x.len() as f64
}

/// Per-bit Hamming distance of two packed codes.
pub fn naive_hamming(a: &[u64], b: &[u64], bits: usize) -> u32 {
    (0..bits)
        .filter(|&i| (a[i / 64] >> (i % 64) & 1) != (b[i / 64] >> (i % 64) & 1))
        .count() as u32
}

/// Full sort by `(distance, index)` with the naive distance.
pub fn naive_topk(query: &[u64], codes: &[Vec<u64>], bits: usize, k: usize) -> Vec<(usize, u32)> {
    let mut all: Vec<(usize, u32)> = codes
        .iter()
        .enumerate()
        .map(|(i, c)| (i, naive_hamming(query, c, bits)))
        .collect();
    all.sort_by_key(|&(i, d)| (d, i));
    all.truncate(k);
    all
}

pub fn random_code(rng: &mut impl Rng, bits: usize) -> Vec<u64> {
    let words = bits.div_ceil(64);
    let mut c: Vec<u64> = (0..words).map(|_| rng.random()).collect();
    if !bits.is_multiple_of(64) {
        c[words - 1] &= (1u64 << (bits % 64)) - 1;
    }
    c
}

/// Mean and standard error of a sample.
pub fn mean_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn normal_logpdf(z: f64, mean: f64, logvar: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI).ln() + logvar + (z - mean).powi(2) / logvar.exp())
}

/// Monte-Carlo samples of `ln q(z) − Σ_c β_c ln p(z|c)` with `z ~ q`.
pub fn mc_gaussian_kl_samples(
    mu: &[f64],
    lv: &[f64],
    beta: &[f64],
    means: &[Vec<f64>],
    lvs: &[Vec<f64>],
    n: usize,
    rng: &mut impl Rng,
) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let mut s = 0.0;
            for i in 0..mu.len() {
                let eps: f64 = StandardNormal.sample(rng);
                let z = mu[i] + (lv[i] / 2.0).exp() * eps;
                s += normal_logpdf(z, mu[i], lv[i]);
                for c in 0..beta.len() {
                    s -= beta[c] * normal_logpdf(z, means[c][i], lvs[c][i]);
                }
            }
            s
        })
        .collect()
}

/// Monte-Carlo samples of `ln q(z) − Σ_c β_c ln p(z|c)` for factorized
/// Bernoulli `q` (probabilities `alpha`) and components `gammas`.
pub fn mc_bernoulli_kl_samples(alpha: &[f64], beta: &[f64], gammas: &[Vec<f64>], n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let logp = |z: bool, p: f64| if z { p.ln() } else { (1.0 - p).ln() };
    (0..n)
        .map(|_| {
            let mut s = 0.0;
            for i in 0..alpha.len() {
                let z = rng.random::<f64>() < alpha[i];
                s += logp(z, alpha[i]);
                for c in 0..beta.len() {
                    s -= beta[c] * logp(z, gammas[c][i]);
                }
            }
            s
        })
        .collect()
}

/// Random probability vector of length `k`.
pub fn random_simplex(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Cosine similarity of two sparse rows given as (index, value) lists.
pub fn sparse_cosine(a: &[(u32, f32)], b: &[(u32, f32)]) -> f64 {
    let (mut i, mut j, mut dot) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += a[i].1 as f64 * b[j].1 as f64;
                i += 1;
                j += 1;
            }
        }
    }
    let na: f64 = a.iter().map(|x| (x.1 as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (x.1 as f64).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}
