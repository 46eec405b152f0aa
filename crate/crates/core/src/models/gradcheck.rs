use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffmath::{finite_difference_check, GradCheckReport, Matrix, Parameterized, SparseMatrix};

use super::elbo::{elbo, elbo_backward, Batch, ElboOptions, Noise};
use super::params::{ModelParams, ModelSpec};
use super::{ModelError, ModelKind, NoiseSource};

pub const TINY_VOCAB: usize = 50;
pub const TINY_BITS: usize = 8;
pub const TINY_COMPONENTS: usize = 3;
pub const TINY_BATCH: usize = 4;
pub const TINY_HIDDEN: usize = 16;
pub const TINY_LABELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckOptions {
    pub kind: ModelKind,
    pub noise_source: NoiseSource,
    pub seed: u64,
    /// Central-difference step, applied in 64-bit arithmetic.
    pub epsilon: f64,
    pub coords_per_tensor: usize,
    pub alpha: f64,
    /// Test fixture: doubles the analytic gradient of the named tensor.
    #[serde(default)]
    pub corrupt: Option<String>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            kind: ModelKind::Gmsh,
            noise_source: NoiseSource::Encoder,
            seed: 1,
            epsilon: 1e-5,
            coords_per_tensor: 100,
            alpha: 1.0,
            corrupt: None,
        }
    }
}

fn tiny_batch(rng: &mut impl Rng, supervised: bool) -> Batch<f64> {
    let mut tfidf = SparseMatrix::new(TINY_VOCAB);
    let mut counts = SparseMatrix::new(TINY_VOCAB);
    for _ in 0..TINY_BATCH {
        let mut idx: Vec<u32> = sample(rng, TINY_VOCAB, 8).into_iter().map(|i| i as u32).collect();
        idx.sort_unstable();
        let c: Vec<f64> = idx.iter().map(|_| rng.random_range(1..=4) as f64).collect();
        let w: Vec<f64> = c.iter().map(|&v| v * rng.random_range(0.5..2.0)).collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let w: Vec<f64> = w.iter().map(|v| v / norm).collect();
        tfidf.push_row(&idx, &w).expect("sorted distinct indices");
        counts.push_row(&idx, &c).expect("sorted distinct indices");
    }
    let targets = supervised.then(|| {
        let mut t = Matrix::zeros(TINY_BATCH, TINY_LABELS);
        for r in 0..TINY_BATCH {
            let a = rng.random_range(0..TINY_LABELS);
            let b = rng.random_range(0..TINY_LABELS);
            if a == b {
                t.set(r, a, 1.0);
            } else {
                t.set(r, a, 0.5);
                t.set(r, b, 0.5);
            }
        }
        t
    });
    Batch { tfidf, counts, targets }
}

/// Finite-difference check of the full loss on a tiny random instance with
/// frozen noise. Runs in 64-bit arithmetic on the same code path used for
/// training. Bernoulli kinds are checked with the straight-through path
/// disabled, i.e. on every continuous path.
pub fn gradcheck_tiny(opts: &GradcheckOptions) -> Result<GradCheckReport, ModelError> {
    let spec = ModelSpec {
        kind: opts.kind,
        bits: TINY_BITS,
        components: TINY_COMPONENTS,
        vocab_size: TINY_VOCAB,
        num_labels: if opts.kind.is_supervised() { TINY_LABELS } else { 0 },
        alpha: opts.alpha,
        hidden: TINY_HIDDEN,
        noise_source: opts.noise_source,
        label_names: Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut params = ModelParams::<f64>::init(spec, &mut rng)?;
    let batch = tiny_batch(&mut rng, opts.kind.is_supervised());
    let noise = Noise::sample(TINY_BATCH, TINY_BITS, &mut rng);
    let eopts = ElboOptions {
        kl_weight: 1.0,
        straight_through: false,
        inject_noise: true,
    };
    params.zero_grads();
    elbo_backward(&mut params, &batch, &noise, &eopts)?;
    if let Some(name) = &opts.corrupt {
        let p = params
            .params_mut()
            .into_iter()
            .find(|p| &p.name == name)
            .ok_or_else(|| ModelError::Config(format!("no tensor named `{name}`")))?;
        p.grad.scale(2.0);
    }
    Ok(finite_difference_check(
        &mut params,
        |m| elbo(m, &batch, &noise, &eopts).map_or(f64::NAN, |t| t.loss),
        opts.epsilon,
        opts.coords_per_tensor,
        opts.seed ^ 0x5eed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_kinds_pass() {
        for kind in [ModelKind::Gmsh, ModelKind::Bmsh, ModelKind::GmshS, ModelKind::BmshS] {
            let r = gradcheck_tiny(&GradcheckOptions {
                kind,
                coords_per_tensor: 30,
                ..Default::default()
            })
            .unwrap();
            assert!(r.max_rel_error() <= 1e-3, "{kind}: {:?}", r.worst());
        }
    }

    #[test]
    fn component_noise_passes() {
        let r = gradcheck_tiny(&GradcheckOptions {
            kind: ModelKind::Bmsh,
            noise_source: NoiseSource::Component,
            coords_per_tensor: 30,
            ..Default::default()
        })
        .unwrap();
        assert!(r.max_rel_error() <= 1e-3, "{:?}", r.worst());
    }

    #[test]
    fn corrupted_gradient_detected() {
        let r = gradcheck_tiny(&GradcheckOptions {
            corrupt: Some("prior.mean".into()),
            coords_per_tensor: 10,
            ..Default::default()
        })
        .unwrap();
        let w = r.worst().unwrap();
        assert_eq!(w.name, "prior.mean");
        assert!((w.max_rel_error - 0.5).abs() < 1e-3);
    }
}
