use crate::corpus::DocumentSet;
use crate::diffmath::{affine, log_softmax, relu, sigmoid, sparse_affine, Matrix, Real, SparseMatrix};

use super::params::{ModelParams, Prior};
use super::sampling::clamp_logvar;
use super::ModelError;

/// Per-document posterior statistics for one batch.
#[derive(Debug, Clone, PartialEq)]
pub enum LatentBatch<T = f32> {
    Gaussian {
        mu: Matrix<T>,
        /// Clamped to `[-10, 10]`.
        logvar: Matrix<T>,
        beta: Matrix<T>,
    },
    Bernoulli {
        alpha: Matrix<T>,
        /// Effective reconstruction-noise log-variance, clamped.
        noise_logvar: Matrix<T>,
        beta: Matrix<T>,
    },
}

impl<T: Real> LatentBatch<T> {
    pub fn beta(&self) -> &Matrix<T> {
        match self {
            LatentBatch::Gaussian { beta, .. } | LatentBatch::Bernoulli { beta, .. } => beta,
        }
    }

    /// `μ` for Gaussian models, `α` for Bernoulli ones.
    pub fn codes(&self) -> &Matrix<T> {
        match self {
            LatentBatch::Gaussian { mu, .. } => mu,
            LatentBatch::Bernoulli { alpha, .. } => alpha,
        }
    }
}

/// Intermediate activations of the shared encoder trunk and heads.
pub(crate) struct EncoderForward<T> {
    pub a1: Matrix<T>,
    pub h1: Matrix<T>,
    pub a2: Matrix<T>,
    pub h2: Matrix<T>,
    pub latent: Matrix<T>,
    pub spread: Option<Matrix<T>>,
    pub log_beta: Matrix<T>,
}

pub(crate) fn encoder_forward<T: Real>(
    params: &ModelParams<T>,
    x: &SparseMatrix<T>,
) -> Result<EncoderForward<T>, ModelError> {
    let e = &params.encoder;
    if x.cols() != params.spec.vocab_size {
        return Err(ModelError::Config(format!(
            "input has {} columns but the model vocabulary has {} terms",
            x.cols(),
            params.spec.vocab_size
        )));
    }
    let a1 = sparse_affine(x, &e.layer1.weight.value, &e.layer1.bias.value)?;
    let h1 = relu(&a1);
    let a2 = affine(&h1, &e.layer2.weight.value, &e.layer2.bias.value)?;
    let h2 = relu(&a2);
    let latent = affine(&h2, &e.latent.weight.value, &e.latent.bias.value)?;
    let spread = match &e.spread {
        Some(s) => Some(affine(&h2, &s.weight.value, &s.bias.value)?),
        None => None,
    };
    let log_beta = log_softmax(&affine(&h2, &e.component.weight.value, &e.component.bias.value)?);
    let out = EncoderForward {
        a1,
        h1,
        a2,
        h2,
        latent,
        spread,
        log_beta,
    };
    let finite = out.h2.is_finite()
        && out.latent.is_finite()
        && out.spread.as_ref().is_none_or(Matrix::is_finite)
        && out.log_beta.data().iter().all(|v| !v.is_nan() && *v != T::infinity());
    if !finite {
        return Err(ModelError::NonFinite {
            term: "encoder activations",
            value: f64::NAN,
        });
    }
    Ok(out)
}

/// Mixes clamped per-component noise log-variances by the responsibilities.
pub(crate) fn component_noise<T: Real>(beta: &Matrix<T>, noise_logvar: &Matrix<T>) -> Result<Matrix<T>, ModelError> {
    Ok(beta.matmul(&noise_logvar.map(clamp_logvar))?)
}

/// Runs the encoder on a batch of TFIDF rows. No sampling takes place.
pub fn encode<T: Real>(params: &ModelParams<T>, x: &SparseMatrix<T>) -> Result<LatentBatch<T>, ModelError> {
    let f = encoder_forward(params, x)?;
    let beta = f.log_beta.map(|v| v.exp());
    Ok(if params.spec.kind.is_bernoulli() {
        let noise_logvar = match (&f.spread, &params.prior) {
            (Some(s), _) => s.map(clamp_logvar),
            (
                None,
                Prior::Bernoulli {
                    noise_logvar: Some(n), ..
                },
            ) => component_noise(&beta, &n.value)?,
            _ => return Err(ModelError::Config("Bernoulli model without a noise source".into())),
        };
        LatentBatch::Bernoulli {
            alpha: sigmoid(&f.latent),
            noise_logvar,
            beta,
        }
    } else {
        let logvar = f
            .spread
            .as_ref()
            .ok_or_else(|| ModelError::Config("Gaussian model without a log-variance head".into()))?
            .map(clamp_logvar);
        LatentBatch::Gaussian {
            mu: f.latent,
            logvar,
            beta,
        }
    })
}

/// Rows of `docset.tfidf()` selected by `rows` as a sparse batch.
pub(crate) fn tfidf_batch<T: Real>(docset: &DocumentSet, rows: &[usize]) -> Result<SparseMatrix<T>, ModelError> {
    let mut x = SparseMatrix::new(docset.vocab_size());
    for &r in rows {
        let v = &docset.tfidf()[r];
        let vals: Vec<T> = v.values().iter().map(|&f| T::lit(f as f64)).collect();
        x.push_row(v.indices(), &vals)?;
    }
    Ok(x)
}

const CODE_CHUNK: usize = 1000;

/// Deterministic latent representation (`μ` or `α`) of the selected
/// documents, one row per entry of `rows`.
pub fn latent_codes<T: Real>(
    params: &ModelParams<T>,
    docset: &DocumentSet,
    rows: &[usize],
) -> Result<Matrix<T>, ModelError> {
    if docset.vocab_size() != params.spec.vocab_size {
        return Err(ModelError::Config(format!(
            "dataset vocabulary has {} terms but the model expects {}",
            docset.vocab_size(),
            params.spec.vocab_size
        )));
    }
    let m = params.spec.bits;
    let mut data = Vec::with_capacity(rows.len() * m);
    for chunk in rows.chunks(CODE_CHUNK) {
        let x = tfidf_batch(docset, chunk)?;
        let latent = encode(params, &x)?;
        data.extend_from_slice(latent.codes().data());
    }
    Ok(Matrix::from_vec(rows.len(), m, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::Parameterized;
    use crate::models::params::tests::spec;
    use crate::models::ModelKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zeroed(kind: ModelKind) -> ModelParams<f64> {
        let mut p = ModelParams::init(spec(kind), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for t in p.params_mut() {
            t.value.fill(0.0);
        }
        p
    }

    fn batch() -> SparseMatrix<f64> {
        let mut x = SparseMatrix::new(10);
        x.push_row(&[0, 3], &[0.6, 0.8]).unwrap();
        x.push_row(&[0, 3], &[0.6, 0.8]).unwrap();
        x
    }

    #[test]
    fn zero_encoder_is_symmetric() {
        match encode(&zeroed(ModelKind::Gmsh), &batch()).unwrap() {
            LatentBatch::Gaussian { mu, logvar, beta } => {
                assert!(mu.data().iter().all(|&v| v == 0.0));
                assert!(logvar.data().iter().all(|&v| v == 0.0));
                assert!(beta.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-12));
            }
            _ => unreachable!(),
        }
        match encode(&zeroed(ModelKind::Bmsh), &batch()).unwrap() {
            LatentBatch::Bernoulli { alpha, .. } => assert!(alpha.data().iter().all(|&v| v == 0.5)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn identical_rows_identical_outputs() {
        let p = ModelParams::<f64>::init(spec(ModelKind::Gmsh), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let l = encode(&p, &batch()).unwrap();
        assert_eq!(l.codes().row(0), l.codes().row(1));
        for row in l.beta().iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn wrong_width_rejected() {
        let p = zeroed(ModelKind::Gmsh);
        assert!(encode(&p, &SparseMatrix::<f64>::new(7)).is_err());
    }
}
