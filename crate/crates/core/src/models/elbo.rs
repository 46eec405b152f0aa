//! Negative lower bound (plus the optional supervised term) and its explicit
//! backward pass.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::corpus::DocumentSet;
use crate::diffmath::{
    affine, affine_backward, log_softmax, relu, relu_backward, sigmoid, sparse_affine_backward, Matrix, Param, Real,
    SparseMatrix,
};

use super::encode::{component_noise, encoder_forward, tfidf_batch, EncoderForward};
use super::kl::{bernoulli_component_kls, clamp_alpha, gaussian_component_kls, kl_categorical_log, logit};
use super::params::{Classifier, Decoder, ModelParams, ModelSpec, Prior};
use super::sampling::{
    clamp_logvar, inject_noise, inject_noise_backward, logvar_mask, reparam_backward, reparam_gaussian,
    sample_bernoulli_st, st_backward,
};
use super::{ModelError, ALPHA_EPS};

/// Encoder inputs, decoder targets and (supervised kinds) label targets for
/// one mini-batch.
#[derive(Debug, Clone)]
pub struct Batch<T = f32> {
    pub tfidf: SparseMatrix<T>,
    pub counts: SparseMatrix<T>,
    /// `B x L` rows summing to 1.
    pub targets: Option<Matrix<T>>,
}

impl<T: Real> Batch<T> {
    pub fn len(&self) -> usize {
        self.tfidf.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Gathers documents `rows` of `docset`. Supervised specs get a uniform
/// target over each document's labels, in `spec.label_names` order.
pub fn make_batch<T: Real>(docset: &DocumentSet, rows: &[usize], spec: &ModelSpec) -> Result<Batch<T>, ModelError> {
    let tfidf = tfidf_batch(docset, rows)?;
    let mut counts = SparseMatrix::new(docset.vocab_size());
    for &r in rows {
        let v = &docset.counts()[r];
        let vals: Vec<T> = v.values().iter().map(|&f| T::lit(f as f64)).collect();
        counts.push_row(v.indices(), &vals)?;
    }
    let targets = if spec.kind.is_supervised() {
        let mut t = Matrix::zeros(rows.len(), spec.num_labels);
        for (i, &r) in rows.iter().enumerate() {
            let hits: Vec<usize> = docset.labels()[r]
                .iter()
                .filter_map(|l| spec.label_names.iter().position(|n| n == l))
                .collect();
            if hits.is_empty() {
                return Err(ModelError::MissingLabel(docset.ids()[r].clone()));
            }
            let share = T::one() / T::lit(hits.len() as f64);
            for h in hits {
                t.set(i, h, share);
            }
        }
        Some(t)
    } else {
        None
    };
    Ok(Batch { tfidf, counts, targets })
}

/// Exogenous randomness for one batch. Gaussian models read `normal` for the
/// reparameterization; Bernoulli models threshold against `uniform` and use
/// `normal` for the injected reconstruction noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise<T = f32> {
    pub normal: Matrix<T>,
    pub uniform: Matrix<T>,
}

impl<T: Real> Noise<T> {
    pub fn sample(rows: usize, bits: usize, rng: &mut impl Rng) -> Self {
        let normal = (0..rows * bits)
            .map(|_| T::lit(StandardNormal.sample(rng)))
            .collect();
        let uniform = (0..rows * bits).map(|_| T::lit(rng.random::<f64>())).collect();
        Self {
            normal: Matrix::from_vec(rows, bits, normal).expect("sized buffer"),
            uniform: Matrix::from_vec(rows, bits, uniform).expect("sized buffer"),
        }
    }

    /// No Gaussian noise and thresholds at 0.5.
    pub fn neutral(rows: usize, bits: usize) -> Self {
        Self {
            normal: Matrix::zeros(rows, bits),
            uniform: Matrix::filled(rows, bits, T::lit(0.5)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ElboOptions {
    /// Multiplies both KL terms (KL warm-up).
    pub kl_weight: f64,
    /// Pass the straight-through surrogate into the Bernoulli logits. Turned
    /// off for finite-difference checks of the continuous paths.
    pub straight_through: bool,
    /// Add the reconstruction noise for Bernoulli models.
    pub inject_noise: bool,
}

impl Default for ElboOptions {
    fn default() -> Self {
        Self {
            kl_weight: 1.0,
            straight_through: true,
            inject_noise: true,
        }
    }
}

/// Batch means of each loss term. `reconstruction` is the log-likelihood
/// (not negated); `loss = −reconstruction + w·(kl_component + kl_latent) + α·supervised`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ElboTerms {
    pub loss: f64,
    pub reconstruction: f64,
    pub kl_component: f64,
    pub kl_latent: f64,
    pub supervised: f64,
}

/// `Σ_t count(t) · log_softmax(zᵀE + b)[t]` for every row of `z`.
pub fn reconstruction_loglik<T: Real>(
    z: &Matrix<T>,
    counts: &SparseMatrix<T>,
    decoder: &Decoder<T>,
) -> Result<Vec<T>, ModelError> {
    let lp = log_softmax(&affine(z, &decoder.embedding.value, &decoder.bias.value)?);
    Ok(sparse_row_dots(counts, &lp))
}

fn sparse_row_dots<T: Real>(counts: &SparseMatrix<T>, dense: &Matrix<T>) -> Vec<T> {
    (0..counts.rows())
        .map(|b| {
            let (idx, val) = counts.row(b);
            let row = dense.row(b);
            idx.iter().zip(val).map(|(&i, &c)| c * row[i as usize]).sum()
        })
        .collect()
}

struct ClassifierForward<T> {
    pre: Matrix<T>,
    hidden: Matrix<T>,
    log_q: Matrix<T>,
}

fn classifier_forward<T: Real>(c: &Classifier<T>, z: &Matrix<T>) -> Result<ClassifierForward<T>, ModelError> {
    let pre = affine(z, &c.hidden.weight.value, &c.hidden.bias.value)?;
    let hidden = relu(&pre);
    let log_q = log_softmax(&affine(&hidden, &c.output.weight.value, &c.output.bias.value)?);
    Ok(ClassifierForward { pre, hidden, log_q })
}

fn cross_entropy_rows<T: Real>(log_q: &Matrix<T>, targets: &Matrix<T>) -> Vec<T> {
    log_q
        .iter_rows()
        .zip(targets.iter_rows())
        .map(|(lq, y)| {
            -y.iter()
                .zip(lq)
                .map(|(&yv, &l)| if yv == T::zero() { T::zero() } else { yv * l })
                .sum::<T>()
        })
        .collect()
}

/// Mean softmax cross-entropy of `classifier(z)` against soft `targets`.
pub fn supervised_loss<T: Real>(classifier: &Classifier<T>, z: &Matrix<T>, targets: &Matrix<T>) -> Result<T, ModelError> {
    let f = classifier_forward(classifier, z)?;
    f.log_q.ensure_same_shape(targets, "supervised_loss")?;
    Ok(mean(&cross_entropy_rows(&f.log_q, targets)))
}

fn mean<T: Real>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::lit(v.len() as f64)
}

enum LatentCache<T> {
    Gaussian {
        mu: Matrix<T>,
        lv_raw: Matrix<T>,
        lv: Matrix<T>,
        prior_lv: Matrix<T>,
    },
    Bernoulli {
        alpha: Matrix<T>,
        /// Log-variance handed to the noise op: the raw encoder head, or the
        /// β-mixed component values.
        nlv_input: Matrix<T>,
    },
}

struct Cache<T> {
    enc: EncoderForward<T>,
    beta: Matrix<T>,
    log_pi: Vec<T>,
    comp_kl: Matrix<T>,
    kl_cat: Vec<T>,
    kl_z: Vec<T>,
    latent: LatentCache<T>,
    z_dec: Matrix<T>,
    z_cls: Matrix<T>,
    log_probs: Matrix<T>,
    cls: Option<ClassifierForward<T>>,
    terms: ElboTerms,
}

fn check_term(term: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::NonFinite { term, value })
    }
}

fn forward<T: Real>(
    params: &ModelParams<T>,
    batch: &Batch<T>,
    noise: &Noise<T>,
    opts: &ElboOptions,
) -> Result<Cache<T>, ModelError> {
    let spec = &params.spec;
    let b = batch.len();
    if b == 0 {
        return Err(ModelError::Config("empty batch".into()));
    }
    if batch.counts.rows() != b || batch.counts.cols() != spec.vocab_size {
        return Err(ModelError::Config("count rows do not match the TFIDF batch".into()));
    }
    if noise.normal.shape() != (b, spec.bits) || noise.uniform.shape() != (b, spec.bits) {
        return Err(ModelError::Config("noise shape does not match batch x bits".into()));
    }
    let enc = encoder_forward(params, &batch.tfidf)?;
    let beta = enc.log_beta.map(|v| v.exp());
    let mut log_pi = params.prior.pi_logits().value.data().to_vec();
    crate::diffmath::log_softmax_in_place(&mut log_pi);

    let k = spec.components;
    let mut comp_kl = Matrix::zeros(b, k);
    let (latent, z_dec, z_cls) = match &params.prior {
        Prior::Gaussian { mean, logvar, .. } => {
            let mu = enc.latent.clone();
            let lv_raw = enc.spread.clone().expect("Gaussian models have a log-variance head");
            let lv = lv_raw.map(clamp_logvar);
            let prior_lv = logvar.value.map(clamp_logvar);
            for r in 0..b {
                let kls = gaussian_component_kls(mu.row(r), lv.row(r), &mean.value, &prior_lv);
                comp_kl.row_mut(r).copy_from_slice(&kls);
            }
            let z = reparam_gaussian(&mu, &lv, &noise.normal)?;
            (
                LatentCache::Gaussian {
                    mu,
                    lv_raw,
                    lv,
                    prior_lv,
                },
                z.clone(),
                z,
            )
        }
        Prior::Bernoulli {
            gamma_logits,
            noise_logvar,
            ..
        } => {
            let alpha = sigmoid(&enc.latent);
            for r in 0..b {
                let kls = bernoulli_component_kls(alpha.row(r), &gamma_logits.value);
                comp_kl.row_mut(r).copy_from_slice(&kls);
            }
            let z = sample_bernoulli_st(&alpha, &noise.uniform)?;
            let nlv_input = match (&enc.spread, noise_logvar) {
                (Some(s), _) => s.clone(),
                (None, Some(n)) => component_noise(&beta, &n.value)?,
                (None, None) => return Err(ModelError::Config("Bernoulli model without a noise source".into())),
            };
            let z_dec = if opts.inject_noise {
                inject_noise(&z, &nlv_input, &noise.normal)?
            } else {
                z.clone()
            };
            (LatentCache::Bernoulli { alpha, nlv_input }, z_dec, z)
        }
    };

    let kl_cat: Vec<T> = (0..b).map(|r| kl_categorical_log(enc.log_beta.row(r), &log_pi)).collect();
    let kl_z: Vec<T> = (0..b)
        .map(|r| beta.row(r).iter().zip(comp_kl.row(r)).map(|(&bc, &kl)| bc * kl).sum())
        .collect();
    let log_probs = log_softmax(&affine(&z_dec, &params.decoder.embedding.value, &params.decoder.bias.value)?);
    let recon = sparse_row_dots(&batch.counts, &log_probs);

    let (cls, sup) = match (&params.classifier, spec.kind.is_supervised()) {
        (Some(c), true) => {
            let targets = batch
                .targets
                .as_ref()
                .ok_or_else(|| ModelError::Config("supervised model needs label targets".into()))?;
            let f = classifier_forward(c, &z_cls)?;
            f.log_q.ensure_same_shape(targets, "supervised targets")?;
            let ce = mean(&cross_entropy_rows(&f.log_q, targets));
            (Some(f), ce.to_f64().unwrap_or(f64::NAN))
        }
        _ => (None, 0.0),
    };

    let reconstruction = check_term("reconstruction log-likelihood", mean(&recon).to_f64().unwrap_or(f64::NAN))?;
    let kl_component = check_term("component KL", mean(&kl_cat).to_f64().unwrap_or(f64::NAN))?;
    let kl_latent = check_term("latent KL", mean(&kl_z).to_f64().unwrap_or(f64::NAN))?;
    let supervised = check_term("supervised cross-entropy", sup)?;
    let alpha = if spec.kind.is_supervised() { spec.alpha } else { 0.0 };
    let loss = check_term(
        "loss",
        -reconstruction + opts.kl_weight * (kl_component + kl_latent) + alpha * supervised,
    )?;
    Ok(Cache {
        enc,
        beta,
        log_pi,
        comp_kl,
        kl_cat,
        kl_z,
        latent,
        z_dec,
        z_cls,
        log_probs,
        cls,
        terms: ElboTerms {
            loss,
            reconstruction,
            kl_component,
            kl_latent,
            supervised,
        },
    })
}

/// Loss terms without touching gradients.
pub fn elbo<T: Real>(
    params: &ModelParams<T>,
    batch: &Batch<T>,
    noise: &Noise<T>,
    opts: &ElboOptions,
) -> Result<ElboTerms, ModelError> {
    forward(params, batch, noise, opts).map(|c| c.terms)
}

/// `β · x` that treats `0 · ±inf` as 0.
#[inline]
fn weighted<T: Real>(beta: T, x: T) -> T {
    if beta == T::zero() {
        T::zero()
    } else {
        beta * x
    }
}

fn accumulate<T: Real>(p: &mut Param<T>, g: &Matrix<T>) -> Result<(), ModelError> {
    p.accumulate(g).map_err(ModelError::from)
}

/// Forward pass plus gradients of the batch-mean loss, added to every
/// parameter's `grad`.
pub fn elbo_backward<T: Real>(
    params: &mut ModelParams<T>,
    batch: &Batch<T>,
    noise: &Noise<T>,
    opts: &ElboOptions,
) -> Result<ElboTerms, ModelError> {
    let cache = forward(params, batch, noise, opts)?;
    let b = batch.len();
    let (m, k) = (params.spec.bits, params.spec.components);
    let s = T::one() / T::lit(b as f64);
    let w = T::lit(opts.kl_weight);
    let ws = w * s;
    let half = T::lit(0.5);

    // Decoder: d/dlogits of −Σ count·logp is N·softmax − count.
    let mut dlogits = cache.log_probs.map(|v| v.exp());
    for r in 0..b {
        let (idx, val) = batch.counts.row(r);
        let n: T = val.iter().copied().sum();
        let row = dlogits.row_mut(r);
        row.iter_mut().for_each(|p| *p = *p * n * s);
        for (&i, &c) in idx.iter().zip(val) {
            row[i as usize] = row[i as usize] - c * s;
        }
    }
    let g = affine_backward(&cache.z_dec, &params.decoder.embedding.value, &dlogits)?;
    accumulate(&mut params.decoder.embedding, &g.weight)?;
    accumulate(&mut params.decoder.bias, &g.bias)?;
    let dz_dec = g.input;

    // Classifier.
    let dz_cls = match (&cache.cls, params.classifier.as_mut(), batch.targets.as_ref()) {
        (Some(f), Some(c), Some(y)) => {
            let a = T::lit(params.spec.alpha) * s;
            let mut dout = f.log_q.map(|v| v.exp());
            dout.data_mut()
                .iter_mut()
                .zip(y.data())
                .for_each(|(d, &t)| *d = (*d - t) * a);
            let go = affine_backward(&f.hidden, &c.output.weight.value, &dout)?;
            let dpre = relu_backward(&f.pre, &go.input)?;
            let gh = affine_backward(&cache.z_cls, &c.hidden.weight.value, &dpre)?;
            accumulate(&mut c.output.weight, &go.weight)?;
            accumulate(&mut c.output.bias, &go.bias)?;
            accumulate(&mut c.hidden.weight, &gh.weight)?;
            accumulate(&mut c.hidden.bias, &gh.bias)?;
            Some(gh.input)
        }
        _ => None,
    };

    // Responsibilities and mixture weights.
    let mut dcomp = Matrix::zeros(b, k);
    let mut dpi = vec![T::zero(); k];
    let pi: Vec<T> = cache.log_pi.iter().map(|v| v.exp()).collect();
    for r in 0..b {
        let lb = cache.enc.log_beta.row(r);
        let beta = cache.beta.row(r);
        let kls = cache.comp_kl.row(r);
        for c in 0..k {
            let cat = weighted(beta[c], lb[c] - cache.log_pi[c] - cache.kl_cat[r]);
            let lat = beta[c] * (kls[c] - cache.kl_z[r]);
            dcomp.set(r, c, ws * (cat + lat));
            dpi[c] = dpi[c] + ws * (pi[c] - beta[c]);
        }
    }

    let (dlatent, dspread) = match (&cache.latent, &mut params.prior) {
        (
            LatentCache::Gaussian {
                mu,
                lv_raw,
                lv,
                prior_lv,
            },
            Prior::Gaussian {
                pi_logits,
                mean,
                logvar,
            },
        ) => {
            let mut dz = dz_dec;
            if let Some(d) = &dz_cls {
                dz.add_assign(d)?;
            }
            let (mut dmu, mut dlv) = reparam_backward(lv_raw, &noise.normal, &dz)?;
            let mut dmean = Matrix::zeros(k, m);
            let mut dplv = Matrix::zeros(k, m);
            for r in 0..b {
                let beta = cache.beta.row(r);
                for i in 0..m {
                    let q_var = lv.get(r, i).exp();
                    let mut gmu = T::zero();
                    let mut glv = T::zero();
                    for (c, &bc) in beta.iter().enumerate() {
                        let inv = (-prior_lv.get(c, i)).exp();
                        let d = mu.get(r, i) - mean.value.get(c, i);
                        gmu = gmu + bc * d * inv;
                        glv = glv + bc * half * (q_var * inv - T::one());
                        let wb = ws * bc;
                        dmean.set(c, i, dmean.get(c, i) - wb * d * inv);
                        let gp = wb * half * (T::one() - (q_var + d * d) * inv) * logvar_mask(logvar.value.get(c, i));
                        dplv.set(c, i, dplv.get(c, i) + gp);
                    }
                    dmu.set(r, i, dmu.get(r, i) + ws * gmu);
                    dlv.set(r, i, dlv.get(r, i) + ws * glv * logvar_mask(lv_raw.get(r, i)));
                }
            }
            accumulate(pi_logits, &Matrix::row_vector(dpi))?;
            accumulate(mean, &dmean)?;
            accumulate(logvar, &dplv)?;
            (dmu, Some(dlv))
        }
        (
            LatentCache::Bernoulli { alpha, nlv_input },
            Prior::Bernoulli {
                pi_logits,
                gamma_logits,
                noise_logvar,
            },
        ) => {
            let dnlv = if opts.inject_noise {
                Some(inject_noise_backward(nlv_input, &noise.normal, &dz_dec)?)
            } else {
                None
            };
            let mut dz_hard = dz_dec;
            if let Some(d) = &dz_cls {
                dz_hard.add_assign(d)?;
            }
            let mut dalpha = Matrix::zeros(b, m);
            let mut dgamma = Matrix::zeros(k, m);
            let eps = T::lit(ALPHA_EPS);
            for r in 0..b {
                let beta = cache.beta.row(r);
                for i in 0..m {
                    let a_raw = alpha.get(r, i);
                    let a = clamp_alpha(a_raw);
                    let la = logit(a);
                    let inside = a_raw >= eps && a_raw <= T::one() - eps;
                    let mut ga = T::zero();
                    for (c, &bc) in beta.iter().enumerate() {
                        let l = gamma_logits.value.get(c, i);
                        ga = ga + bc * (la - l);
                        let gamma = crate::diffmath::sigmoid_scalar(l);
                        dgamma.set(c, i, dgamma.get(c, i) + ws * bc * (gamma - a));
                    }
                    if inside {
                        dalpha.set(r, i, ws * ga);
                    }
                }
            }
            let mut dg = crate::diffmath::sigmoid_backward(alpha, &dalpha)?;
            if opts.straight_through {
                dg.add_assign(&st_backward(alpha, &dz_hard)?)?;
            }
            let mut dspread = None;
            if let Some(dnlv) = dnlv {
                match noise_logvar {
                    None => dspread = Some(dnlv),
                    Some(nv) => {
                        // nlv = β · clamp(ν): gradient reaches ν and, through
                        // the softmax, the responsibility logits.
                        let clamped = nv.value.map(clamp_logvar);
                        let mut dnv = cache.beta.transpose_matmul(&dnlv)?;
                        dnv.data_mut()
                            .iter_mut()
                            .zip(nv.value.data())
                            .for_each(|(g, &v)| *g = *g * logvar_mask(v));
                        accumulate(nv, &dnv)?;
                        let dbeta = dnlv.matmul_transpose_rhs(&clamped)?;
                        for r in 0..b {
                            let beta = cache.beta.row(r);
                            let db = dbeta.row(r);
                            let dot: T = beta.iter().zip(db).map(|(&x, &y)| x * y).sum();
                            for c in 0..k {
                                dcomp.set(r, c, dcomp.get(r, c) + beta[c] * (db[c] - dot));
                            }
                        }
                    }
                }
            }
            accumulate(pi_logits, &Matrix::row_vector(dpi))?;
            accumulate(gamma_logits, &dgamma)?;
            (dg, dspread)
        }
        _ => return Err(ModelError::Config("prior does not match model kind".into())),
    };

    // Heads into the shared trunk.
    let e = &mut params.encoder;
    let gl = affine_backward(&cache.enc.h2, &e.latent.weight.value, &dlatent)?;
    let gc = affine_backward(&cache.enc.h2, &e.component.weight.value, &dcomp)?;
    let mut dh2 = gl.input;
    dh2.add_assign(&gc.input)?;
    accumulate(&mut e.latent.weight, &gl.weight)?;
    accumulate(&mut e.latent.bias, &gl.bias)?;
    accumulate(&mut e.component.weight, &gc.weight)?;
    accumulate(&mut e.component.bias, &gc.bias)?;
    if let (Some(spread), Some(d)) = (e.spread.as_mut(), dspread.as_ref()) {
        let gs = affine_backward(&cache.enc.h2, &spread.weight.value, d)?;
        dh2.add_assign(&gs.input)?;
        accumulate(&mut spread.weight, &gs.weight)?;
        accumulate(&mut spread.bias, &gs.bias)?;
    }
    let da2 = relu_backward(&cache.enc.a2, &dh2)?;
    let g2 = affine_backward(&cache.enc.h1, &e.layer2.weight.value, &da2)?;
    accumulate(&mut e.layer2.weight, &g2.weight)?;
    accumulate(&mut e.layer2.bias, &g2.bias)?;
    let da1 = relu_backward(&cache.enc.a1, &g2.input)?;
    let (gw1, gb1) = sparse_affine_backward(&batch.tfidf, e.layer1.weight.value.shape(), &da1)?;
    accumulate(&mut e.layer1.weight, &gw1)?;
    accumulate(&mut e.layer1.bias, &gb1)?;
    Ok(cache.terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::Parameterized;
    use crate::models::params::tests::spec;
    use crate::models::ModelKind;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_batch(v: usize, labels: Option<usize>) -> Batch<f64> {
        let mut tfidf = SparseMatrix::new(v);
        let mut counts = SparseMatrix::new(v);
        tfidf.push_row(&[0, 2], &[0.6, 0.8]).unwrap();
        counts.push_row(&[0, 2], &[1.0, 3.0]).unwrap();
        tfidf.push_row(&[1, 4, 7], &[0.5, 0.5, 0.7]).unwrap();
        counts.push_row(&[1, 4, 7], &[2.0, 1.0, 1.0]).unwrap();
        let targets = labels.map(|l| {
            let mut t = Matrix::zeros(2, l);
            t.set(0, 0, 1.0);
            t.set(1, 0, 0.5);
            t.set(1, l - 1, 0.5);
            t
        });
        Batch { tfidf, counts, targets }
    }

    #[test]
    fn reconstruction_hand_value() {
        let dec = Decoder {
            embedding: Param::new("e", Matrix::<f64>::zeros(3, 2)),
            bias: Param::new("b", Matrix::zeros(1, 2)),
        };
        let mut counts = SparseMatrix::new(2);
        counts.push_row(&[0, 1], &[1.0, 1.0]).unwrap();
        let z = Matrix::from_rows(&[vec![0.3, -1.0, 2.0]]).unwrap();
        let r = reconstruction_loglik(&z, &counts, &dec).unwrap();
        assert_relative_eq!(r[0], -2.0 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn reconstruction_linear_and_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ModelParams::<f64>::init(spec(ModelKind::Gmsh), &mut rng).unwrap();
        let z = Matrix::from_rows(&[vec![0.1, 0.2, -0.3, 0.4]]).unwrap();
        let mut c1 = SparseMatrix::new(10);
        c1.push_row(&[1, 5], &[2.0, 1.0]).unwrap();
        let mut c3 = SparseMatrix::new(10);
        c3.push_row(&[1, 5], &[6.0, 3.0]).unwrap();
        let a = reconstruction_loglik(&z, &c1, &p.decoder).unwrap()[0];
        let b = reconstruction_loglik(&z, &c3, &p.decoder).unwrap()[0];
        assert_relative_eq!(3.0 * a, b, epsilon = 1e-12);
        let mut shifted = p.decoder.clone();
        shifted.bias.value = shifted.bias.value.map(|v| v + 7.5);
        assert_relative_eq!(reconstruction_loglik(&z, &c1, &shifted).unwrap()[0], a, epsilon = 1e-9);
    }

    #[test]
    fn uniform_classifier_gives_ln_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ModelParams::<f64>::init(spec(ModelKind::GmshS), &mut rng).unwrap();
        let c = p.classifier.as_mut().unwrap();
        c.output.weight.value.fill(0.0);
        let z = Matrix::from_rows(&[vec![1.0, 0.0, 0.5, 2.0]]).unwrap();
        let y = Matrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert_relative_eq!(supervised_loss(c, &z, &y).unwrap(), 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn confident_classifier_has_small_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ModelParams::<f64>::init(spec(ModelKind::GmshS), &mut rng).unwrap();
        let c = p.classifier.as_mut().unwrap();
        c.output.weight.value.fill(0.0);
        c.output.bias.value = Matrix::row_vector(vec![40.0, 0.0]);
        let z = Matrix::from_rows(&[vec![1.0, 0.0, 0.5, 2.0]]).unwrap();
        let y = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(supervised_loss(c, &z, &y).unwrap() < 1e-12);
    }

    #[test]
    fn terms_compose_into_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [ModelKind::Gmsh, ModelKind::Bmsh, ModelKind::GmshS, ModelKind::BmshS] {
            let mut s = spec(kind);
            s.alpha = 0.7;
            let p = ModelParams::<f64>::init(s, &mut rng).unwrap();
            let batch = toy_batch(10, kind.is_supervised().then_some(2));
            let noise = Noise::sample(2, 4, &mut rng);
            let opts = ElboOptions {
                kl_weight: 0.3,
                ..ElboOptions::default()
            };
            let t = elbo(&p, &batch, &noise, &opts).unwrap();
            let a = if kind.is_supervised() { 0.7 } else { 0.0 };
            assert_relative_eq!(
                t.loss,
                -t.reconstruction + 0.3 * (t.kl_component + t.kl_latent) + a * t.supervised,
                epsilon = 1e-12
            );
            assert!(t.kl_component >= 0.0 && t.kl_latent >= 0.0 && t.reconstruction < 0.0);
        }
    }

    #[test]
    fn supervised_alpha_zero_matches_unsupervised_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut s = spec(ModelKind::GmshS);
        s.alpha = 0.0;
        let sup = ModelParams::<f64>::init(s, &mut rng).unwrap();
        let mut plain = sup.clone();
        plain.spec.kind = ModelKind::Gmsh;
        plain.classifier = None;
        let noise = Noise::sample(2, 4, &mut rng);
        let a = elbo(&sup, &toy_batch(10, Some(2)), &noise, &ElboOptions::default()).unwrap();
        let b = elbo(&plain, &toy_batch(10, None), &noise, &ElboOptions::default()).unwrap();
        assert_eq!(a.loss, b.loss);
    }

    #[test]
    fn missing_targets_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = ModelParams::<f64>::init(spec(ModelKind::BmshS), &mut rng).unwrap();
        let r = elbo(&p, &toy_batch(10, None), &Noise::neutral(2, 4), &ElboOptions::default());
        assert!(matches!(r, Err(ModelError::Config(_))));
    }

    #[test]
    fn non_finite_term_is_named() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut p = ModelParams::<f64>::init(spec(ModelKind::Gmsh), &mut rng).unwrap();
        p.decoder.bias.value.set(0, 0, f64::NAN);
        let r = elbo(&p, &toy_batch(10, None), &Noise::neutral(2, 4), &ElboOptions::default());
        match r {
            Err(ModelError::NonFinite { term, .. }) => assert!(term.contains("reconstruction")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn backward_accumulates_every_tensor() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = spec(ModelKind::BmshS);
        s.noise_source = super::super::NoiseSource::Component;
        let mut p = ModelParams::<f64>::init(s, &mut rng).unwrap();
        let noise = Noise::sample(2, 4, &mut rng);
        elbo_backward(&mut p, &toy_batch(10, Some(2)), &noise, &ElboOptions::default()).unwrap();
        for t in p.params() {
            assert!(t.grad.is_finite(), "{}", t.name);
            assert!(t.grad.sum_sq() > 0.0, "{} has no gradient", t.name);
        }
    }
}
