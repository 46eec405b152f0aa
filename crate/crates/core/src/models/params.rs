use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::{ModelError, ModelKind, NoiseSource};
use crate::diffmath::{Matrix, Param, Parameterized, Real};

/// Everything needed to rebuild the parameter layout of a model. Stored as
/// the checkpoint manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub bits: usize,
    pub components: usize,
    pub vocab_size: usize,
    pub num_labels: usize,
    pub alpha: f64,
    pub hidden: usize,
    #[serde(default)]
    pub noise_source: NoiseSource,
    /// Classifier output order for supervised kinds.
    #[serde(default)]
    pub label_names: Vec<String>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.bits == 0 {
            return bad("bits must be at least 1");
        }
        if self.components == 0 {
            return bad("component count K must be at least 1");
        }
        if self.vocab_size < 2 {
            return bad("vocabulary must have at least 2 terms");
        }
        if self.hidden == 0 {
            return bad("hidden width must be positive");
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad("alpha must be finite and non-negative");
        }
        if self.kind.is_supervised() {
            if self.num_labels == 0 {
                return bad("supervised models need at least one label");
            }
            if !self.label_names.is_empty() && self.label_names.len() != self.num_labels {
                return bad("label name count differs from num_labels");
            }
        }
        Ok(())
    }

    fn uses_encoder_spread(&self) -> bool {
        !self.kind.is_bernoulli() || self.noise_source == NoiseSource::Encoder
    }

    /// Name and shape of every tensor, in the order of
    /// [`Parameterized::params`].
    pub fn layout(&self) -> Vec<(String, (usize, usize))> {
        let (v, h, m, k) = (self.vocab_size, self.hidden, self.bits, self.components);
        let mut out = Vec::new();
        let affine = |out: &mut Vec<_>, name: &str, i: usize, o: usize| {
            out.push((format!("{name}.weight"), (i, o)));
            out.push((format!("{name}.bias"), (1, o)));
        };
        affine(&mut out, "encoder.layer1", v, h);
        affine(&mut out, "encoder.layer2", h, h);
        affine(&mut out, "encoder.latent", h, m);
        if self.uses_encoder_spread() {
            affine(&mut out, "encoder.spread", h, m);
        }
        affine(&mut out, "encoder.component", h, k);
        out.push(("decoder.embedding".into(), (m, v)));
        out.push(("decoder.bias".into(), (1, v)));
        if self.kind.is_supervised() {
            affine(&mut out, "classifier.hidden", m, h);
            affine(&mut out, "classifier.output", h, self.num_labels);
        }
        out.push(("prior.pi_logits".into(), (1, k)));
        if self.kind.is_bernoulli() {
            out.push(("prior.gamma_logits".into(), (k, m)));
            if self.noise_source == NoiseSource::Component {
                out.push(("prior.noise_logvar".into(), (k, m)));
            }
        } else {
            out.push(("prior.mean".into(), (k, m)));
            out.push(("prior.logvar".into(), (k, m)));
        }
        out
    }
}

/// Weight and bias of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine<T = f32> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Real> Affine<T> {
    /// Glorot-uniform weights, zero bias.
    fn glorot(name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        let data = (0..fan_in * fan_out).map(|_| T::lit(dist.sample(rng))).collect();
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                Matrix::from_vec(fan_in, fan_out, data).expect("sized buffer"),
            ),
            bias: Param::new(format!("{name}.bias"), Matrix::zeros(1, fan_out)),
        }
    }

    fn params(&self) -> [&Param<T>; 2] {
        [&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    fn cast<U: Real>(&self) -> Affine<U> {
        Affine {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T = f32> {
    pub layer1: Affine<T>,
    pub layer2: Affine<T>,
    /// Posterior mean (Gaussian) or Bernoulli logits.
    pub latent: Affine<T>,
    /// Posterior log-variance (Gaussian) or noise log-variance (Bernoulli,
    /// encoder noise source only).
    pub spread: Option<Affine<T>>,
    /// Component responsibility logits.
    pub component: Affine<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder<T = f32> {
    /// `bits x vocab` embedding.
    pub embedding: Param<T>,
    pub bias: Param<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prior<T = f32> {
    Gaussian {
        pi_logits: Param<T>,
        mean: Param<T>,
        logvar: Param<T>,
    },
    Bernoulli {
        pi_logits: Param<T>,
        gamma_logits: Param<T>,
        /// Per-component reconstruction noise, component noise source only.
        noise_logvar: Option<Param<T>>,
    },
}

impl<T: Real> Prior<T> {
    pub fn pi_logits(&self) -> &Param<T> {
        match self {
            Prior::Gaussian { pi_logits, .. } | Prior::Bernoulli { pi_logits, .. } => pi_logits,
        }
    }

    fn params(&self) -> Vec<&Param<T>> {
        match self {
            Prior::Gaussian {
                pi_logits,
                mean,
                logvar,
            } => vec![pi_logits, mean, logvar],
            Prior::Bernoulli {
                pi_logits,
                gamma_logits,
                noise_logvar,
            } => {
                let mut v = vec![pi_logits, gamma_logits];
                v.extend(noise_logvar.as_ref());
                v
            }
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Prior::Gaussian {
                pi_logits,
                mean,
                logvar,
            } => vec![pi_logits, mean, logvar],
            Prior::Bernoulli {
                pi_logits,
                gamma_logits,
                noise_logvar,
            } => {
                let mut v = vec![pi_logits, gamma_logits];
                v.extend(noise_logvar.as_mut());
                v
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier<T = f32> {
    pub hidden: Affine<T>,
    pub output: Affine<T>,
}

/// All trainable tensors of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    pub spec: ModelSpec,
    pub encoder: Encoder<T>,
    pub decoder: Decoder<T>,
    pub prior: Prior<T>,
    pub classifier: Option<Classifier<T>>,
}

fn normal_matrix<T: Real>(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Matrix<T> {
    let dist = Normal::new(0.0, std).expect("positive std");
    let data = (0..rows * cols).map(|_| T::lit(dist.sample(rng))).collect();
    Matrix::from_vec(rows, cols, data).expect("sized buffer")
}

impl<T: Real> ModelParams<T> {
    /// Fresh parameters: Glorot-uniform dense layers with zero biases, uniform
    /// mixture weights, prior means `N(0, 0.1²)`, unit prior variances and
    /// Bernoulli prior logits `N(0, 0.5²)`.
    pub fn init(spec: ModelSpec, rng: &mut impl Rng) -> Result<Self, ModelError> {
        spec.validate()?;
        let (v, h, m, k) = (spec.vocab_size, spec.hidden, spec.bits, spec.components);
        let encoder = Encoder {
            layer1: Affine::glorot("encoder.layer1", v, h, rng),
            layer2: Affine::glorot("encoder.layer2", h, h, rng),
            latent: Affine::glorot("encoder.latent", h, m, rng),
            spread: spec
                .uses_encoder_spread()
                .then(|| Affine::glorot("encoder.spread", h, m, rng)),
            component: Affine::glorot("encoder.component", h, k, rng),
        };
        let dec = Affine::<T>::glorot("decoder", m, v, rng);
        let decoder = Decoder {
            embedding: Param::new("decoder.embedding", dec.weight.value),
            bias: Param::new("decoder.bias", dec.bias.value),
        };
        let pi_logits = Param::new("prior.pi_logits", Matrix::zeros(1, k));
        let prior = if spec.kind.is_bernoulli() {
            Prior::Bernoulli {
                pi_logits,
                gamma_logits: Param::new("prior.gamma_logits", normal_matrix(k, m, 0.5, rng)),
                noise_logvar: (spec.noise_source == NoiseSource::Component)
                    .then(|| Param::new("prior.noise_logvar", Matrix::zeros(k, m))),
            }
        } else {
            Prior::Gaussian {
                pi_logits,
                mean: Param::new("prior.mean", normal_matrix(k, m, 0.1, rng)),
                logvar: Param::new("prior.logvar", Matrix::zeros(k, m)),
            }
        };
        let classifier = spec.kind.is_supervised().then(|| Classifier {
            hidden: Affine::glorot("classifier.hidden", m, h, rng),
            output: Affine::glorot("classifier.output", h, spec.num_labels, rng),
        });
        Ok(Self {
            spec,
            encoder,
            decoder,
            prior,
            classifier,
        })
    }

    fn network_params(&self) -> Vec<&Param<T>> {
        let e = &self.encoder;
        let mut v: Vec<&Param<T>> = Vec::new();
        v.extend(e.layer1.params());
        v.extend(e.layer2.params());
        v.extend(e.latent.params());
        if let Some(s) = &e.spread {
            v.extend(s.params());
        }
        v.extend(e.component.params());
        v.push(&self.decoder.embedding);
        v.push(&self.decoder.bias);
        if let Some(c) = &self.classifier {
            v.extend(c.hidden.params());
            v.extend(c.output.params());
        }
        v
    }

    /// Tensors the optimizer should update; prior tensors are left out when
    /// `freeze_prior` is set.
    pub fn trainable_mut(&mut self, freeze_prior: bool) -> Vec<&mut Param<T>> {
        let Self {
            encoder: e,
            decoder,
            prior,
            classifier,
            ..
        } = self;
        let mut v: Vec<&mut Param<T>> = Vec::new();
        v.extend(e.layer1.params_mut());
        v.extend(e.layer2.params_mut());
        v.extend(e.latent.params_mut());
        if let Some(s) = &mut e.spread {
            v.extend(s.params_mut());
        }
        v.extend(e.component.params_mut());
        v.push(&mut decoder.embedding);
        v.push(&mut decoder.bias);
        if let Some(c) = classifier {
            v.extend(c.hidden.params_mut());
            v.extend(c.output.params_mut());
        }
        if !freeze_prior {
            v.extend(prior.params_mut());
        }
        v
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|p| p.value.data().len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let e = &self.encoder;
        ModelParams {
            spec: self.spec.clone(),
            encoder: Encoder {
                layer1: e.layer1.cast(),
                layer2: e.layer2.cast(),
                latent: e.latent.cast(),
                spread: e.spread.as_ref().map(Affine::cast),
                component: e.component.cast(),
            },
            decoder: Decoder {
                embedding: self.decoder.embedding.cast(),
                bias: self.decoder.bias.cast(),
            },
            prior: match &self.prior {
                Prior::Gaussian {
                    pi_logits,
                    mean,
                    logvar,
                } => Prior::Gaussian {
                    pi_logits: pi_logits.cast(),
                    mean: mean.cast(),
                    logvar: logvar.cast(),
                },
                Prior::Bernoulli {
                    pi_logits,
                    gamma_logits,
                    noise_logvar,
                } => Prior::Bernoulli {
                    pi_logits: pi_logits.cast(),
                    gamma_logits: gamma_logits.cast(),
                    noise_logvar: noise_logvar.as_ref().map(Param::cast),
                },
            },
            classifier: self.classifier.as_ref().map(|c| Classifier {
                hidden: c.hidden.cast(),
                output: c.output.cast(),
            }),
        }
    }

    /// Zero means and log-variances, or γ logits, of every component. Mixture
    /// weights are left alone.
    pub fn reset_prior_to_standard(&mut self) {
        match &mut self.prior {
            Prior::Gaussian { mean, logvar, .. } => {
                mean.value.fill(T::zero());
                logvar.value.fill(T::zero());
            }
            Prior::Bernoulli { gamma_logits, .. } => gamma_logits.value.fill(T::zero()),
        }
    }

    /// Relabels mixture components: new component `i` is old component
    /// `perm[i]`. Applied to the responsibility head and every prior tensor.
    pub fn permute_components(&mut self, perm: &[usize]) -> Result<(), ModelError> {
        let k = self.spec.components;
        let mut check = perm.to_vec();
        check.sort_unstable();
        if check != (0..k).collect::<Vec<_>>() {
            return Err(ModelError::Config("not a permutation of the components".into()));
        }
        let permute_cols = |m: &mut Matrix<T>| {
            let old = m.clone();
            for r in 0..m.rows() {
                for (i, &src) in perm.iter().enumerate() {
                    m.set(r, i, old.get(r, src));
                }
            }
        };
        let permute_rows = |m: &mut Matrix<T>| {
            let old = m.clone();
            for (i, &src) in perm.iter().enumerate() {
                m.row_mut(i).copy_from_slice(old.row(src));
            }
        };
        permute_cols(&mut self.encoder.component.weight.value);
        permute_cols(&mut self.encoder.component.bias.value);
        match &mut self.prior {
            Prior::Gaussian {
                pi_logits,
                mean,
                logvar,
            } => {
                permute_cols(&mut pi_logits.value);
                permute_rows(&mut mean.value);
                permute_rows(&mut logvar.value);
            }
            Prior::Bernoulli {
                pi_logits,
                gamma_logits,
                noise_logvar,
            } => {
                permute_cols(&mut pi_logits.value);
                permute_rows(&mut gamma_logits.value);
                if let Some(n) = noise_logvar {
                    permute_rows(&mut n.value);
                }
            }
        }
        Ok(())
    }
}

impl<T: Real> Parameterized<T> for ModelParams<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.network_params();
        v.extend(self.prior.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.trainable_mut(false)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn spec(kind: ModelKind) -> ModelSpec {
        ModelSpec {
            kind,
            bits: 4,
            components: 3,
            vocab_size: 10,
            num_labels: if kind.is_supervised() { 2 } else { 0 },
            alpha: 1.0,
            hidden: 6,
            noise_source: NoiseSource::Encoder,
            label_names: Vec::new(),
        }
    }

    #[test]
    fn layouts_per_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = ModelParams::<f32>::init(spec(ModelKind::Gmsh), &mut rng).unwrap();
        let names: Vec<_> = g.params().iter().map(|p| p.name.clone()).collect();
        assert!(names.contains(&"prior.mean".to_string()));
        assert!(!names.iter().any(|n| n.starts_with("classifier")));
        assert_eq!(g.decoder.embedding.value.shape(), (4, 10));

        let b = ModelParams::<f32>::init(spec(ModelKind::BmshS), &mut rng).unwrap();
        let names: Vec<_> = b.params().iter().map(|p| p.name.clone()).collect();
        assert!(names.contains(&"prior.gamma_logits".to_string()));
        assert!(names.contains(&"classifier.output.weight".to_string()));

        let mut comp = spec(ModelKind::Bmsh);
        comp.noise_source = NoiseSource::Component;
        let c = ModelParams::<f32>::init(comp, &mut rng).unwrap();
        assert!(c.encoder.spread.is_none());
        assert!(c.params().iter().any(|p| p.name == "prior.noise_logvar"));
    }

    #[test]
    fn frozen_prior_excluded_from_trainables() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = ModelParams::<f32>::init(spec(ModelKind::Gmsh), &mut rng).unwrap();
        let all = g.trainable_mut(false).len();
        let net = g.trainable_mut(true).len();
        assert_eq!(all - net, 3);
    }

    #[test]
    fn invalid_specs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = spec(ModelKind::Gmsh);
        s.components = 0;
        assert!(ModelParams::<f32>::init(s, &mut rng).is_err());
        let mut s = spec(ModelKind::Gmsh);
        s.bits = 0;
        assert!(ModelParams::<f32>::init(s, &mut rng).is_err());
        let mut s = spec(ModelKind::GmshS);
        s.num_labels = 0;
        assert!(ModelParams::<f32>::init(s, &mut rng).is_err());
    }

    #[test]
    fn layout_matches_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for kind in [ModelKind::Gmsh, ModelKind::Bmsh, ModelKind::GmshS, ModelKind::BmshS] {
            for source in [NoiseSource::Encoder, NoiseSource::Component] {
                let mut s = spec(kind);
                s.noise_source = source;
                let p = ModelParams::<f32>::init(s.clone(), &mut rng).unwrap();
                let actual: Vec<_> = p.params().iter().map(|t| (t.name.clone(), t.value.shape())).collect();
                assert_eq!(s.layout(), actual, "{kind} {source:?}");
            }
        }
    }

    #[test]
    fn deterministic_init() {
        let a = ModelParams::<f32>::init(spec(ModelKind::Bmsh), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = ModelParams::<f32>::init(spec(ModelKind::Bmsh), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }
}
