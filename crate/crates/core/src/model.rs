//! The latent semantic entity model.
//!
//! A word sequence `s` is projected into entity space by averaging the
//! embeddings of its words, applying an affine map and squashing with tanh:
//!
//! ```text
//! f(s) = tanh(W · mean_{w in s} W_v[:, w] + b)
//! ```
//!
//! Entity `i` is represented by row `i` of `W_e`. Training maximizes
//! `log σ(e⁺·f) + Σ_k log(1 − σ(e⁻_k·f))` over n-grams drawn from each
//! entity's documents, with `z` negatives per n-gram drawn uniformly from all
//! entities, and an L2 penalty on `W_v`, `W` and `W_e` (the bias is not
//! penalized).

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{Batch, TrainingInstance};
use crate::text::TokenId;

/// Model dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Word embedding size `e_V`.
    pub word_dim: usize,
    /// Entity space size `e_E`.
    pub entity_dim: usize,
    pub vocab_size: usize,
    pub num_entities: usize,
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        if self.word_dim == 0 || self.entity_dim == 0 || self.vocab_size == 0 || self.num_entities == 0 {
            return Err(Error::Config(format!("all model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.word_dim * self.vocab_size
            + self.entity_dim * self.word_dim
            + self.entity_dim
            + self.num_entities * self.entity_dim
    }
}

/// Learnable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `e_V × |V|`; column `i` embeds word `i`.
    pub word_embeddings: Array2<f64>,
    /// `e_E × e_V` word-to-entity map.
    pub transform: Array2<f64>,
    /// Length `e_E`.
    pub bias: Array1<f64>,
    /// `|X| × e_E`; row `i` is entity `i`.
    pub entity_embeddings: Array2<f64>,
}

fn glorot_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}

/// Initialize parameters: matrices uniform in `±sqrt(6 / (rows + cols))`, bias zero.
pub fn init_params(dims: Dims, seed: u64) -> Result<ModelParams> {
    dims.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let word_embeddings = glorot_uniform(dims.word_dim, dims.vocab_size, &mut rng);
    let transform = glorot_uniform(dims.entity_dim, dims.word_dim, &mut rng);
    let entity_embeddings = glorot_uniform(dims.num_entities, dims.entity_dim, &mut rng);
    Ok(ModelParams {
        word_embeddings,
        transform,
        bias: Array1::zeros(dims.entity_dim),
        entity_embeddings,
    })
}

impl ModelParams {
    pub fn dims(&self) -> Dims {
        Dims {
            word_dim: self.word_embeddings.nrows(),
            entity_dim: self.transform.nrows(),
            vocab_size: self.word_embeddings.ncols(),
            num_entities: self.entity_embeddings.nrows(),
        }
    }

    /// Check shape consistency and finiteness.
    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        dims.validate()?;
        let check = |expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { expected, actual })
            }
        };
        check(dims.word_dim, self.transform.ncols())?;
        check(dims.entity_dim, self.bias.len())?;
        check(dims.entity_dim, self.entity_embeddings.ncols())?;
        let finite = self.word_embeddings.iter().all(|v| v.is_finite())
            && self.transform.iter().all(|v| v.is_finite())
            && self.bias.iter().all(|v| v.is_finite())
            && self.entity_embeddings.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Model("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn entity(&self, i: usize) -> ArrayView1<'_, f64> {
        self.entity_embeddings.row(i)
    }

    /// Mean of the embedding columns of `tokens`.
    pub fn average_embedding(&self, tokens: &[TokenId]) -> Result<Array1<f64>> {
        if tokens.is_empty() {
            return Err(Error::EmptyProjection);
        }
        let size = self.word_embeddings.ncols();
        let mut h = Array1::zeros(self.word_embeddings.nrows());
        for &t in tokens {
            if t as usize >= size {
                return Err(Error::TokenOutOfRange { id: t as usize, size });
            }
            h += &self.word_embeddings.column(t as usize);
        }
        h /= tokens.len() as f64;
        Ok(h)
    }

    /// Squared Frobenius norms of the penalized matrices.
    pub fn penalty_norm(&self) -> f64 {
        let sq = |a: &Array2<f64>| a.iter().map(|v| v * v).sum::<f64>();
        sq(&self.word_embeddings) + sq(&self.entity_embeddings) + sq(&self.transform)
    }
}

/// Project a word sequence into entity space.
pub fn project(params: &ModelParams, tokens: &[TokenId]) -> Result<Array1<f64>> {
    let h = params.average_embedding(tokens)?;
    let mut a = params.transform.dot(&h);
    a += &params.bias;
    a.mapv_inplace(f64::tanh);
    Ok(a)
}

/// Logistic function, clamped to the open interval (0, 1).
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// `log σ(x)` without forming `σ(x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `P(S | e, f) = σ(e · f)`.
pub fn similarity_prob(entity: ArrayView1<'_, f64>, projected: ArrayView1<'_, f64>) -> f64 {
    sigmoid(entity.dot(&projected))
}

/// Log-probability of one instance under the negative-sampling objective.
pub fn instance_log_prob(params: &ModelParams, instance: &TrainingInstance) -> f64 {
    let f = project(params, &instance.ngram).expect("training n-grams are nonempty and in range");
    let mut log_p = log_sigmoid(params.entity(instance.positive).dot(&f));
    for &neg in &instance.negatives {
        log_p += log_sigmoid(-params.entity(neg).dot(&f));
    }
    log_p
}

/// Batch loss: mean negative log-probability plus `λ/(2m)` times the squared
/// norms of `W_v`, `W_e` and `W`, with `m` the actual batch size.
pub fn batch_loss(params: &ModelParams, batch: &Batch, lambda: f64) -> f64 {
    let m = batch.len() as f64;
    let log_likelihood: f64 = batch.instances.iter().map(|i| instance_log_prob(params, i)).sum();
    -log_likelihood / m + lambda / (2.0 * m) * params.penalty_norm()
}

/// One gradient array per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub word_embeddings: Array2<f64>,
    pub transform: Array2<f64>,
    pub bias: Array1<f64>,
    pub entity_embeddings: Array2<f64>,
}

impl GradientSet {
    pub fn zeros(dims: Dims) -> Self {
        GradientSet {
            word_embeddings: Array2::zeros((dims.word_dim, dims.vocab_size)),
            transform: Array2::zeros((dims.entity_dim, dims.word_dim)),
            bias: Array1::zeros(dims.entity_dim),
            entity_embeddings: Array2::zeros((dims.num_entities, dims.entity_dim)),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.word_embeddings.iter().all(|v| v.is_finite())
            && self.transform.iter().all(|v| v.is_finite())
            && self.bias.iter().all(|v| v.is_finite())
            && self.entity_embeddings.iter().all(|v| v.is_finite())
    }
}

/// Loss and exact gradients for a batch.
///
/// Forward and backward passes are batched as matrix products over the
/// instances, accumulated in instance order so results are reproducible.
pub fn batch_loss_and_gradients(params: &ModelParams, batch: &Batch, lambda: f64) -> (f64, GradientSet) {
    assert!(!batch.is_empty(), "empty batch");
    let dims = params.dims();
    let m = batch.len();
    let inv_m = 1.0 / m as f64;

    // averaged word embeddings, one column per instance
    let mut hidden = Array2::<f64>::zeros((dims.word_dim, m));
    for (k, inst) in batch.instances.iter().enumerate() {
        let mut col = hidden.column_mut(k);
        for &t in &inst.ngram {
            col += &params.word_embeddings.column(t as usize);
        }
        col /= inst.ngram.len() as f64;
    }
    let mut projected = params.transform.dot(&hidden);
    projected += &params.bias.view().insert_axis(Axis(1));
    projected.mapv_inplace(f64::tanh);

    let mut grads = GradientSet::zeros(dims);
    // dL/d(pre-activation), one column per instance
    let mut upstream = Array2::<f64>::zeros((dims.entity_dim, m));
    let mut log_likelihood = 0.0;
    for (k, inst) in batch.instances.iter().enumerate() {
        let f = projected.column(k);
        let mut grad_f = Array1::<f64>::zeros(dims.entity_dim);

        let mut visit = |entity: usize, positive: bool| {
            let e = params.entity_embeddings.row(entity);
            let s = e.dot(&f);
            // d(-log σ(s))/ds = -(1 - σ(s)); d(-log(1 - σ(s)))/ds = σ(s)
            let coef = if positive {
                log_likelihood += log_sigmoid(s);
                -sigmoid(-s) * inv_m
            } else {
                log_likelihood += log_sigmoid(-s);
                sigmoid(s) * inv_m
            };
            grad_f.scaled_add(coef, &e);
            grads.entity_embeddings.row_mut(entity).scaled_add(coef, &f);
        };
        visit(inst.positive, true);
        for &neg in &inst.negatives {
            visit(neg, false);
        }

        // sech² = 1 - tanh²
        Zip::from(upstream.column_mut(k))
            .and(&grad_f)
            .and(f)
            .for_each(|u, &g, &y| *u = g * (1.0 - y * y));
    }

    grads.bias = upstream.sum_axis(Axis(1));
    grads.transform = upstream.dot(&hidden.t());
    let grad_hidden = params.transform.t().dot(&upstream);
    for (k, inst) in batch.instances.iter().enumerate() {
        let scale = 1.0 / inst.ngram.len() as f64;
        let g = grad_hidden.column(k);
        for &t in &inst.ngram {
            grads.word_embeddings.column_mut(t as usize).scaled_add(scale, &g);
        }
    }

    if lambda != 0.0 {
        let decay = lambda * inv_m;
        grads.word_embeddings.scaled_add(decay, &params.word_embeddings);
        grads.transform.scaled_add(decay, &params.transform);
        grads.entity_embeddings.scaled_add(decay, &params.entity_embeddings);
    }
    let loss = -log_likelihood * inv_m + lambda * inv_m / 2.0 * params.penalty_norm();
    (loss, grads)
}

pub fn batch_gradients(params: &ModelParams, batch: &Batch, lambda: f64) -> GradientSet {
    batch_loss_and_gradients(params, batch, lambda).1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: GradientSet,
    pub second_moment: GradientSet,
}

impl AdamState {
    pub fn new(dims: Dims, config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            first_moment: GradientSet::zeros(dims),
            second_moment: GradientSet::zeros(dims),
        }
    }
}

/// Apply one bias-corrected Adam update in place.
pub fn adam_step(params: &mut ModelParams, grads: &GradientSet, state: &mut AdamState) {
    state.step += 1;
    let AdamConfig { alpha, beta1, beta2, epsilon } = state.config;
    let t = state.step as i32;
    let correct1 = 1.0 - beta1.powi(t);
    let correct2 = 1.0 - beta2.powi(t);

    macro_rules! update {
        ($field:ident) => {
            Zip::from(&mut params.$field)
                .and(&grads.$field)
                .and(&mut state.first_moment.$field)
                .and(&mut state.second_moment.$field)
                .for_each(|theta, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / correct1;
                    let v_hat = *v / correct2;
                    *theta -= alpha * m_hat / (v_hat.sqrt() + epsilon);
                })
        };
    }
    update!(word_embeddings);
    update!(transform);
    update!(bias);
    update!(entity_embeddings);
}
