//! Central finite-difference check of the analytic batch gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::model::{batch_gradients, batch_loss, init_params, Dims, ModelParams};
use crate::sampling::{Batch, TrainingInstance};
use crate::text::TokenId;

/// Relative error with a floor on the denominator so that entries that are
/// zero on both sides compare as equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    diff / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Maximum relative error per parameter family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub word_embeddings: f64,
    pub transform: f64,
    pub bias: f64,
    pub entity_embeddings: f64,
}

impl GradCheckReport {
    pub fn max(&self) -> f64 {
        self.word_embeddings
            .max(self.transform)
            .max(self.bias)
            .max(self.entity_embeddings)
    }
}

fn check_entries<F>(params: &ModelParams, batch: &Batch, lambda: f64, eps: f64, analytic: &[f64], get: F) -> f64
where
    F: Fn(&mut ModelParams) -> &mut [f64],
{
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = get(&mut probe)[i];
        get(&mut probe)[i] = orig + eps;
        let plus = batch_loss(&probe, batch, lambda);
        get(&mut probe)[i] = orig - eps;
        let minus = batch_loss(&probe, batch, lambda);
        get(&mut probe)[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(a, numeric));
    }
    worst
}

/// Compare analytic gradients with central differences at step `eps`.
pub fn gradient_check(params: &ModelParams, batch: &Batch, lambda: f64, eps: f64) -> GradCheckReport {
    let grads = batch_gradients(params, batch, lambda);
    let slice = |a: &ndarray::ArrayBase<ndarray::OwnedRepr<f64>, _>| -> Vec<f64> { a.iter().copied().collect() };
    GradCheckReport {
        word_embeddings: check_entries(params, batch, lambda, eps, &slice(&grads.word_embeddings), |p| {
            p.word_embeddings.as_slice_mut().expect("standard layout")
        }),
        transform: check_entries(params, batch, lambda, eps, &slice(&grads.transform), |p| {
            p.transform.as_slice_mut().expect("standard layout")
        }),
        bias: check_entries(params, batch, lambda, eps, &grads.bias.to_vec(), |p| {
            p.bias.as_slice_mut().expect("standard layout")
        }),
        entity_embeddings: check_entries(params, batch, lambda, eps, &slice(&grads.entity_embeddings), |p| {
            p.entity_embeddings.as_slice_mut().expect("standard layout")
        }),
    }
}

/// A random model and batch for gradient checking.
pub fn random_problem(dims: Dims, n: usize, z: usize, batch_size: usize, seed: u64) -> (ModelParams, Batch) {
    let mut params = init_params(dims, seed).expect("valid dims");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    // non-zero bias so the bias path is exercised away from the origin
    params.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    let instances = (0..batch_size)
        .map(|_| TrainingInstance {
            ngram: (0..n).map(|_| rng.random_range(0..dims.vocab_size) as TokenId).collect(),
            positive: rng.random_range(0..dims.num_entities),
            negatives: (0..z).map(|_| rng.random_range(0..dims.num_entities)).collect(),
        })
        .collect();
    (params, Batch { instances })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let dims = Dims { word_dim: 4, entity_dim: 3, vocab_size: 12, num_entities: 5 };
        for seed in 0..3 {
            for lambda in [0.0, 0.01] {
                let (params, batch) = random_problem(dims, 2, 2, 6, seed);
                let report = gradient_check(&params, &batch, lambda, 1e-5);
                assert!(report.max() < 1e-6, "seed {seed} λ {lambda}: {report:?}");
            }
        }
    }
}
