//! Training loop with validation-based epoch selection.

use std::io::Write;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{ndcg, Qrels, DEFAULT_CUTOFF};
use crate::model::{
    adam_step, batch_loss_and_gradients, init_params, project, AdamConfig, AdamState, Dims, ModelParams,
};
use crate::retrieval::CosineIndex;
use crate::sampling::{epoch_rng, make_batches, sample_epoch, SamplerConfig};
use crate::text::{Corpus, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationPolicy {
    /// Keep the epoch with the highest validation NDCG (earliest on ties).
    BestNdcg,
    /// Keep the final epoch.
    LastEpoch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F64,
    F32,
}

/// Training hyperparameters, read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Word embedding size.
    pub e_v: usize,
    /// Entity space size.
    pub e_e: usize,
    /// Window size.
    pub n: usize,
    /// Negatives per instance.
    pub z: usize,
    /// Batch size.
    pub m: usize,
    /// Weight decay.
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    pub precision: Precision,
    pub validation: ValidationPolicy,
    pub validation_cutoff: usize,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            e_v: 300,
            e_e: 256,
            n: 4,
            z: 10,
            m: 4096,
            lambda: 0.01,
            epochs: 15,
            seed: 1,
            precision: Precision::F64,
            validation: ValidationPolicy::BestNdcg,
            validation_cutoff: DEFAULT_CUTOFF,
            alpha: adam.alpha,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler().validate()?;
        if self.e_v == 0 || self.e_e == 0 {
            return Err(Error::Config("embedding sizes must be positive".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.validation_cutoff == 0 {
            return Err(Error::Config("validation cutoff must be positive".into()));
        }
        if self.precision == Precision::F32 {
            return Err(Error::Config("32-bit training is not available; use precision = \"f64\"".into()));
        }
        Ok(())
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            n: self.n,
            z: self.z,
            m: self.m,
            seed: self.seed,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            alpha: self.alpha,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_batch_loss: f64,
    pub validation_ndcg: Option<f64>,
    pub wall_seconds: f64,
}

/// Write the per-epoch log as CSV.
pub fn write_epoch_log<W: Write>(mut out: W, log: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(out, "epoch,mean_batch_loss,validation_ndcg,wall_seconds")?;
    for r in log {
        let ndcg = r.validation_ndcg.map(|v| format!("{v:.6}")).unwrap_or_default();
        writeln!(out, "{},{:.9},{},{:.3}", r.epoch, r.mean_batch_loss, ndcg, r.wall_seconds)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
    pub instances_per_epoch: usize,
    pub skipped_entities: Vec<usize>,
}

/// Mean validation NDCG over topics with relevant entities; topics whose
/// query is empty after vocabulary filtering score zero.
pub fn validation_ndcg(
    params: &ModelParams,
    entity_ids: &[String],
    topics: &[(String, Vec<TokenId>)],
    qrels: &Qrels,
    cutoff: usize,
) -> Result<Option<f64>> {
    let index = CosineIndex::new(params.entity_embeddings.view(), entity_ids)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (topic, query) in topics {
        if qrels.num_relevant(topic) == 0 {
            continue;
        }
        count += 1;
        if query.is_empty() {
            continue;
        }
        let f = project(params, query)?;
        let list = index.rank(topic, f.view())?;
        total += ndcg(&list, qrels, cutoff).unwrap_or(0.0);
    }
    Ok((count > 0).then(|| total / count as f64))
}

/// Train a model on `corpus`.
///
/// Each epoch draws a fresh sample, shuffles it into batches and applies one
/// Adam step per batch. With a nonempty validation set and the best-NDCG
/// policy, the parameters of the best epoch are returned; otherwise those of
/// the last epoch.
pub fn train(
    corpus: &Corpus,
    vocab_size: usize,
    validation: &[(String, Vec<TokenId>)],
    qrels: &Qrels,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let dims = Dims {
        word_dim: config.e_v,
        entity_dim: config.e_e,
        vocab_size,
        num_entities: corpus.num_entities(),
    };
    let mut params = init_params(dims, config.seed)?;
    let mut adam = AdamState::new(dims, config.adam());
    let sampler = config.sampler();

    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut instances_per_epoch = 0;
    let mut skipped_entities = Vec::new();

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let sample = sample_epoch(corpus, &sampler, &mut epoch_rng(config.seed, epoch))?;
        instances_per_epoch = sample.instances.len();
        skipped_entities = sample.skipped_entities;
        let batches = make_batches(sample.instances, config.m);
        let mut loss_sum = 0.0;
        for batch in &batches {
            let (loss, grads) = batch_loss_and_gradients(&params, batch, config.lambda);
            loss_sum += loss;
            adam_step(&mut params, &grads, &mut adam);
        }
        let mean_batch_loss = loss_sum / batches.len() as f64;
        if !mean_batch_loss.is_finite() {
            return Err(Error::Model(format!("loss diverged at epoch {}", epoch + 1)));
        }

        let validation_ndcg = if config.validation == ValidationPolicy::BestNdcg {
            validation_ndcg(&params, corpus.entities(), validation, qrels, config.validation_cutoff)?
        } else {
            None
        };
        if let Some(score) = validation_ndcg {
            if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                best = Some((score, epoch + 1, params.clone()));
            }
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            mean_batch_loss,
            validation_ndcg,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {}: loss {:.6}, validation NDCG {}, {} instances, {:.1}s",
            record.epoch,
            record.mean_batch_loss,
            record.validation_ndcg.map_or("-".to_string(), |v| format!("{v:.4}")),
            instances_per_epoch,
            record.wall_seconds
        );
        log.push(record);
    }

    let (params, best_epoch) = match best {
        Some((_, epoch, p)) => (p, epoch),
        None => (params, config.epochs),
    };
    Ok(TrainOutcome {
        params,
        best_epoch,
        log,
        instances_per_epoch,
        skipped_entities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_hyperparameters() {
        let c = TrainConfig::default();
        assert_eq!((c.e_v, c.z, c.m, c.epochs), (300, 10, 4096, 15));
        assert_eq!(c.lambda, 0.01);
        assert_eq!((c.alpha, c.beta1, c.beta2), (0.001, 0.9, 0.999));
    }

    #[test]
    fn toml_roundtrip_and_validation() {
        let c = TrainConfig::from_toml("e_e = 16\nn = 2\nvalidation = \"last-epoch\"\n").unwrap();
        assert_eq!(c.e_e, 16);
        assert_eq!(c.e_v, 300);
        assert_eq!(c.validation, ValidationPolicy::LastEpoch);
        assert_eq!(TrainConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert!(TrainConfig::from_toml("z = 0").is_err());
        assert!(TrainConfig::from_toml("lambda = -1.0").is_err());
        assert!(TrainConfig::from_toml("bogus = 1").is_err());
        assert!(TrainConfig::from_toml("precision = \"f32\"").is_err());
    }
}
