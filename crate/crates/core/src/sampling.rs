//! Per-epoch generation of n-gram training instances with uniform negatives.
//!
//! Every entity receives the same number of instances per epoch. The random
//! stream for epoch `k` is ChaCha8 seeded with the run seed and switched to
//! stream `k + 1`, so each epoch is reproducible on its own.

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{Corpus, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Window size.
    pub n: usize,
    /// Negatives per instance.
    pub z: usize,
    /// Batch size.
    pub m: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.z == 0 || self.m == 0 {
            return Err(Error::Config(format!(
                "n, z and m must be positive (n = {}, z = {}, m = {})",
                self.n, self.z, self.m
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingInstance {
    pub ngram: Vec<TokenId>,
    pub positive: usize,
    pub negatives: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub instances: Vec<TrainingInstance>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// One epoch's worth of shuffled instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochSample {
    pub instances: Vec<TrainingInstance>,
    /// Per-entity budget used for this epoch.
    pub per_entity: usize,
    /// Entities without any document of at least `n` tokens.
    pub skipped_entities: Vec<usize>,
}

fn eligible_positions(len: usize, n: usize) -> usize {
    (len + 1).saturating_sub(n)
}

/// Per-entity sample budget: `ceil(sum_d max(|d| - n + 1, 0) / |X|)`.
pub fn ngrams_per_entity_per_epoch(corpus: &Corpus, n: usize) -> usize {
    let total: usize = corpus
        .documents()
        .iter()
        .map(|d| eligible_positions(d.tokens.len(), n))
        .sum();
    total.div_ceil(corpus.num_entities())
}

/// Random generator for epoch `epoch` of a run seeded with `seed`.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

/// Draw one epoch of training instances.
///
/// For each entity with at least one eligible window, `B` n-grams are drawn
/// uniformly (with replacement) over all `(document, start)` positions of its
/// documents. Each instance gets `z` negatives drawn uniformly with
/// replacement from all entities; a negative may coincide with the positive.
pub fn sample_epoch<R: Rng>(
    corpus: &Corpus,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<EpochSample> {
    config.validate()?;
    let n = config.n;
    let budget = ngrams_per_entity_per_epoch(corpus, n);
    if budget == 0 {
        return Err(Error::WindowTooLarge { n });
    }
    let num_entities = corpus.num_entities();
    let docs = corpus.documents();

    let mut instances = Vec::with_capacity(budget * num_entities);
    let mut skipped = Vec::new();
    let mut cumulative: Vec<(usize, usize)> = Vec::new();
    for entity in 0..num_entities {
        cumulative.clear();
        let mut total = 0;
        for &d in corpus.entity_documents(entity) {
            let positions = eligible_positions(docs[d].tokens.len(), n);
            if positions > 0 {
                total += positions;
                cumulative.push((total, d));
            }
        }
        if total == 0 {
            skipped.push(entity);
            continue;
        }
        for _ in 0..budget {
            let draw = rng.random_range(0..total);
            let slot = cumulative.partition_point(|&(end, _)| end <= draw);
            let (end, d) = cumulative[slot];
            let start_of_doc = end - eligible_positions(docs[d].tokens.len(), n);
            let offset = draw - start_of_doc;
            let ngram = docs[d].tokens[offset..offset + n].to_vec();
            let negatives = (0..config.z)
                .map(|_| rng.random_range(0..num_entities))
                .collect();
            instances.push(TrainingInstance {
                ngram,
                positive: entity,
                negatives,
            });
        }
    }
    if !skipped.is_empty() {
        warn!(
            "{} entities have no document with at least {n} tokens and contribute no instances",
            skipped.len()
        );
    }
    instances.shuffle(rng);
    Ok(EpochSample {
        instances,
        per_entity: budget,
        skipped_entities: skipped,
    })
}

/// Chunk an already shuffled stream into batches of `m`; the last may be partial.
pub fn make_batches(instances: Vec<TrainingInstance>, m: usize) -> Vec<Batch> {
    assert!(m > 0, "batch size must be positive");
    let mut batches = Vec::with_capacity(instances.len().div_ceil(m));
    let mut iter = instances.into_iter().peekable();
    while iter.peek().is_some() {
        batches.push(Batch {
            instances: iter.by_ref().take(m).collect(),
        });
    }
    batches
}
