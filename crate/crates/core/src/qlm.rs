//! Query-likelihood baseline over entity profiles with Jelinek-Mercer
//! smoothing.
//!
//! Each entity is described by the concatenation of its documents. A query
//! `q` is scored by `Σ_t log((1 − λ) P_ml(t | x) + λ P_ml(t | C))`, summed in
//! the log domain. Terms that never occur in the corpus are dropped.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{ndcg, Qrels};
use crate::retrieval::RankedList;
use crate::text::{Corpus, TokenId};

#[derive(Debug, Clone, PartialEq)]
pub struct EntityLanguageModel {
    entity_counts: Vec<HashMap<TokenId, u64>>,
    entity_totals: Vec<u64>,
    corpus_counts: HashMap<TokenId, u64>,
    corpus_total: u64,
    lambda: f64,
}

/// Count profile and corpus term frequencies.
pub fn estimate(corpus: &Corpus, lambda: f64) -> Result<EntityLanguageModel> {
    check_lambda(lambda)?;
    let mut entity_counts = vec![HashMap::new(); corpus.num_entities()];
    let mut entity_totals = vec![0u64; corpus.num_entities()];
    let mut corpus_counts = HashMap::new();
    let mut corpus_total = 0u64;
    for doc in corpus.documents() {
        for &t in &doc.tokens {
            *entity_counts[doc.entity].entry(t).or_insert(0) += 1;
            *corpus_counts.entry(t).or_insert(0) += 1;
        }
        entity_totals[doc.entity] += doc.tokens.len() as u64;
        corpus_total += doc.tokens.len() as u64;
    }
    Ok(EntityLanguageModel {
        entity_counts,
        entity_totals,
        corpus_counts,
        corpus_total,
        lambda,
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::Config(format!("smoothing weight must lie in [0, 1], got {lambda}")))
    }
}

impl EntityLanguageModel {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn set_lambda(&mut self, lambda: f64) -> Result<()> {
        check_lambda(lambda)?;
        self.lambda = lambda;
        Ok(())
    }

    pub fn num_entities(&self) -> usize {
        self.entity_counts.len()
    }

    /// Maximum-likelihood `P(t | x)`; zero for an empty profile.
    pub fn entity_prob(&self, entity: usize, term: TokenId) -> f64 {
        let total = self.entity_totals[entity];
        if total == 0 {
            return 0.0;
        }
        self.entity_counts[entity].get(&term).copied().unwrap_or(0) as f64 / total as f64
    }

    /// Maximum-likelihood `P(t | C)`.
    pub fn corpus_prob(&self, term: TokenId) -> f64 {
        if self.corpus_total == 0 {
            return 0.0;
        }
        self.corpus_counts.get(&term).copied().unwrap_or(0) as f64 / self.corpus_total as f64
    }

    pub fn smoothed_prob(&self, entity: usize, term: TokenId, lambda: f64) -> f64 {
        (1.0 - lambda) * self.entity_prob(entity, term) + lambda * self.corpus_prob(term)
    }

    /// Query terms that occur somewhere in the corpus.
    pub fn scorable_terms(&self, query: &[TokenId]) -> Vec<TokenId> {
        query
            .iter()
            .copied()
            .filter(|t| self.corpus_counts.contains_key(t))
            .collect()
    }

    /// Log query likelihood at the model's smoothing weight.
    pub fn score(&self, entity: usize, query: &[TokenId]) -> f64 {
        self.score_with(entity, query, self.lambda)
    }

    pub fn score_with(&self, entity: usize, query: &[TokenId], lambda: f64) -> f64 {
        query
            .iter()
            .filter(|t| self.corpus_counts.contains_key(t))
            .map(|&t| self.smoothed_prob(entity, t, lambda).ln())
            .sum()
    }

    pub fn rank(&self, entity_ids: &[String], topic_id: &str, query: &[TokenId]) -> Result<RankedList> {
        self.rank_with(entity_ids, topic_id, query, self.lambda)
    }

    /// Rank every entity; fails when no query term occurs in the corpus.
    pub fn rank_with(&self, entity_ids: &[String], topic_id: &str, query: &[TokenId], lambda: f64) -> Result<RankedList> {
        let terms = self.scorable_terms(query);
        if terms.is_empty() {
            return Err(Error::AllOutOfVocabulary(topic_id.to_string()));
        }
        if entity_ids.len() != self.num_entities() {
            return Err(Error::DimensionMismatch {
                expected: self.num_entities(),
                actual: entity_ids.len(),
            });
        }
        let entries = entity_ids
            .iter()
            .enumerate()
            .map(|(e, id)| (id.clone(), self.score_with(e, &terms, lambda)))
            .collect();
        Ok(RankedList::from_scores(topic_id, entries))
    }
}

/// The smoothing grid `0.00, 0.05, ..., 1.00`.
pub fn lambda_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// `(λ, mean NDCG)` per grid point.
    pub grid: Vec<(f64, f64)>,
    pub best_lambda: f64,
    pub best_ndcg: f64,
}

/// Pick the smoothing weight with the highest mean validation NDCG; ties go
/// to the smaller weight. Topics without relevant entities are ignored and
/// topics with no scorable term count as zero.
pub fn sweep_lambda(
    model: &EntityLanguageModel,
    entity_ids: &[String],
    topics: &[(String, Vec<TokenId>)],
    qrels: &Qrels,
    cutoff: usize,
) -> Result<SweepResult> {
    let judged: Vec<&(String, Vec<TokenId>)> = topics.iter().filter(|(t, _)| qrels.num_relevant(t) > 0).collect();
    if judged.is_empty() {
        return Err(Error::Config("no validation topic has a relevant entity".into()));
    }
    let mut grid = Vec::with_capacity(21);
    for lambda in lambda_grid() {
        let mut total = 0.0;
        for (topic, query) in &judged {
            total += match model.rank_with(entity_ids, topic, query, lambda) {
                Ok(list) => ndcg(&list, qrels, cutoff).unwrap_or(0.0),
                Err(Error::AllOutOfVocabulary(_)) => 0.0,
                Err(e) => return Err(e),
            };
        }
        grid.push((lambda, total / judged.len() as f64));
    }
    let (best_lambda, best_ndcg) = grid
        .iter()
        .copied()
        .fold((0.0, f64::NEG_INFINITY), |best, (l, v)| if v > best.1 { (l, v) } else { best });
    Ok(SweepResult {
        grid,
        best_lambda,
        best_ndcg,
    })
}
