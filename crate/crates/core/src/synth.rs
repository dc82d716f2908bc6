//! Seeded synthetic benchmarks for smoke tests and property checks.
//!
//! Words are made of letters only and never collide with stopwords, so they
//! pass through the tokenizer unchanged.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::Qrels;
use crate::ltr::QiAttributes;
use crate::model::ModelParams;
use crate::text::{Corpus, RawDocument, Vocabulary};

/// `tag` followed by `index` in base 26 (at least three letters).
pub fn synthetic_word(tag: &str, index: usize) -> String {
    let mut letters = Vec::new();
    let mut i = index;
    loop {
        letters.push(b'a' + (i % 26) as u8);
        i /= 26;
        if i == 0 && letters.len() >= 3 {
            break;
        }
    }
    letters.reverse();
    format!("{tag}{}", String::from_utf8(letters).expect("ascii"))
}

fn entity_id(i: usize) -> String {
    format!("e{i:04}")
}

/// Documents, textual topics and judgments.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBenchmark {
    pub documents: Vec<RawDocument>,
    pub topics: Vec<(String, String)>,
    pub qrels: Qrels,
}

impl SyntheticBenchmark {
    /// Topics with exactly one relevant entity.
    pub fn single_relevant_topics(&self) -> Vec<(String, String)> {
        self.topics.iter().filter(|(t, _)| self.qrels.num_relevant(t) == 1).cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparableConfig {
    pub num_entities: usize,
    pub words_per_entity: usize,
    pub docs_per_entity: usize,
    pub doc_length: usize,
    /// Words per topic query.
    pub query_length: usize,
    /// Topics whose relevant set is a pair of entities.
    pub pair_topics: usize,
    pub seed: u64,
}

impl Default for SeparableConfig {
    fn default() -> Self {
        SeparableConfig {
            num_entities: 8,
            words_per_entity: 20,
            docs_per_entity: 10,
            doc_length: 40,
            query_length: 3,
            pair_topics: 4,
            seed: 7,
        }
    }
}

/// Entities with disjoint vocabularies. Topic `s{i}` asks for entity `i`
/// with words of its vocabulary; pair topic `m{k}` mixes the vocabularies of
/// entities `2k` and `2k + 1` and judges both relevant.
pub fn separable_benchmark(config: &SeparableConfig) -> Result<SyntheticBenchmark> {
    let SeparableConfig { num_entities, words_per_entity, docs_per_entity, doc_length, query_length, pair_topics, seed } = *config;
    if num_entities == 0 || words_per_entity == 0 || docs_per_entity == 0 || doc_length == 0 {
        return Err(Error::Config("separable benchmark sizes must be positive".into()));
    }
    if query_length > words_per_entity || 2 * pair_topics > num_entities {
        return Err(Error::Config("query length or pair topics too large".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = |e: usize| (0..words_per_entity).map(move |w| synthetic_word("sep", e * words_per_entity + w));
    let mut documents = Vec::new();
    for e in 0..num_entities {
        let vocab: Vec<String> = words(e).collect();
        for d in 0..docs_per_entity {
            let text: Vec<&str> = (0..doc_length).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect();
            documents.push(RawDocument {
                doc_id: format!("{}-d{d}", entity_id(e)),
                entity_id: entity_id(e),
                text: text.join(" "),
            });
        }
    }
    let mut topics = Vec::new();
    let mut qrels = Qrels::new();
    for e in 0..num_entities {
        let mut vocab: Vec<String> = words(e).collect();
        vocab.shuffle(&mut rng);
        let id = format!("s{e}");
        topics.push((id.clone(), vocab[..query_length].join(" ")));
        for other in 0..num_entities {
            qrels.insert(id.clone(), entity_id(other), other == e);
        }
    }
    for k in 0..pair_topics {
        let mut query = Vec::new();
        for e in [2 * k, 2 * k + 1] {
            let mut vocab: Vec<String> = words(e).collect();
            vocab.shuffle(&mut rng);
            query.extend(vocab.into_iter().take(query_length.div_ceil(2).max(1)));
        }
        let id = format!("m{k}");
        topics.push((id.clone(), query.join(" ")));
        for other in 0..num_entities {
            qrels.insert(id.clone(), entity_id(other), other / 2 == k);
        }
    }
    Ok(SyntheticBenchmark { documents, topics, qrels })
}

/// Benchmark for feature fusion: half of the topics can only be solved
/// lexically and half only semantically.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionBenchmark {
    pub benchmark: SyntheticBenchmark,
    pub lexical_topics: Vec<String>,
    pub semantic_topics: Vec<String>,
    /// Random attributes carrying no relevance signal.
    pub qi_attributes: Vec<QiAttributes>,
    /// Random related-product graphs, one per graph kind.
    pub graphs: [Option<Vec<(String, String)>>; 4],
    /// Topic index of every entity.
    entity_topic: Vec<usize>,
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Must be even; the first half is lexical.
    pub num_topics: usize,
    pub relevant_per_topic: usize,
    pub docs_per_entity: usize,
    pub doc_length: usize,
    pub filler_words: usize,
    pub seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            num_topics: 20,
            relevant_per_topic: 5,
            docs_per_entity: 4,
            doc_length: 30,
            filler_words: 400,
            seed: 11,
        }
    }
}

/// Build the fusion benchmark.
///
/// Every entity has the same profile length. Lexical query words occur only
/// in the relevant entities' documents. Semantic query words occur exactly
/// once in every entity's profile, so the query likelihood cannot tell the
/// entities apart; their embeddings instead point at the relevant cluster
/// (see [`FusionBenchmark::lse_params`]).
pub fn fusion_benchmark(config: &FusionConfig) -> Result<FusionBenchmark> {
    let FusionConfig { num_topics, relevant_per_topic, docs_per_entity, doc_length, filler_words, seed } = *config;
    if num_topics < 2 || num_topics % 2 != 0 || relevant_per_topic == 0 || docs_per_entity < 2 || filler_words == 0 {
        return Err(Error::Config("fusion benchmark needs an even topic count and two documents per entity".into()));
    }
    const QUERY_WORDS: usize = 2;
    if doc_length < QUERY_WORDS * num_topics / 2 {
        return Err(Error::Config("documents too short for the semantic word block".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_entities = num_topics * relevant_per_topic;
    let mut entity_topic: Vec<usize> = (0..num_entities).map(|e| e % num_topics).collect();
    entity_topic.shuffle(&mut rng);

    let lexical = num_topics / 2;
    let query_words = |t: usize| -> Vec<String> {
        let tag = if t < lexical { "lex" } else { "sem" };
        (0..QUERY_WORDS).map(|k| synthetic_word(tag, t * QUERY_WORDS + k)).collect()
    };
    let semantic_block: Vec<String> = (lexical..num_topics).flat_map(query_words).collect();

    let mut documents = Vec::new();
    for e in 0..num_entities {
        let t = entity_topic[e];
        for d in 0..docs_per_entity {
            let mut words: Vec<String> = Vec::with_capacity(doc_length);
            if d == 0 {
                words.extend(semantic_block.iter().cloned());
            } else if t < lexical {
                words.extend(query_words(t));
            }
            while words.len() < doc_length {
                words.push(synthetic_word("fil", rng.random_range(0..filler_words)));
            }
            words.shuffle(&mut rng);
            documents.push(RawDocument {
                doc_id: format!("{}-d{d}", entity_id(e)),
                entity_id: entity_id(e),
                text: words.join(" "),
            });
        }
    }
    let mut topics = Vec::new();
    let mut qrels = Qrels::new();
    let mut lexical_topics = Vec::new();
    let mut semantic_topics = Vec::new();
    for t in 0..num_topics {
        let id = format!("{}{t}", if t < lexical { "lex" } else { "sem" });
        topics.push((id.clone(), query_words(t).join(" ")));
        for e in 0..num_entities {
            qrels.insert(id.clone(), entity_id(e), entity_topic[e] == t);
        }
        if t < lexical { lexical_topics.push(id) } else { semantic_topics.push(id) }
    }

    let qi_attributes = (0..num_entities)
        .map(|e| QiAttributes {
            entity_id: entity_id(e),
            price: Some((rng.random_range(100..10_000) as f64) / 100.0),
            sales_rank: Some(rng.random_range(1..100_000)),
            description_length: Some(rng.random_range(10..500)),
        })
        .collect();
    let mut graph = || -> Option<Vec<(String, String)>> {
        Some(
            (0..2 * num_entities)
                .map(|_| (entity_id(rng.random_range(0..num_entities)), entity_id(rng.random_range(0..num_entities))))
                .collect(),
        )
    };
    let graphs = [graph(), graph(), graph(), graph()];

    Ok(FusionBenchmark {
        benchmark: SyntheticBenchmark { documents, topics, qrels },
        lexical_topics,
        semantic_topics,
        qi_attributes,
        graphs,
        entity_topic,
        seed,
    })
}

fn random_unit<R: Rng>(dim: usize, rng: &mut R) -> Array1<f64> {
    loop {
        let v: Array1<f64> = Array1::from_shape_simple_fn(dim, || rng.random_range(-1.0..=1.0));
        let norm = v.dot(&v).sqrt();
        if norm > 1e-3 {
            return v / norm;
        }
    }
}

impl FusionBenchmark {
    /// Hand-built latent model: `W` is the identity and `b` zero, semantic
    /// query words embed along their topic's direction and the relevant
    /// entities of a semantic topic cluster around it. Every other word and
    /// entity gets an unrelated random direction.
    pub fn lse_params(&self, vocab: &Vocabulary, corpus: &Corpus, dim: usize) -> Result<ModelParams> {
        if dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed);
        let num_topics = self.lexical_topics.len() + self.semantic_topics.len();
        let lexical = self.lexical_topics.len();
        let directions: Vec<Array1<f64>> = (0..num_topics).map(|_| random_unit(dim, &mut rng)).collect();

        let mut word_embeddings = Array2::zeros((dim, vocab.len()));
        for (id, token) in vocab.tokens().enumerate() {
            let column = match token.strip_prefix("sem") {
                Some(_) => {
                    let t = self
                        .benchmark
                        .topics
                        .iter()
                        .position(|(_, q)| q.split(' ').any(|w| w == token))
                        .ok_or_else(|| Error::Config(format!("semantic word {token} belongs to no topic")))?;
                    &directions[t] * 2.0
                }
                None => random_unit(dim, &mut rng) * 0.5,
            };
            word_embeddings.column_mut(id).assign(&column);
        }
        let mut entity_embeddings = Array2::zeros((corpus.num_entities(), dim));
        for (row, id) in corpus.entities().iter().enumerate() {
            let e: usize = id[1..].parse().map_err(|_| Error::Config(format!("unexpected entity id {id}")))?;
            let t = self.entity_topic[e];
            let v = if t >= lexical {
                &directions[t] + &(random_unit(dim, &mut rng) * 0.3)
            } else {
                random_unit(dim, &mut rng)
            };
            entity_embeddings.row_mut(row).assign(&v);
        }
        Ok(ModelParams {
            word_embeddings,
            transform: Array2::eye(dim),
            bias: Array1::zeros(dim),
            entity_embeddings,
        })
    }
}

/// A corpus of `num_documents` documents spread round-robin over
/// `num_entities` entities, with words drawn from a Zipf-like distribution
/// over `vocabulary` synthetic words. Document lengths vary uniformly in
/// `min_length..=max_length`.
pub fn scaling_corpus(
    num_entities: usize,
    num_documents: usize,
    vocabulary: usize,
    min_length: usize,
    max_length: usize,
    seed: u64,
) -> Result<Vec<RawDocument>> {
    if num_entities == 0 || num_documents < num_entities || vocabulary == 0 || min_length > max_length {
        return Err(Error::Config("invalid scaling corpus sizes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cumulative: Vec<f64> = (1..=vocabulary)
        .scan(0.0, |acc, r| {
            *acc += 1.0 / r as f64;
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().expect("nonempty");
    let words: Vec<String> = (0..vocabulary).map(|i| synthetic_word("w", i)).collect();
    Ok((0..num_documents)
        .map(|d| {
            let len = rng.random_range(min_length..=max_length);
            let text: Vec<&str> = (0..len)
                .map(|_| {
                    let u = rng.random_range(0.0..total);
                    words[cumulative.partition_point(|&c| c <= u).min(vocabulary - 1)].as_str()
                })
                .collect();
            RawDocument {
                doc_id: format!("d{d:06}"),
                entity_id: entity_id(d % num_entities),
                text: text.join(" "),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{build_vocabulary, encode_corpus, is_stopword, tokenize};

    #[test]
    fn words_survive_tokenization() {
        for i in [0, 1, 25, 26, 700, 20_000] {
            let w = synthetic_word("sep", i);
            assert!(!is_stopword(&w));
            assert_eq!(tokenize(&w), vec![w.clone()]);
        }
        assert_ne!(synthetic_word("w", 26), synthetic_word("w", 0));
    }

    #[test]
    fn separable_shape() {
        let b = separable_benchmark(&SeparableConfig::default()).unwrap();
        assert_eq!(b.documents.len(), 80);
        assert_eq!(b.topics.len(), 12);
        assert_eq!(b.single_relevant_topics().len(), 8);
        assert_eq!(b.qrels.num_relevant("m1"), 2);
        let vocab = build_vocabulary(&b.documents, 1000).unwrap();
        assert!(vocab.len() <= 160);
    }

    #[test]
    fn fusion_profiles_have_equal_length() {
        let f = fusion_benchmark(&FusionConfig::default()).unwrap();
        let vocab = build_vocabulary(&f.benchmark.documents, 65536).unwrap();
        let corpus = encode_corpus(&f.benchmark.documents, &vocab).unwrap();
        let lengths: Vec<usize> = (0..corpus.num_entities())
            .map(|e| corpus.entity_documents(e).iter().map(|&d| corpus.documents()[d].tokens.len()).sum())
            .collect();
        assert!(lengths.iter().all(|&l| l == lengths[0]), "{lengths:?}");
        for t in &f.lexical_topics {
            assert_eq!(f.benchmark.qrels.num_relevant(t), 5);
        }
        let params = f.lse_params(&vocab, &corpus, 16).unwrap();
        params.validate().unwrap();
    }

    #[test]
    fn scaling_round_robin() {
        let docs = scaling_corpus(10, 35, 100, 5, 8, 1).unwrap();
        assert_eq!(docs.len(), 35);
        assert_eq!(docs[12].entity_id, "e0002");
        assert!(docs.iter().all(|d| (5..=8).contains(&d.text.split(' ').count())));
    }
}
