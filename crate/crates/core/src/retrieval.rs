//! Exhaustive cosine ranking of entities and TREC run files.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{project, ModelParams};
use crate::text::{Corpus, TokenId};

/// Default number of entries written per topic.
pub const DEFAULT_TOP_K: usize = 100;

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(a.dot(&b) / (na * nb))
}

/// Entities of one topic, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub topic_id: String,
    pub entries: Vec<(String, f64)>,
}

/// Descending score, then ascending id.
fn entry_order(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

impl RankedList {
    /// Sort `(entity, score)` pairs into ranking order.
    pub fn from_scores(topic_id: impl Into<String>, mut entries: Vec<(String, f64)>) -> Self {
        entries.sort_by(entry_order);
        RankedList {
            topic_id: topic_id.into(),
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }
}

/// Entity vectors with precomputed norms, for repeated cosine ranking.
#[derive(Debug, Clone)]
pub struct CosineIndex<'a> {
    vectors: ArrayView2<'a, f64>,
    norms: Array1<f64>,
    ids: &'a [String],
}

impl<'a> CosineIndex<'a> {
    pub fn new(vectors: ArrayView2<'a, f64>, ids: &'a [String]) -> Result<Self> {
        if vectors.nrows() != ids.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                actual: vectors.nrows(),
            });
        }
        let norms = vectors.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
        Ok(CosineIndex { vectors, norms, ids })
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// Cosine score of every entity against `query`.
    pub fn scores(&self, query: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        if query.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: query.len(),
            });
        }
        let qn = query.dot(&query).sqrt();
        let dots = self.vectors.dot(&query);
        Ok(dots
            .iter()
            .zip(self.norms.iter())
            .map(|(&d, &n)| if n == 0.0 || qn == 0.0 { 0.0 } else { d / (n * qn) })
            .collect())
    }

    pub fn rank(&self, topic_id: &str, query: ArrayView1<'_, f64>) -> Result<RankedList> {
        let scores = self.scores(query)?;
        Ok(RankedList::from_scores(
            topic_id,
            self.ids.iter().cloned().zip(scores).collect(),
        ))
    }
}

/// Rank every entity by cosine similarity between its row of `W_e` and the
/// projected query.
pub fn rank_entities(
    params: &ModelParams,
    entity_ids: &[String],
    topic_id: &str,
    query_tokens: &[TokenId],
) -> Result<RankedList> {
    if query_tokens.is_empty() {
        return Err(Error::AllOutOfVocabulary(topic_id.to_string()));
    }
    let query = project(params, query_tokens)?;
    CosineIndex::new(params.entity_embeddings.view(), entity_ids)?.rank(topic_id, query.view())
}

/// Externally computed document vectors keyed by document id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DocumentVectorSet {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
struct DocumentVectorRecord {
    doc_id: String,
    vector: Vec<f64>,
}

impl DocumentVectorSet {
    pub fn new(dim: usize) -> Self {
        DocumentVectorSet {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, doc_id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        self.vectors.insert(doc_id.into(), vector);
        Ok(())
    }

    pub fn get(&self, doc_id: &str) -> Option<&[f64]> {
        self.vectors.get(doc_id).map(Vec::as_slice)
    }

    /// Read JSON lines of `{"doc_id": .., "vector": [..]}`; the first record
    /// fixes the dimensionality.
    pub fn read_jsonl<R: BufRead>(input: R, source: &str) -> Result<Self> {
        let mut set: Option<DocumentVectorSet> = None;
        let mut seen = HashSet::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io(source, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: DocumentVectorRecord = serde_json::from_str(&line)
                .map_err(|e| Error::parse(source, lineno + 1, e.to_string()))?;
            if !seen.insert(rec.doc_id.clone()) {
                return Err(Error::parse(source, lineno + 1, format!("duplicate doc_id {:?}", rec.doc_id)));
            }
            let set = set.get_or_insert_with(|| DocumentVectorSet::new(rec.vector.len()));
            set.insert(rec.doc_id, rec.vector)
                .map_err(|e| Error::parse(source, lineno + 1, e.to_string()))?;
        }
        Ok(set.unwrap_or_default())
    }
}

/// Entity vectors as the unweighted sum of their documents' vectors.
pub fn aggregate_entity_vectors(corpus: &Corpus, doc_vectors: &DocumentVectorSet) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((corpus.num_entities(), doc_vectors.dim()));
    for doc in corpus.documents() {
        let v = doc_vectors
            .get(&doc.doc_id)
            .ok_or_else(|| Error::MissingDocumentVector(doc.doc_id.clone()))?;
        let mut row = out.row_mut(doc.entity);
        row += &ArrayView1::from(v);
    }
    Ok(out)
}

/// Write rankings in TREC run format, at most `top_k` lines per topic.
pub fn write_run<W: Write>(mut out: W, lists: &[RankedList], run_tag: &str, top_k: usize) -> std::io::Result<()> {
    for list in lists {
        for (rank, (entity, score)) in list.entries.iter().take(top_k).enumerate() {
            writeln!(out, "{} Q0 {} {} {:.12e} {}", list.topic_id, entity, rank + 1, score, run_tag)?;
        }
    }
    Ok(())
}

/// Strict TREC run reader: six fields, `Q0`, ranks 1, 2, ... per topic and
/// non-increasing scores. Topics are returned in order of first appearance.
pub fn read_run<R: BufRead>(input: R, source: &str) -> Result<Vec<RankedList>> {
    let mut lists: Vec<RankedList> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::parse(source, lineno + 1, msg);
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", fields.len())));
        }
        if fields[1] != "Q0" {
            return Err(err(format!("second field must be Q0, found {:?}", fields[1])));
        }
        let rank: usize = fields[3].parse().map_err(|_| err(format!("bad rank {:?}", fields[3])))?;
        let score: f64 = fields[4].parse().map_err(|_| err(format!("bad score {:?}", fields[4])))?;
        let topic = fields[0].to_string();
        let slot = *index.entry(topic.clone()).or_insert_with(|| {
            lists.push(RankedList {
                topic_id: topic.clone(),
                entries: Vec::new(),
            });
            lists.len() - 1
        });
        let list = &mut lists[slot];
        if rank != list.entries.len() + 1 {
            return Err(err(format!("expected rank {}, found {rank}", list.entries.len() + 1)));
        }
        if let Some(&(_, prev)) = list.entries.last() {
            if score > prev {
                return Err(err("scores must be non-increasing within a topic".into()));
            }
        }
        if !seen.insert((topic, fields[2].to_string())) {
            return Err(err(format!("entity {:?} listed twice", fields[2])));
        }
        list.entries.push((fields[2].to_string(), score));
    }
    Ok(lists)
}
