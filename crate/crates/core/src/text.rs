//! Tokenization, vocabulary construction and corpus encoding.
//!
//! The tokenizer lowercases, splits on anything that is neither a letter nor
//! part of a number, drops stopwords and maps every numeric token (digits
//! optionally joined by `.`, `,` or `-`) to the placeholder [`NUM_TOKEN`].
//! The placeholder competes for a vocabulary slot like any other token.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Placeholder emitted for numeric tokens.
pub const NUM_TOKEN: &str = "<num>";

/// Hard cap on vocabulary size: every id fits in 16 bits.
pub const MAX_VOCABULARY_SIZE: usize = 1 << 16;

/// Vocabulary id of a token.
pub type TokenId = u16;

/// Version tag of the bundled stopword list.
pub const STOPWORDS_VERSION: &str = "en-v1";

static STOPWORDS: LazyLock<HashSet<&'static str>> = LazyLock::new(|| {
    include_str!("../data/stopwords-en-v1.txt")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
});

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.contains(token)
}

fn is_number_separator(c: char) -> bool {
    matches!(c, '.' | ',' | '-')
}

/// Split `text` into lowercase word tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '<' && chars[i..].iter().take(5).copied().eq("<num>".chars()) {
            tokens.push(NUM_TOKEN.to_string());
            i += 5;
        } else if c.is_numeric() {
            i += 1;
            loop {
                if i < chars.len() && chars[i].is_numeric() {
                    i += 1;
                } else if i + 1 < chars.len()
                    && is_number_separator(chars[i])
                    && chars[i + 1].is_numeric()
                {
                    i += 2;
                } else {
                    break;
                }
            }
            tokens.push(NUM_TOKEN.to_string());
        } else if c.is_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_alphabetic() {
                i += 1;
            }
            let word: String = chars[start..i].iter().flat_map(|c| c.to_lowercase()).collect();
            if !is_stopword(&word) {
                tokens.push(word);
            }
        } else {
            i += 1;
        }
    }
    tokens
}

/// A document as read from disk, before tokenization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub doc_id: String,
    pub entity_id: String,
    pub text: String,
}

/// Bidirectional token/id map with corpus statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, TokenId>,
    id_to_token: Vec<String>,
    frequency: Vec<u64>,
    document_frequency: Vec<u64>,
}

impl Vocabulary {
    /// Build from entries already in id order.
    fn from_entries(entries: Vec<(String, u64, u64)>) -> Self {
        let mut token_to_id = HashMap::with_capacity(entries.len());
        let mut id_to_token = Vec::with_capacity(entries.len());
        let mut frequency = Vec::with_capacity(entries.len());
        let mut document_frequency = Vec::with_capacity(entries.len());
        for (id, (token, tf, df)) in entries.into_iter().enumerate() {
            token_to_id.insert(token.clone(), id as TokenId);
            id_to_token.push(token);
            frequency.push(tf);
            document_frequency.push(df);
        }
        Vocabulary {
            token_to_id,
            id_to_token,
            frequency,
            document_frequency,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn frequency(&self, id: TokenId) -> u64 {
        self.frequency[id as usize]
    }

    pub fn document_frequency(&self, id: TokenId) -> u64 {
        self.document_frequency[id as usize]
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.id_to_token.iter().map(String::as_str)
    }

    /// Map tokens to ids, dropping out-of-vocabulary tokens.
    ///
    /// Returns the ids and the number of dropped tokens.
    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> (Vec<TokenId>, usize) {
        let ids: Vec<TokenId> = tokens.iter().filter_map(|t| self.id(t.as_ref())).collect();
        let dropped = tokens.len() - ids.len();
        (ids, dropped)
    }

    /// Tokenize and encode a piece of text, dropping out-of-vocabulary tokens.
    pub fn encode_text(&self, text: &str) -> Vec<TokenId> {
        self.encode_tokens(&tokenize(text)).0
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<&str> {
        ids.iter().filter_map(|&id| self.token(id)).collect()
    }

    /// Write as TSV: `token \t id \t frequency \t document_frequency`.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (id, token) in self.id_to_token.iter().enumerate() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                token, id, self.frequency[id], self.document_frequency[id]
            )?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(input: R, source: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io(source, e))?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::parse(source, lineno + 1, "expected 4 tab-separated fields"));
            }
            let num = |s: &str, what: &str| {
                s.parse::<u64>()
                    .map_err(|_| Error::parse(source, lineno + 1, format!("bad {what} {s:?}")))
            };
            let id = num(fields[1], "id")?;
            if id as usize != entries.len() {
                return Err(Error::parse(
                    source,
                    lineno + 1,
                    format!("ids must be contiguous from 0; expected {}, got {id}", entries.len()),
                ));
            }
            entries.push((fields[0].to_string(), num(fields[2], "frequency")?, num(fields[3], "document frequency")?));
        }
        if entries.len() > MAX_VOCABULARY_SIZE {
            return Err(Error::parse(source, entries.len(), "vocabulary exceeds 65536 entries"));
        }
        if entries.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let vocab = Vocabulary::from_entries(entries);
        if vocab.token_to_id.len() != vocab.id_to_token.len() {
            return Err(Error::parse(source, 0, "duplicate tokens in vocabulary"));
        }
        Ok(vocab)
    }

    /// Hex SHA-256 of the TSV serialization.
    pub fn content_hash(&self) -> String {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf).expect("writing to memory");
        hex::encode(Sha256::digest(&buf))
    }
}

/// Count tokens over `raw_docs` and keep the `max_size` most frequent.
///
/// Frequency ties at the cutoff are broken by lexicographic token order.
pub fn build_vocabulary(raw_docs: &[RawDocument], max_size: usize) -> Result<Vocabulary> {
    if max_size == 0 || max_size > MAX_VOCABULARY_SIZE {
        return Err(Error::Config(format!(
            "vocabulary size must be in [1, {MAX_VOCABULARY_SIZE}], got {max_size}"
        )));
    }
    let mut counts: HashMap<String, (u64, u64)> = HashMap::new();
    for doc in raw_docs {
        let tokens = tokenize(&doc.text);
        let mut seen = HashSet::new();
        for token in tokens {
            let first = seen.insert(token.clone());
            let entry = counts.entry(token).or_default();
            entry.0 += 1;
            if first {
                entry.1 += 1;
            }
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let mut entries: Vec<(String, u64, u64)> =
        counts.into_iter().map(|(t, (tf, df))| (t, tf, df)).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.truncate(max_size);
    Ok(Vocabulary::from_entries(entries))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub entity_id: String,
    /// Index of the owning entity in [`Corpus::entities`].
    pub entity: usize,
    pub tokens: Vec<TokenId>,
}

/// Encoded documents grouped by entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    entities: Vec<String>,
    entity_index: HashMap<String, usize>,
    documents: Vec<Document>,
    association: Vec<Vec<usize>>,
    total_tokens: usize,
    dropped_tokens: usize,
}

impl Corpus {
    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn entity_index(&self, entity_id: &str) -> Option<usize> {
        self.entity_index.get(entity_id).copied()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    /// Document indices associated with entity `entity`.
    pub fn entity_documents(&self, entity: usize) -> &[usize] {
        &self.association[entity]
    }

    /// Number of in-vocabulary tokens over all documents.
    pub fn total_tokens(&self) -> usize {
        self.total_tokens
    }

    /// Tokens removed at encode time because they were out of vocabulary.
    pub fn dropped_tokens(&self) -> usize {
        self.dropped_tokens
    }
}

/// Encode raw documents against `vocab`.
///
/// Entities are indexed in order of first appearance. Documents whose tokens
/// are all out of vocabulary are kept with an empty token list.
pub fn encode_corpus(raw_docs: &[RawDocument], vocab: &Vocabulary) -> Result<Corpus> {
    let mut entities = Vec::new();
    let mut entity_index = HashMap::new();
    let mut association: Vec<Vec<usize>> = Vec::new();
    let mut documents = Vec::with_capacity(raw_docs.len());
    let mut seen_docs = HashSet::new();
    let mut total_tokens = 0;
    let mut dropped_tokens = 0;

    for raw in raw_docs {
        if !seen_docs.insert(raw.doc_id.as_str()) {
            return Err(Error::DuplicateDocument(raw.doc_id.clone()));
        }
        let entity = *entity_index.entry(raw.entity_id.clone()).or_insert_with(|| {
            entities.push(raw.entity_id.clone());
            association.push(Vec::new());
            entities.len() - 1
        });
        let (tokens, dropped) = vocab.encode_tokens(&tokenize(&raw.text));
        total_tokens += tokens.len();
        dropped_tokens += dropped;
        association[entity].push(documents.len());
        documents.push(Document {
            doc_id: raw.doc_id.clone(),
            entity_id: raw.entity_id.clone(),
            entity,
            tokens,
        });
    }
    if entities.is_empty() {
        return Err(Error::Config("corpus has no documents".into()));
    }
    Ok(Corpus {
        entities,
        entity_index,
        documents,
        association,
        total_tokens,
        dropped_tokens,
    })
}

/// A category path and the entities filed under it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryPath {
    pub path: Vec<String>,
    pub entity_ids: Vec<String>,
}

/// Read a JSON-lines file of records, skipping blank lines.
pub fn read_jsonl<T: serde::de::DeserializeOwned, R: BufRead>(input: R, source: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(source, lineno + 1, e.to_string()))?);
    }
    Ok(out)
}

/// Turn a category path into a textual query.
///
/// The first level is skipped; the remaining titles are tokenized in order
/// and repeated words are removed, keeping the first occurrence.
pub fn extract_topic_query<S: AsRef<str>>(path: &[S]) -> Result<String> {
    if path.len() < 2 {
        return Err(Error::ShallowCategory(
            path.iter().map(|s| s.as_ref().to_string()).collect(),
        ));
    }
    let mut seen = HashSet::new();
    let mut query = String::new();
    for title in &path[1..] {
        for token in tokenize(title.as_ref()) {
            if seen.insert(token.clone()) {
                if !query.is_empty() {
                    query.push(' ');
                }
                let _ = write!(query, "{token}");
            }
        }
    }
    Ok(query)
}
