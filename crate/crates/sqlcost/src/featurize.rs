//! Bag-of-words featurization of raw SQL text: tokenizer, vocabulary
//! with document frequencies, and sparse word-count / TF-IDF vectors.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numeric-literal sentinel token.
pub const NUM_TOKEN: &str = "<num>";
/// String-literal sentinel token.
pub const STR_TOKEN: &str = "<str>";

/// Ordered lowercase tokens of one SQL statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenList(pub Vec<String>);

impl TokenList {
    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Tokenize a SQL statement.
///
/// Lowercases, splits on whitespace and punctuation while keeping
/// dotted identifiers (`a.b.c`) whole, replaces numeric literals with
/// `<num>` and quoted string literals with `<str>`. Token characters
/// are `[a-z0-9_.$]`.
pub fn tokenize(sql: &str) -> TokenList {
    let mut tokens = Vec::new();
    let mut chars = sql.chars().peekable();
    let mut run = String::new();

    let flush = |run: &mut String, tokens: &mut Vec<String>| {
        if run.is_empty() {
            return;
        }
        let trimmed = run.trim_matches('.');
        if !trimmed.is_empty() {
            if trimmed.bytes().all(|b| b.is_ascii_digit() || b == b'.') {
                tokens.push(NUM_TOKEN.to_string());
            } else {
                tokens.push(trimmed.to_string());
            }
        }
        run.clear();
    };

    while let Some(c) = chars.next() {
        match c {
            '\'' | '"' => {
                flush(&mut run, &mut tokens);
                // Scan to the closing quote; a doubled quote escapes itself.
                while let Some(q) = chars.next() {
                    if q == c {
                        if chars.peek() == Some(&c) {
                            chars.next();
                        } else {
                            break;
                        }
                    }
                }
                tokens.push(STR_TOKEN.to_string());
            }
            c if c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '$' => {
                for lc in c.to_lowercase() {
                    run.push(lc);
                }
            }
            _ => flush(&mut run, &mut tokens),
        }
    }
    flush(&mut run, &mut tokens);
    TokenList(tokens)
}

/// Token-to-column mapping with document frequencies, and IDF weights
/// once fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    doc_freq: Vec<u32>,
    n_docs: usize,
    idf: Option<Vec<f64>>,
}

/// Serialized form: `{tokens, doc_freq, n_docs, idf}`.
#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    doc_freq: Vec<u32>,
    n_docs: usize,
    idf: Option<Vec<f64>>,
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        VocabularyRepr {
            tokens: self.tokens.clone(),
            doc_freq: self.doc_freq.clone(),
            n_docs: self.n_docs,
            idf: self.idf.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = VocabularyRepr::deserialize(d)?;
        if repr.doc_freq.len() != repr.tokens.len() {
            return Err(serde::de::Error::custom("doc_freq length != tokens length"));
        }
        if let Some(idf) = &repr.idf {
            if idf.len() != repr.tokens.len() {
                return Err(serde::de::Error::custom("idf length != tokens length"));
            }
        }
        let index = repr
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Vocabulary {
            tokens: repr.tokens,
            index,
            doc_freq: repr.doc_freq,
            n_docs: repr.n_docs,
            idf: repr.idf,
        })
    }
}

impl Vocabulary {
    /// Number of feature columns.
    pub fn dimension(&self) -> usize {
        self.tokens.len()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token_at(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn doc_freq(&self) -> &[u32] {
        &self.doc_freq
    }

    pub fn idf(&self) -> Option<&[f64]> {
        self.idf.as_deref()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }
}

/// Build a vocabulary from a tokenized corpus.
///
/// Tokens with document frequency below `min_df` are dropped; if more
/// than `max_features` remain, the highest-frequency tokens are kept
/// (ties broken lexicographically). Column indices follow lexicographic
/// token order.
pub fn build_vocabulary(
    corpus: &[TokenList],
    min_df: u32,
    max_features: usize,
) -> Result<Vocabulary> {
    let mut df: HashMap<&str, u32> = HashMap::new();
    let mut seen: std::collections::HashSet<&str> = std::collections::HashSet::new();
    for doc in corpus {
        seen.clear();
        for token in doc.as_slice() {
            if seen.insert(token) {
                *df.entry(token).or_insert(0) += 1;
            }
        }
    }

    let mut retained: Vec<(&str, u32)> = df
        .into_iter()
        .filter(|&(_, count)| count >= min_df.max(1))
        .collect();
    if retained.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    if retained.len() > max_features {
        retained.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        retained.truncate(max_features);
    }
    retained.sort_by(|a, b| a.0.cmp(b.0));

    let tokens: Vec<String> = retained.iter().map(|(t, _)| t.to_string()).collect();
    let doc_freq: Vec<u32> = retained.iter().map(|&(_, c)| c).collect();
    let index = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();
    Ok(Vocabulary {
        tokens,
        index,
        doc_freq,
        n_docs: corpus.len(),
        idf: None,
    })
}

/// Attach smoothed IDF weights: `idf[t] = ln((1 + n) / (1 + df[t])) + 1`.
pub fn fit_idf(mut vocab: Vocabulary) -> Vocabulary {
    let n = vocab.n_docs as f64;
    let idf = vocab
        .doc_freq
        .iter()
        .map(|&df| ((1.0 + n) / (1.0 + df as f64)).ln() + 1.0)
        .collect();
    vocab.idf = Some(idf);
    vocab
}

/// Which vectorization a trained bundle uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VectorizerKind {
    Count,
    Tfidf,
}

impl VectorizerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            VectorizerKind::Count => "count",
            VectorizerKind::Tfidf => "tfidf",
        }
    }

    pub fn vectorize(&self, tokens: &TokenList, vocab: &Vocabulary) -> Result<SparseVector> {
        match self {
            VectorizerKind::Count => Ok(vectorize_count(tokens, vocab)),
            VectorizerKind::Tfidf => vectorize_tfidf(tokens, vocab),
        }
    }
}

impl std::fmt::Display for VectorizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for VectorizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "count" => Ok(VectorizerKind::Count),
            "tfidf" => Ok(VectorizerKind::Tfidf),
            other => Err(Error::Config(format!(
                "unknown vectorizer `{other}` (expected count or tfidf)"
            ))),
        }
    }
}

/// Sparse feature vector: sorted `(column, value)` pairs with nonzero
/// values, all columns below `dimension`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub dimension: usize,
    pub entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn empty(dimension: usize) -> Self {
        SparseVector {
            dimension,
            entries: Vec::new(),
        }
    }

    /// Value at a column (0.0 when absent).
    pub fn get(&self, column: u32) -> f64 {
        match self.entries.binary_search_by_key(&column, |e| e.0) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0.0,
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(_, v)| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }
}

fn count_in_vocab(tokens: &TokenList, vocab: &Vocabulary) -> Vec<(u32, f64)> {
    let mut counts: HashMap<u32, f64> = HashMap::new();
    for token in tokens.as_slice() {
        if let Some(col) = vocab.index_of(token) {
            *counts.entry(col).or_insert(0.0) += 1.0;
        }
    }
    let mut entries: Vec<(u32, f64)> = counts.into_iter().collect();
    entries.sort_unstable_by_key(|e| e.0);
    entries
}

/// Word-count vector over the vocabulary; out-of-vocabulary tokens are
/// ignored.
pub fn vectorize_count(tokens: &TokenList, vocab: &Vocabulary) -> SparseVector {
    SparseVector {
        dimension: vocab.dimension(),
        entries: count_in_vocab(tokens, vocab),
    }
}

/// TF-IDF vector: `count * idf`, L2-normalized. The all-zero vector is
/// returned unnormalized.
pub fn vectorize_tfidf(tokens: &TokenList, vocab: &Vocabulary) -> Result<SparseVector> {
    let idf = vocab.idf().ok_or(Error::MissingIdf)?;
    let mut entries = count_in_vocab(tokens, vocab);
    for (col, value) in entries.iter_mut() {
        *value *= idf[*col as usize];
    }
    let norm = entries.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, value) in entries.iter_mut() {
            *value /= norm;
        }
    }
    Ok(SparseVector {
        dimension: vocab.dimension(),
        entries,
    })
}
