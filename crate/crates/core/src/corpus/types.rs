use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty sentence")]
    EmptySentence,
    #[error("empty token at position {0}")]
    EmptyToken(usize),
    #[error("line {line}: expected at least {want} columns, found {found}")]
    RaggedColumns {
        line: usize,
        want: usize,
        found: usize,
    },
    #[error("line {line}: expected {want}-dimensional vector, found {found}")]
    WrongDimension {
        line: usize,
        want: usize,
        found: usize,
    },
    #[error("label `{0}` not in vocabulary")]
    UnknownLabel(String),
    #[error("gold/prediction length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("row {0} of {1} matrix is not a probability distribution")]
    InvalidDistribution(usize, &'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Tokenized input sentence. Nonempty, with no empty tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    tokens: Vec<String>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>) -> Result<Self, CorpusError> {
        if tokens.is_empty() {
            return Err(CorpusError::EmptySentence);
        }
        if let Some(pos) = tokens.iter().position(|t| t.is_empty()) {
            return Err(CorpusError::EmptyToken(pos));
        }
        Ok(Sentence { tokens })
    }

    pub fn from_strs(tokens: &[&str]) -> Self {
        Sentence::new(tokens.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: length >= 1
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// The special tag rare labels are rewritten to after truncation.
pub const STAR: &str = "*";

/// Ordered label strings with a bijective string<->index map. The `*` tag is
/// present only when top-K truncation was applied.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabelVocab {
    labels: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    star: Option<usize>,
}

impl LabelVocab {
    pub fn new(labels: Vec<String>) -> Self {
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        let star = labels.iter().position(|l| l == STAR);
        LabelVocab {
            labels,
            index,
            star,
        }
    }

    /// Rebuild the index map after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
    }

    /// Collect all distinct labels of a corpus, in first-occurrence order.
    pub fn from_corpus(corpus: &[(Sentence, Vec<String>)]) -> Self {
        let mut labels = Vec::new();
        let mut seen = HashMap::new();
        for (_, labs) in corpus {
            for l in labs {
                if !seen.contains_key(l) {
                    seen.insert(l.clone(), labels.len());
                    labels.push(l.clone());
                }
            }
        }
        LabelVocab::new(labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn star_index(&self) -> Option<usize> {
        self.star
    }

    pub fn encode(&self, labels: &[String]) -> Result<Vec<usize>, CorpusError> {
        labels
            .iter()
            .map(|l| {
                self.index_of(l)
                    .ok_or_else(|| CorpusError::UnknownLabel(l.clone()))
            })
            .collect()
    }

    pub fn decode(&self, indices: &[usize]) -> Vec<String> {
        indices.iter().map(|&i| self.labels[i].clone()).collect()
    }
}

/// A corpus with string labels, as produced by the loaders and generator.
pub type RawCorpus = Vec<(Sentence, Vec<String>)>;

/// A corpus with labels encoded against a [`LabelVocab`].
pub type EncodedCorpus = Vec<(Sentence, Vec<usize>)>;

pub fn encode_corpus(corpus: &RawCorpus, vocab: &LabelVocab) -> Result<EncodedCorpus, CorpusError> {
    corpus
        .iter()
        .map(|(s, l)| Ok((s.clone(), vocab.encode(l)?)))
        .collect()
}
