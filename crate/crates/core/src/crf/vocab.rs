use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::RawCorpus;

/// Token-to-row mapping for embedding tables. Index 0 is UNK, index 1 the
/// dedicated padding entry used by window convolutions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TokenVocab {
    items: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

pub const UNK: usize = 0;
pub const PAD: usize = 1;

impl TokenVocab {
    pub fn new(mut items: Vec<String>) -> Self {
        let mut all = vec!["<unk>".to_string(), "<pad>".to_string()];
        all.append(&mut items);
        let mut v = TokenVocab {
            items: all,
            index: HashMap::new(),
        };
        v.rebuild_index();
        v
    }

    pub fn from_corpus(corpus: &RawCorpus) -> Self {
        let mut seen = HashMap::new();
        let mut items = Vec::new();
        for (sent, _) in corpus {
            for t in sent.tokens() {
                if !seen.contains_key(t) {
                    seen.insert(t.clone(), ());
                    items.push(t.clone());
                }
            }
        }
        TokenVocab::new(items)
    }

    /// Character vocabulary over all distinct chars of the corpus tokens.
    pub fn chars_from_corpus(corpus: &RawCorpus) -> Self {
        let mut seen = HashMap::new();
        let mut items = Vec::new();
        for (sent, _) in corpus {
            for t in sent.tokens() {
                for c in t.chars() {
                    let s = c.to_string();
                    if !seen.contains_key(&s) {
                        seen.insert(s.clone(), ());
                        items.push(s);
                    }
                }
            }
        }
        TokenVocab::new(items)
    }

    pub fn rebuild_index(&mut self) {
        self.index = self
            .items
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }
}
