//! Data ingestion (CoNLL columns, embedding text files), label-space
//! handling (BIOES, top-K truncation with `*`), evaluation metrics, and the
//! synthetic HMM corpus generator.

pub mod bioes;
pub mod conll;
pub mod embeddings;
pub mod hmm;
pub mod metrics;
pub mod types;

pub use bioes::{spans, to_bioes, Span};
pub use conll::{load_conll, write_conll, write_conll_with};
pub use embeddings::{load_embeddings, EmbeddingTable};
pub use hmm::{gen_hmm_corpus, label_name, token_name, HmmSpec};
pub use metrics::{span_f1, token_accuracy, truncate_labels, SpanF1};
pub use types::{
    encode_corpus, CorpusError, EncodedCorpus, LabelVocab, RawCorpus, Sentence, STAR,
};
