//! Benchmarking: timing protocol, accuracy/energy/search-error aggregates,
//! LSTM language models, and rank-correlation analysis.

pub mod harness;
pub mod lm;
pub mod stats;

pub use harness::{
    correlate_from_parts, correlate_search_error, run_bench, BenchConfig, BenchError, BenchReport,
    InferenceOutcome, Method, MethodCorrelation, MethodRow, PerSentenceRow,
};
pub use lm::{lm_perplexity, train_lm, LmConfig, LmError, LmModel, LmVocab};
pub use stats::{average_ranks, search_error, search_error_tables, spearman_rho, StatsError};
