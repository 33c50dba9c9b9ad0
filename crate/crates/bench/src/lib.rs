//! Shared fixture builders for the criterion benchmarks: synthetic corpora
//! and untrained models of benchmark-relevant shapes. Kept in the library so
//! every bench target constructs identical workloads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crfbench_core::corpus::{encode_corpus, gen_hmm_corpus, EncodedCorpus, HmmSpec, LabelVocab, RawCorpus};
use crfbench_core::crf::{CrfConfig, EnergyModel};
use crfbench_core::infnet::{Family, InfNetConfig, InfNetModel};
use crfbench_core::Tensor;

/// A synthetic workload: corpus plus freshly initialized (untrained) models.
/// Throughput does not depend on parameter values, so training is skipped.
pub struct Workload {
    pub raw: RawCorpus,
    pub corpus: EncodedCorpus,
    pub vocab: LabelVocab,
    pub energy: EnergyModel,
}

pub fn workload(states: usize, vocab_size: usize, sentences: usize, seed: u64) -> Workload {
    let spec = HmmSpec::disjoint_emissions(states, vocab_size, seed);
    let raw = gen_hmm_corpus(&spec, sentences, (5, 15), seed + 1).expect("valid generator spec");
    let vocab = LabelVocab::from_corpus(&raw);
    let corpus = encode_corpus(&raw, &vocab).expect("encodable corpus");
    let energy = EnergyModel::new(
        CrfConfig {
            word_dim: 16,
            hidden: 32,
            seed: seed + 2,
            ..CrfConfig::default()
        },
        &raw,
        vocab.clone(),
    );
    Workload {
        raw,
        corpus,
        vocab,
        energy,
    }
}

/// An inference network of the given family over the workload's vocabulary.
pub fn infnet(w: &Workload, family: Family, seed: u64) -> InfNetModel {
    InfNetModel::new(
        InfNetConfig {
            family,
            word_dim: 16,
            hidden: 32,
            seed,
            ..InfNetConfig::default()
        },
        &w.raw,
        w.vocab.clone(),
    )
}

/// Random potential tables for measuring the decoder alone: `count` unary
/// tables of shape `len x labels` plus one transition matrix each.
pub fn random_tables(count: usize, len: usize, labels: usize, seed: u64) -> Vec<(Tensor, Tensor)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (
                Tensor::rand_uniform(len, labels, -1.0, 1.0, &mut rng),
                Tensor::rand_uniform(labels, labels, -1.0, 1.0, &mut rng),
            )
        })
        .collect()
}
