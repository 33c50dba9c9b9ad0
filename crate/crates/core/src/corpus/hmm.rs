//! Synthetic corpus generation from a hidden Markov model, the desk-scale
//! substitute for licensed datasets.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::types::{CorpusError, RawCorpus, Sentence};

const ROW_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HmmSpec {
    /// Number of hidden states (= labels).
    pub states: usize,
    /// Emission vocabulary size.
    pub vocab: usize,
    /// states x states row-stochastic matrix.
    pub transition: Vec<Vec<f64>>,
    /// states x vocab row-stochastic matrix.
    pub emission: Vec<Vec<f64>>,
    /// Initial state distribution.
    pub initial: Vec<f64>,
}

impl HmmSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let check = |row: &[f64], len: usize, r: usize, what: &'static str| {
            if row.len() != len
                || row.iter().any(|&p| !(0.0..=1.0).contains(&p))
                || (row.iter().sum::<f64>() - 1.0).abs() > ROW_TOL
            {
                Err(CorpusError::InvalidDistribution(r, what))
            } else {
                Ok(())
            }
        };
        for (r, row) in self.transition.iter().enumerate() {
            check(row, self.states, r, "transition")?;
        }
        for (r, row) in self.emission.iter().enumerate() {
            check(row, self.vocab, r, "emission")?;
        }
        check(&self.initial, self.states, 0, "initial")?;
        if self.transition.len() != self.states || self.emission.len() != self.states {
            return Err(CorpusError::InvalidDistribution(0, "transition"));
        }
        Ok(())
    }

    /// Random HMM with rough structure: each state prefers a few next states
    /// and a few emissions, so the labeling task is learnable but not
    /// trivial.
    pub fn random(states: usize, vocab: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let peaked = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
            let mut row: Vec<f64> = (0..n).map(|_| rng.gen::<f64>().powi(3) + 1e-3).collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= s);
            row
        };
        HmmSpec {
            states,
            vocab,
            transition: (0..states).map(|_| peaked(states, &mut rng)).collect(),
            emission: (0..states).map(|_| peaked(vocab, &mut rng)).collect(),
            initial: peaked(states, &mut rng),
        }
    }

    /// HMM whose emission supports are disjoint across states: every token
    /// identifies its state, so the gold labeling is exactly recoverable
    /// from the tokens. Requires vocab >= states.
    pub fn disjoint_emissions(states: usize, vocab: usize, seed: u64) -> Self {
        assert!(vocab >= states, "need at least one token per state");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let block = vocab / states;
        let emission = (0..states)
            .map(|s| {
                let mut row = vec![0.0; vocab];
                let start = s * block;
                let end = if s == states - 1 { vocab } else { start + block };
                let width = end - start;
                for slot in row.iter_mut().take(end).skip(start) {
                    *slot = 1.0 / width as f64;
                }
                row
            })
            .collect();
        let peaked = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
            let mut row: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.1).collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= s);
            row
        };
        HmmSpec {
            states,
            vocab,
            transition: (0..states).map(|_| peaked(states, &mut rng)).collect(),
            emission,
            initial: peaked(states, &mut rng),
        }
    }

    /// Fully deterministic HMM: state i always emits token i and always
    /// transitions to state (i+1) mod L.
    pub fn deterministic(states: usize) -> Self {
        let one_hot = |i: usize, n: usize| {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            row
        };
        HmmSpec {
            states,
            vocab: states,
            transition: (0..states)
                .map(|i| one_hot((i + 1) % states, states))
                .collect(),
            emission: (0..states).map(|i| one_hot(i, states)).collect(),
            initial: one_hot(0, states),
        }
    }
}

fn sample_categorical<R: Rng>(dist: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.len() - 1
}

/// Token string for emission index `v`.
pub fn token_name(v: usize) -> String {
    format!("w{v}")
}

/// Label string for state index `s`.
pub fn label_name(s: usize) -> String {
    format!("L{s}")
}

/// Sample `num_sentences` i.i.d. sentences from the HMM, lengths uniform in
/// `len_range` (inclusive). Pure function of (spec, counts, seed).
pub fn gen_hmm_corpus(
    spec: &HmmSpec,
    num_sentences: usize,
    len_range: (usize, usize),
    seed: u64,
) -> Result<RawCorpus, CorpusError> {
    spec.validate()?;
    assert!(len_range.0 >= 1 && len_range.0 <= len_range.1, "bad length range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Vec::with_capacity(num_sentences);
    for _ in 0..num_sentences {
        let n = rng.gen_range(len_range.0..=len_range.1);
        let mut tokens = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut state = sample_categorical(&spec.initial, &mut rng);
        for t in 0..n {
            if t > 0 {
                state = sample_categorical(&spec.transition[state], &mut rng);
            }
            let tok = sample_categorical(&spec.emission[state], &mut rng);
            tokens.push(token_name(tok));
            labels.push(label_name(state));
        }
        corpus.push((Sentence::new(tokens)?, labels));
    }
    Ok(corpus)
}
