//! Search error against exact inference and Spearman rank correlation.

use thiserror::Error;

use crate::corpus::Sentence;
use crate::crf::{discrete_energy, viterbi, EnergyModel};
use crate::numgrad::Tensor;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error(
        "search error {gap} below -1e-9 for sentence of length {len}: exact decoder is not exact"
    )]
    NegativeSearchError { gap: f64, len: usize },
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("constant input vector: rank correlation undefined")]
    ConstantInput,
}

/// E(x, y_method) - E(x, y_viterbi) over explicit tables. Nonnegative up to
/// floating-point noise; a violation beyond 1e-9 is a hard failure since
/// Viterbi is exact.
pub fn search_error_tables(
    unary: &Tensor,
    w: &Tensor,
    y_method: &[usize],
    y_viterbi: &[usize],
) -> Result<f64, StatsError> {
    if y_method.len() != y_viterbi.len() {
        return Err(StatsError::LengthMismatch(y_method.len(), y_viterbi.len()));
    }
    let gap = discrete_energy(unary, w, y_method) - discrete_energy(unary, w, y_viterbi);
    if gap < -1e-9 {
        return Err(StatsError::NegativeSearchError {
            gap,
            len: y_method.len(),
        });
    }
    Ok(gap)
}

/// Search error of a discrete labeling for a sentence, running Viterbi
/// internally as the exact reference.
pub fn search_error(
    x: &Sentence,
    y_method: &[usize],
    energy_model: &EnergyModel,
) -> Result<f64, StatsError> {
    let unary = energy_model.unary_table(x);
    let (y_vit, _) = viterbi(&unary, energy_model.transitions());
    search_error_tables(&unary, energy_model.transitions(), y_method, &y_vit)
}

/// Average ranks (1-based), with ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("non-finite rank input"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the average 1-based rank
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rank correlation with average-rank tie handling, computed as
/// the Pearson correlation of the rank vectors.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(StatsError::TooShort(a.len()));
    }
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(a) || constant(b) {
        return Err(StatsError::ConstantInput);
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = ra.len() as f64;
    let tie_free = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(|x, y| x.partial_cmp(y).unwrap());
        s.windows(2).all(|w| w[0] != w[1])
    };
    if tie_free(a) && tie_free(b) {
        // tie-free: the classic difference formula is exact (integer d^2)
        let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
        return Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)));
    }
    let mean = (n + 1.0) / 2.0;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        num += (x - mean) * (y - mean);
        da += (x - mean).powi(2);
        db += (y - mean).powi(2);
    }
    Ok((num / (da.sqrt() * db.sqrt())).clamp(-1.0, 1.0))
}
