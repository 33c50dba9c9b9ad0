//! Evaluation metrics: token accuracy with the `*`-always-incorrect rule,
//! and micro-averaged span F1 over BIOES sequences.

use serde::{Deserialize, Serialize};

use super::bioes::spans;
use super::types::{CorpusError, STAR};

/// Token accuracy in percent. Positions whose gold label is `*` count as
/// incorrect no matter what was predicted.
pub fn token_accuracy(
    gold: &[Vec<String>],
    pred: &[Vec<String>],
) -> Result<f64, CorpusError> {
    if gold.len() != pred.len() {
        return Err(CorpusError::LengthMismatch(gold.len(), pred.len()));
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for (g, p) in gold.iter().zip(pred) {
        if g.len() != p.len() {
            return Err(CorpusError::LengthMismatch(g.len(), p.len()));
        }
        for (gl, pl) in g.iter().zip(p) {
            total += 1;
            if gl != STAR && gl == pl {
                correct += 1;
            }
        }
    }
    if total == 0 {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(correct as f64 / total as f64 * 100.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True when neither side contained any span; the scores are then
    /// reported as 0 by convention.
    pub degenerate: bool,
}

/// Micro-averaged span precision/recall/F1 (percent) over a corpus of BIOES
/// sequences. A predicted span is a true positive iff its (type, start, end)
/// triple appears in the gold spans of the same sentence.
pub fn span_f1(gold: &[Vec<String>], pred: &[Vec<String>]) -> Result<SpanF1, CorpusError> {
    if gold.len() != pred.len() {
        return Err(CorpusError::LengthMismatch(gold.len(), pred.len()));
    }
    let mut tp = 0usize;
    let mut n_pred = 0usize;
    let mut n_gold = 0usize;
    for (g, p) in gold.iter().zip(pred) {
        if g.len() != p.len() {
            return Err(CorpusError::LengthMismatch(g.len(), p.len()));
        }
        let gs = spans(g);
        let ps = spans(p);
        n_gold += gs.len();
        n_pred += ps.len();
        tp += ps.iter().filter(|s| gs.contains(s)).count();
    }
    if n_gold == 0 && n_pred == 0 {
        return Ok(SpanF1 {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            degenerate: true,
        });
    }
    let precision = if n_pred == 0 {
        0.0
    } else {
        tp as f64 / n_pred as f64 * 100.0
    };
    let recall = if n_gold == 0 {
        0.0
    } else {
        tp as f64 / n_gold as f64 * 100.0
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(SpanF1 {
        precision,
        recall,
        f1,
        degenerate: false,
    })
}

/// Rewrite all labels outside the K most frequent (by training count) to the
/// special `*` tag. Returns the rewritten corpus together with the new label
/// vocabulary: the kept labels in frequency order, then `*`. When K covers
/// every distinct label the corpus is unchanged and no `*` is added.
pub fn truncate_labels(
    corpus: &super::types::RawCorpus,
    k: usize,
) -> (super::types::RawCorpus, super::types::LabelVocab) {
    assert!(k >= 1, "truncate_labels: K must be >= 1");
    let mut counts: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for (_, labels) in corpus {
        for l in labels {
            *counts.entry(l).or_insert(0) += 1;
        }
    }
    let mut ordered: Vec<(&str, usize)> = counts.into_iter().collect();
    ordered.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

    if k >= ordered.len() {
        let vocab = super::types::LabelVocab::from_corpus(corpus);
        return (corpus.clone(), vocab);
    }

    let kept: std::collections::HashSet<String> = ordered
        .iter()
        .take(k)
        .map(|(l, _)| l.to_string())
        .collect();
    let rewritten = corpus
        .iter()
        .map(|(s, labels)| {
            let labels = labels
                .iter()
                .map(|l| {
                    if kept.contains(l) {
                        l.clone()
                    } else {
                        STAR.to_string()
                    }
                })
                .collect();
            (s.clone(), labels)
        })
        .collect();
    let mut vocab_labels: Vec<String> = ordered
        .iter()
        .take(k)
        .map(|(l, _)| l.to_string())
        .collect();
    vocab_labels.push(STAR.to_string());
    (rewritten, super::types::LabelVocab::new(vocab_labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::types::Sentence;

    fn tags(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn perfect_prediction_is_100() {
        let gold = vec![tags(&["A", "B", "C"])];
        assert_eq!(token_accuracy(&gold, &gold).unwrap(), 100.0);
    }

    #[test]
    fn star_always_incorrect() {
        let gold = vec![tags(&["*"])];
        let pred = vec![tags(&["*"])];
        assert_eq!(token_accuracy(&gold, &pred).unwrap(), 0.0);
    }

    #[test]
    fn three_of_four() {
        let gold = vec![tags(&["A", "B", "C", "D"])];
        let pred = vec![tags(&["A", "B", "C", "X"])];
        assert_eq!(token_accuracy(&gold, &pred).unwrap(), 75.0);
    }

    #[test]
    fn length_mismatch_rejected() {
        let gold = vec![tags(&["A", "B"])];
        let pred = vec![tags(&["A"])];
        assert!(token_accuracy(&gold, &pred).is_err());
    }

    #[test]
    fn f1_perfect_match() {
        let gold = vec![tags(&["B-PER", "E-PER", "O"])];
        let r = span_f1(&gold, &gold).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (100.0, 100.0, 100.0));
        assert!(!r.degenerate);
    }

    #[test]
    fn f1_boundary_mismatch_is_zero() {
        // gold span (PER, 0, 1) vs predicted span (PER, 0, 0)
        let gold = vec![tags(&["B-PER", "E-PER"])];
        let pred = vec![tags(&["B-PER", "O"])];
        let r = span_f1(&gold, &pred).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert!(!r.degenerate);
    }

    #[test]
    fn f1_no_spans_flagged_degenerate() {
        let gold = vec![tags(&["O", "O"])];
        let r = span_f1(&gold, &gold).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn metrics_invariant_to_sentence_order() {
        let gold = vec![tags(&["B-PER", "E-PER"]), tags(&["O", "S-LOC"])];
        let pred = vec![tags(&["B-PER", "O"]), tags(&["O", "S-LOC"])];
        let mut gold_r = gold.clone();
        let mut pred_r = pred.clone();
        gold_r.reverse();
        pred_r.reverse();
        assert_eq!(
            span_f1(&gold, &pred).unwrap(),
            span_f1(&gold_r, &pred_r).unwrap()
        );
        assert_eq!(
            token_accuracy(&gold, &pred).unwrap(),
            token_accuracy(&gold_r, &pred_r).unwrap()
        );
    }

    fn corpus_of(labels: &[&[&str]]) -> crate::corpus::types::RawCorpus {
        labels
            .iter()
            .map(|ls| {
                let toks: Vec<&str> = ls.iter().map(|_| "w").collect();
                (Sentence::from_strs(&toks), tags(ls))
            })
            .collect()
    }

    #[test]
    fn truncate_keeps_top_k() {
        // a:5, b:3, c:1 with K=2 -> c becomes "*"
        let corpus = corpus_of(&[
            &["a", "a", "a", "b"],
            &["a", "a", "b", "b", "c"],
        ]);
        let (out, vocab) = truncate_labels(&corpus, 2);
        assert_eq!(out[1].1, tags(&["a", "a", "b", "b", "*"]));
        assert_eq!(vocab.labels(), &["a", "b", "*"]);
        assert_eq!(vocab.star_index(), Some(2));
    }

    #[test]
    fn truncate_noop_when_k_large() {
        let corpus = corpus_of(&[&["a", "b"]]);
        let (out, vocab) = truncate_labels(&corpus, 10);
        assert_eq!(out, corpus);
        assert!(vocab.star_index().is_none());
    }

    #[test]
    fn truncate_fraction_matches_direct_count() {
        // Zipf-ish corpus: label i appears ~ N / (i+1) times
        let mut sents = Vec::new();
        for i in 0..20usize {
            let reps = 100 / (i + 1);
            for _ in 0..reps {
                sents.push([format!("l{i}")]);
            }
        }
        let corpus: crate::corpus::types::RawCorpus = sents
            .iter()
            .map(|l| (Sentence::from_strs(&["w"]), vec![l[0].clone()]))
            .collect();
        let k = 5;
        let (out, _) = truncate_labels(&corpus, k);
        let replaced = out.iter().filter(|(_, l)| l[0] == "*").count();
        // direct count: tokens whose label is not among the top-k by frequency
        let mut counts = std::collections::HashMap::new();
        for (_, l) in &corpus {
            *counts.entry(l[0].clone()).or_insert(0usize) += 1;
        }
        let mut freq: Vec<_> = counts.iter().collect();
        freq.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        let kept: std::collections::HashSet<_> =
            freq.iter().take(k).map(|(l, _)| (*l).clone()).collect();
        let expected = corpus.iter().filter(|(_, l)| !kept.contains(&l[0])).count();
        assert_eq!(replaced, expected);
    }
}
