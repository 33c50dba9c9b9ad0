//! The measurement harness: runs a set of inference methods over one frozen
//! energy model and corpus, producing accuracy, mean energy, search error,
//! and throughput, plus perplexity/search-error correlations.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lm::{lm_perplexity, LmModel};
use super::stats::{spearman_rho, StatsError};
use crate::corpus::{token_accuracy, EncodedCorpus, LabelVocab};
use crate::crf::{relaxed_energy, viterbi, EnergyModel};
use crate::infnet::{discretize, InfNetModel};
use crate::numgrad::Tensor;
use crate::relaxinf::{
    gd_minimize, instance_tailor, warm_start_gd, GdConfig, GdError, GdInit, RefineConfig,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Method {
    Viterbi,
    Gd { iterations: usize, lr: f64 },
    Infnet,
    InfnetDiscretized,
    InstanceTailored { epochs: usize },
    WarmStart { iterations: usize },
    LocalBaseline,
}

impl Method {
    pub fn id(&self) -> String {
        match self {
            Method::Viterbi => "viterbi".into(),
            Method::Gd { iterations, lr } => format!("gd(N={iterations},lr={lr})"),
            Method::Infnet => "infnet".into(),
            Method::InfnetDiscretized => "infnet-discretized".into(),
            Method::InstanceTailored { epochs } => format!("instance-tailored(N={epochs})"),
            Method::WarmStart { iterations } => format!("warm-start(N={iterations})"),
            Method::LocalBaseline => "local-baseline".into(),
        }
    }

    fn needs_infnet(&self) -> bool {
        matches!(
            self,
            Method::Infnet
                | Method::InfnetDiscretized
                | Method::InstanceTailored { .. }
                | Method::WarmStart { .. }
        )
    }
}

#[derive(Clone, Debug)]
pub struct InferenceOutcome {
    pub method: String,
    pub labels: Vec<usize>,
    /// Energy used for the search-error comparison: discrete for discrete
    /// outputs, relaxed for distribution-valued outputs.
    pub energy: f64,
    pub relaxed_energy: Option<f64>,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub token_accuracy: f64,
    pub mean_energy: f64,
    pub mean_search_error: f64,
    /// Sentences per second, median of the timed passes.
    pub throughput: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerSentenceRow {
    pub method: String,
    pub sentence: usize,
    pub length: usize,
    pub energy: f64,
    pub search_error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<MethodRow>,
    pub per_sentence: Vec<PerSentenceRow>,
    pub fingerprint: String,
    pub seed: u64,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    /// Aligned plain-text table of the per-method aggregates.
    pub fn render_table(&self) -> String {
        let headers = [
            "method",
            "token_acc",
            "mean_energy",
            "mean_search_err",
            "sents_per_sec",
        ];
        let cells: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.method.clone(),
                    format!("{:.2}", r.token_accuracy),
                    format!("{:.4}", r.mean_energy),
                    format!("{:.4}", r.mean_search_error),
                    format!("{:.1}", r.throughput),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let fmt_row = |cols: &[String], widths: &[usize]| {
            cols.iter()
                .zip(widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let head: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
        out.push_str(&fmt_row(&head, &widths));
        out.push('\n');
        for row in &cells {
            out.push_str(&fmt_row(row, &widths));
            out.push('\n');
        }
        out
    }

    /// Per-sentence CSV for external plotting.
    pub fn per_sentence_csv(&self) -> String {
        let mut out = String::from("method,sentence,length,energy,search_error\n");
        for r in &self.per_sentence {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.method, r.sentence, r.length, r.energy, r.search_error
            ));
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Timed passes; the reported time is their median.
    pub passes: usize,
    /// Untimed warm-up passes before measurement.
    pub warmup: usize,
    /// Base settings for gradient-descent methods (iterations/lr overridden
    /// per method).
    pub gd: GdConfig,
    pub refine: RefineConfig,
    pub fingerprint: String,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            passes: 3,
            warmup: 1,
            gd: GdConfig::default(),
            refine: RefineConfig::default(),
            fingerprint: String::new(),
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("method {0} requires an inference network, but none was supplied")]
    MissingInfnet(String),
    #[error("method {0} requires a local-baseline network, but none was supplied")]
    MissingBaseline(String),
    #[error("empty evaluation corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Gd(#[from] GdError),
    #[error("method {method}, sentence {sentence}: {source}")]
    Stats {
        method: String,
        sentence: usize,
        source: StatsError,
    },
}

struct SentenceContext {
    unary: Tensor,
    vit_labels: Vec<usize>,
    vit_energy: f64,
}

fn run_method(
    method: &Method,
    idx: usize,
    ctx: &SentenceContext,
    corpus: &EncodedCorpus,
    energy_model: &EnergyModel,
    infnet: Option<&InfNetModel>,
    baseline: Option<&InfNetModel>,
    config: &BenchConfig,
) -> Result<InferenceOutcome, BenchError> {
    let sentence = &corpus[idx].0;
    let w = energy_model.transitions();
    let outcome = match method {
        Method::Viterbi => InferenceOutcome {
            method: method.id(),
            labels: ctx.vit_labels.clone(),
            energy: ctx.vit_energy,
            relaxed_energy: None,
            iterations: 0,
        },
        Method::Gd { iterations, lr } => {
            let gd = GdConfig {
                iterations: *iterations,
                lr: *lr,
                ..config.gd.clone()
            };
            let out = gd_minimize(&ctx.unary, w, &gd)?;
            InferenceOutcome {
                method: method.id(),
                labels: out.labels,
                energy: out.energy,
                relaxed_energy: Some(*out.trajectory.last().unwrap()),
                iterations: *iterations,
            }
        }
        Method::Infnet | Method::InfnetDiscretized => {
            let net = infnet.ok_or_else(|| BenchError::MissingInfnet(method.id()))?;
            let (logits, dists) = net.forward_eval(sentence);
            let labels = discretize(&logits);
            let relaxed = relaxed_energy(&ctx.unary, w, &dists);
            let energy = if *method == Method::Infnet {
                relaxed
            } else {
                crate::crf::discrete_energy(&ctx.unary, w, &labels)
            };
            InferenceOutcome {
                method: method.id(),
                labels,
                energy,
                relaxed_energy: Some(relaxed),
                iterations: 0,
            }
        }
        Method::InstanceTailored { epochs } => {
            let net = infnet.ok_or_else(|| BenchError::MissingInfnet(method.id()))?;
            let refine = RefineConfig {
                epochs: *epochs,
                ..config.refine.clone()
            };
            let out = instance_tailor(sentence, net, energy_model, &refine);
            InferenceOutcome {
                method: method.id(),
                labels: out.labels,
                energy: out.energy,
                relaxed_energy: None,
                iterations: out.epoch,
            }
        }
        Method::WarmStart { iterations } => {
            let net = infnet.ok_or_else(|| BenchError::MissingInfnet(method.id()))?;
            let gd = GdConfig {
                iterations: *iterations,
                init: GdInit::WarmStart,
                ..config.gd.clone()
            };
            let out = warm_start_gd(sentence, net, energy_model, &gd)?;
            InferenceOutcome {
                method: method.id(),
                labels: out.labels,
                energy: out.energy,
                relaxed_energy: Some(*out.trajectory.last().unwrap()),
                iterations: *iterations,
            }
        }
        Method::LocalBaseline => {
            let net = baseline.ok_or_else(|| BenchError::MissingBaseline(method.id()))?;
            let (logits, _) = net.forward_eval(sentence);
            let labels = discretize(&logits);
            let energy = crate::crf::discrete_energy(&ctx.unary, w, &labels);
            InferenceOutcome {
                method: method.id(),
                labels,
                energy,
                relaxed_energy: None,
                iterations: 0,
            }
        }
    };
    Ok(outcome)
}

/// Run every requested method over the same sentences and model snapshot.
/// Outcomes are computed once (untimed); timing then re-runs each method's
/// full pipeline single-threaded, `warmup` untimed passes followed by
/// `passes` timed passes whose median yields the throughput.
pub fn run_bench(
    corpus: &EncodedCorpus,
    energy_model: &EnergyModel,
    infnet: Option<&InfNetModel>,
    baseline: Option<&InfNetModel>,
    methods: &[Method],
    config: &BenchConfig,
) -> Result<BenchReport, BenchError> {
    if corpus.is_empty() {
        return Err(BenchError::EmptyCorpus);
    }
    // fail fast on missing models before any expensive work
    for m in methods {
        if m.needs_infnet() && infnet.is_none() {
            return Err(BenchError::MissingInfnet(m.id()));
        }
        if matches!(m, Method::LocalBaseline) && baseline.is_none() {
            return Err(BenchError::MissingBaseline(m.id()));
        }
    }

    let vocab: &LabelVocab = &energy_model.label_vocab;
    let contexts: Vec<SentenceContext> = corpus
        .iter()
        .map(|(s, _)| {
            let unary = energy_model.unary_table(s);
            let (vit_labels, vit_energy) = viterbi(&unary, energy_model.transitions());
            SentenceContext {
                unary,
                vit_labels,
                vit_energy,
            }
        })
        .collect();
    let gold: Vec<Vec<String>> = corpus.iter().map(|(_, g)| vocab.decode(g)).collect();

    let mut rows = Vec::with_capacity(methods.len());
    let mut per_sentence = Vec::new();
    for method in methods {
        let mut energies = Vec::with_capacity(corpus.len());
        let mut gaps = Vec::with_capacity(corpus.len());
        let mut pred = Vec::with_capacity(corpus.len());
        for idx in 0..corpus.len() {
            let out = run_method(
                method,
                idx,
                &contexts[idx],
                corpus,
                energy_model,
                infnet,
                baseline,
                config,
            )?;
            let gap = out.energy - contexts[idx].vit_energy;
            if gap < -1e-9 {
                return Err(BenchError::Stats {
                    method: method.id(),
                    sentence: idx,
                    source: StatsError::NegativeSearchError {
                        gap,
                        len: corpus[idx].0.len(),
                    },
                });
            }
            per_sentence.push(PerSentenceRow {
                method: method.id(),
                sentence: idx,
                length: corpus[idx].0.len(),
                energy: out.energy,
                search_error: gap,
            });
            energies.push(out.energy);
            gaps.push(gap);
            pred.push(vocab.decode(&out.labels));
        }

        let time_pass = || -> Result<f64, BenchError> {
            let start = Instant::now();
            for idx in 0..corpus.len() {
                run_method(
                    method,
                    idx,
                    &contexts[idx],
                    corpus,
                    energy_model,
                    infnet,
                    baseline,
                    config,
                )?;
            }
            Ok(start.elapsed().as_secs_f64())
        };
        for _ in 0..config.warmup {
            time_pass()?;
        }
        let mut times = Vec::with_capacity(config.passes);
        for _ in 0..config.passes {
            times.push(time_pass()?);
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = times[times.len() / 2];

        let n = corpus.len() as f64;
        rows.push(MethodRow {
            method: method.id(),
            token_accuracy: token_accuracy(&gold, &pred).unwrap_or(0.0),
            mean_energy: energies.iter().sum::<f64>() / n,
            mean_search_error: gaps.iter().sum::<f64>() / n,
            throughput: n / median.max(f64::MIN_POSITIVE),
        });
    }

    Ok(BenchReport {
        rows,
        per_sentence,
        fingerprint: config.fingerprint.clone(),
        seed: config.seed,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MethodCorrelation {
    pub method: String,
    /// Spearman's rho against word-LM perplexity; None when undefined
    /// (constant search error, e.g. an exact method).
    pub rho_word: Option<f64>,
    /// Same against the gold-label-sequence LM perplexity.
    pub rho_label: Option<f64>,
}

/// Correlate per-sentence search errors with per-sentence perplexities.
pub fn correlate_from_parts(
    method: &str,
    search_errors: &[f64],
    word_ppl: &[f64],
    label_ppl: &[f64],
) -> MethodCorrelation {
    let rho = |ppl: &[f64]| spearman_rho(ppl, search_errors).ok();
    MethodCorrelation {
        method: method.to_string(),
        rho_word: rho(word_ppl),
        rho_label: rho(label_ppl),
    }
}

/// For every method in the report: Spearman's rho between sentence
/// perplexity (word LM / gold-label LM) and that method's search error.
pub fn correlate_search_error(
    corpus: &EncodedCorpus,
    label_vocab: &LabelVocab,
    report: &BenchReport,
    word_lm: &LmModel,
    label_lm: &LmModel,
) -> Vec<MethodCorrelation> {
    let word_ppl: Vec<f64> = corpus
        .iter()
        .map(|(s, _)| lm_perplexity(word_lm, s.tokens()))
        .collect();
    let label_ppl: Vec<f64> = corpus
        .iter()
        .map(|(_, g)| lm_perplexity(label_lm, &label_vocab.decode(g)))
        .collect();
    let mut out = Vec::new();
    let methods: Vec<String> = report.rows.iter().map(|r| r.method.clone()).collect();
    for m in methods {
        let errs: Vec<f64> = report
            .per_sentence
            .iter()
            .filter(|r| r.method == m)
            .map(|r| r.search_error)
            .collect();
        out.push(correlate_from_parts(&m, &errs, &word_ppl, &label_ppl));
    }
    out
}
