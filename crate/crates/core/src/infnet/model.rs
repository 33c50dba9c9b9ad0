//! Inference networks A(x): feed-forward models trained to map a sentence
//! directly to a low-energy relaxed labeling. Three families: window CNNs,
//! (stacked) BLSTM taggers, and a seq2seq decoder with fixed position-based
//! attention.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabelVocab, RawCorpus, Sentence};
use crate::crf::vocab::{TokenVocab, PAD};
use crate::crf::{load_checkpoint, save_checkpoint, CheckpointError};
use crate::numgrad::{
    conv_window, dropout, softmax_rows, Binding, Blstm, Graph, Linear, LstmCell, Mode, NodeId,
    ParamId, ParamSet, Tensor,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Cnn,
    Blstm,
    Seq2Seq,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct InfNetConfig {
    pub family: Family,
    pub word_dim: usize,
    /// H: filters per CNN feature map / LSTM hidden size.
    pub hidden: usize,
    /// CNN window half-widths, e.g. {0,1} or {0,2}.
    pub cnn_windows: (usize, usize),
    /// BLSTM stack depth (>= 2 only for the blstm family).
    pub layers: usize,
    /// Embedding dimension for the previous predicted label (seq2seq).
    pub label_dim: usize,
    /// Inter-layer dropout for stacked BLSTMs, train mode only.
    pub dropout: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for InfNetConfig {
    fn default() -> Self {
        InfNetConfig {
            family: Family::Blstm,
            word_dim: 16,
            hidden: 32,
            cnn_windows: (0, 1),
            layers: 1,
            label_dim: 8,
            dropout: 0.0,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
enum FamilyArch {
    Cnn {
        conv_a: Linear,
        conv_b: Linear,
        out: Linear,
    },
    Blstm {
        stack: Vec<Blstm>,
        out: Linear,
    },
    Seq2Seq {
        encoder: Blstm,
        label_emb: ParamId,
        decoder: LstmCell,
        /// W_s: maps [decoder hidden, encoder hidden at t] to label logits.
        out: Linear,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InfNetModel {
    pub config: InfNetConfig,
    pub word_vocab: TokenVocab,
    pub label_vocab: LabelVocab,
    pub params: ParamSet,
    word_emb: ParamId,
    arch: FamilyArch,
}

/// Index of the beginning-of-sequence row in the previous-label embedding.
fn bos_index(num_labels: usize) -> usize {
    num_labels
}

impl InfNetModel {
    pub fn new(config: InfNetConfig, train_corpus: &RawCorpus, label_vocab: LabelVocab) -> Self {
        assert!(
            config.layers == 1 || config.family == Family::Blstm,
            "multi-layer only supported for the blstm family"
        );
        assert!(config.layers >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let word_vocab = TokenVocab::from_corpus(train_corpus);
        let l = label_vocab.len();
        let scale = config.init_scale;
        let d = config.word_dim;
        let h = config.hidden;

        let word_emb = params.add(
            "word_emb",
            Tensor::rand_uniform(word_vocab.len(), d, -scale, scale, &mut rng),
        );
        let arch = match config.family {
            Family::Cnn => {
                let (wa, wb) = config.cnn_windows;
                let conv_a = Linear::new(&mut params, "conv_a", (2 * wa + 1) * d, h, scale, &mut rng);
                let conv_b = Linear::new(&mut params, "conv_b", (2 * wb + 1) * d, h, scale, &mut rng);
                let out = Linear::new(&mut params, "out", 2 * h, l, scale, &mut rng);
                FamilyArch::Cnn { conv_a, conv_b, out }
            }
            Family::Blstm => {
                let mut stack = Vec::with_capacity(config.layers);
                let mut d_in = d;
                for i in 0..config.layers {
                    stack.push(Blstm::new(&mut params, &format!("blstm{i}"), d_in, h, scale, &mut rng));
                    d_in = 2 * h;
                }
                let out = Linear::new(&mut params, "out", 2 * h, l, scale, &mut rng);
                FamilyArch::Blstm { stack, out }
            }
            Family::Seq2Seq => {
                let encoder = Blstm::new(&mut params, "encoder", d, h, scale, &mut rng);
                // one extra row for the BOS pseudo-label
                let label_emb = params.add(
                    "label_emb",
                    Tensor::rand_uniform(l + 1, config.label_dim, -scale, scale, &mut rng),
                );
                let decoder =
                    LstmCell::new(&mut params, "decoder", config.label_dim, h, scale, &mut rng);
                let out = Linear::new(&mut params, "w_s", h + 2 * h, l, scale, &mut rng);
                FamilyArch::Seq2Seq {
                    encoder,
                    label_emb,
                    decoder,
                    out,
                }
            }
        };
        InfNetModel {
            config,
            word_vocab,
            label_vocab,
            params,
            word_emb,
            arch,
        }
    }

    pub fn num_labels(&self) -> usize {
        self.label_vocab.len()
    }

    /// Forward pass producing the n x L logits node. The seq2seq family
    /// decodes left to right feeding the previous *predicted* (argmax)
    /// label; `teacher_forcing` substitutes gold labels instead (ablation
    /// only).
    pub fn logits_node(
        &self,
        g: &mut Graph,
        bind: &Binding,
        sentence: &Sentence,
        mode: Mode,
        teacher_forcing: Option<&[usize]>,
        rng: &mut ChaCha8Rng,
    ) -> NodeId {
        assert!(sentence.len() >= 1);
        let word_ids: Vec<usize> = sentence
            .tokens()
            .iter()
            .map(|t| self.word_vocab.lookup(t))
            .collect();
        let emb = g.gather_rows(bind.node(self.word_emb), &word_ids);

        match &self.arch {
            FamilyArch::Cnn { conv_a, conv_b, out } => {
                let pad = g.gather_rows(bind.node(self.word_emb), &[PAD]);
                let (wa, wb) = self.config.cnn_windows;
                let fa = conv_window(g, bind, emb, pad, wa, conv_a);
                let fb = conv_window(g, bind, emb, pad, wb, conv_b);
                let feats = g.concat_cols(&[fa, fb]);
                out.forward(g, bind, feats)
            }
            FamilyArch::Blstm { stack, out } => {
                let mut x = emb;
                for (i, layer) in stack.iter().enumerate() {
                    if i > 0 {
                        x = dropout(g, x, self.config.dropout, mode, rng);
                    }
                    x = layer.encode(g, bind, x);
                }
                out.forward(g, bind, x)
            }
            FamilyArch::Seq2Seq {
                encoder,
                label_emb,
                decoder,
                out,
            } => {
                let enc = encoder.encode(g, bind, emb); // n x 2H
                let n = sentence.len();
                let h = self.config.hidden;
                let mut dh = g.constant(Tensor::zeros(1, h));
                let mut dc = g.constant(Tensor::zeros(1, h));
                let mut prev_label = bos_index(self.num_labels());
                let mut rows = Vec::with_capacity(n);
                for t in 0..n {
                    let prev = g.gather_rows(bind.node(*label_emb), &[prev_label]);
                    let (h2, c2) = decoder.step(g, bind, prev, dh, dc);
                    dh = h2;
                    dc = c2;
                    let st = g.slice_rows(enc, t, t + 1); // fixed attention
                    let cat = g.concat_cols(&[dh, st]);
                    let logits_t = out.forward(g, bind, cat);
                    prev_label = match teacher_forcing {
                        Some(gold) => gold[t],
                        None => g.value(logits_t).argmax_rows()[0],
                    };
                    rows.push(logits_t);
                }
                g.concat_rows(&rows)
            }
        }
    }

    /// Evaluation-mode (logits, row-softmax distributions) for a sentence.
    pub fn forward_eval(&self, sentence: &Sentence) -> (Tensor, Tensor) {
        let mut g = Graph::new();
        let bind = self.params.bind(&mut g, false);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let node = self.logits_node(&mut g, &bind, sentence, Mode::Eval, None, &mut rng);
        let logits = g.value(node).clone();
        let dists = softmax_rows(&logits);
        (logits, dists)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), CheckpointError> {
        save_checkpoint(path, "infnet", self)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CheckpointError> {
        let mut model: InfNetModel = load_checkpoint(path, "infnet")?;
        model.word_vocab.rebuild_index();
        model.label_vocab.rebuild_index();
        Ok(model)
    }
}

/// Row-wise argmax with lowest-index tie-break (the same rule Viterbi uses).
pub fn discretize(dists_or_logits: &Tensor) -> Vec<usize> {
    dists_or_logits.argmax_rows()
}

/// Sum over positions of the cross-entropy of the gold one-hot against the
/// predicted distribution. Zero predicted probability at the gold label is
/// clamped at 1e-12.
pub const PROB_CLAMP: f64 = 1e-12;

pub fn token_loss(gold: &[usize], dists: &Tensor) -> f64 {
    assert_eq!(gold.len(), dists.rows, "token_loss length mismatch");
    let mut loss = 0.0;
    for (t, &y) in gold.iter().enumerate() {
        loss -= dists.get(t, y).max(PROB_CLAMP).ln();
    }
    loss
}

/// Graph version of `token_loss`, taking the distribution node.
pub fn token_loss_node(g: &mut Graph, gold: &[usize], dists: NodeId, num_labels: usize) -> NodeId {
    let y = g.constant(crate::crf::one_hot(gold, num_labels));
    let ln = g.ln_clamp(dists, PROB_CLAMP);
    let picked = g.mul(y, ln);
    let s = g.sum_all(picked);
    g.scale(s, -1.0)
}
