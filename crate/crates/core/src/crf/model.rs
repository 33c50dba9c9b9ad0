//! The BLSTM-CRF energy model: word embeddings (optionally concatenated
//! with a character-CNN embedding), a BLSTM feature network, a label
//! projection matrix U, and a label-transition matrix W.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::energy::{energy_node, log_partition_node, one_hot};
use super::vocab::{TokenVocab, PAD};
use crate::corpus::{LabelVocab, RawCorpus, Sentence};
use crate::numgrad::{
    conv_window, dropout, Binding, Blstm, Graph, Linear, Mode, NodeId, ParamId, ParamSet, Tensor,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Fixed word embeddings, no char-CNN, no dropout.
    Base,
    /// Fine-tuned embeddings + char-CNN + dropout.
    Plus,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct CrfConfig {
    pub variant: Variant,
    pub word_dim: usize,
    /// BLSTM hidden size H; the feature width is 2H.
    pub hidden: usize,
    pub char_dim: usize,
    /// Number of char-CNN filters (filter width is fixed at 3 characters).
    pub char_hidden: usize,
    pub dropout: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for CrfConfig {
    fn default() -> Self {
        CrfConfig {
            variant: Variant::Base,
            word_dim: 16,
            hidden: 100,
            char_dim: 30,
            char_hidden: 16,
            dropout: 0.5,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CharCnn {
    emb: ParamId,
    conv: Linear,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Arch {
    word_emb: ParamId,
    char: Option<CharCnn>,
    blstm: Blstm,
    /// 2H x L projection: unary[t][i] = u_i . f(x, t).
    u: ParamId,
    /// L x L transition matrix.
    w_trans: ParamId,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyModel {
    pub config: CrfConfig,
    pub word_vocab: TokenVocab,
    pub char_vocab: Option<TokenVocab>,
    pub label_vocab: LabelVocab,
    pub params: ParamSet,
    arch: Arch,
}

impl EnergyModel {
    pub fn new(config: CrfConfig, train_corpus: &RawCorpus, label_vocab: LabelVocab) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let word_vocab = TokenVocab::from_corpus(train_corpus);
        let l = label_vocab.len();
        let scale = config.init_scale;

        let word_emb = params.add(
            "word_emb",
            Tensor::rand_uniform(word_vocab.len(), config.word_dim, -scale, scale, &mut rng),
        );
        let (char_vocab, char, feat_in) = if config.variant == Variant::Plus {
            let cv = TokenVocab::chars_from_corpus(train_corpus);
            let emb = params.add(
                "char_emb",
                Tensor::rand_uniform(cv.len(), config.char_dim, -scale, scale, &mut rng),
            );
            let conv = Linear::new(
                &mut params,
                "char_conv",
                3 * config.char_dim,
                config.char_hidden,
                scale,
                &mut rng,
            );
            (
                Some(cv),
                Some(CharCnn { emb, conv }),
                config.word_dim + config.char_hidden,
            )
        } else {
            (None, None, config.word_dim)
        };
        let blstm = Blstm::new(&mut params, "blstm", feat_in, config.hidden, scale, &mut rng);
        let u = params.add(
            "u",
            Tensor::rand_uniform(2 * config.hidden, l, -scale, scale, &mut rng),
        );
        let w_trans = params.add("w_trans", Tensor::rand_uniform(l, l, -scale, scale, &mut rng));

        EnergyModel {
            config,
            word_vocab,
            char_vocab,
            label_vocab,
            params,
            arch: Arch {
                word_emb,
                char,
                blstm,
                u,
                w_trans,
            },
        }
    }

    pub fn num_labels(&self) -> usize {
        self.label_vocab.len()
    }

    pub fn transition_param(&self) -> ParamId {
        self.arch.w_trans
    }

    /// Index of the word-embedding parameter; frozen during training for
    /// the base variant (only `plus` fine-tunes embeddings).
    pub fn word_emb_param(&self) -> ParamId {
        self.arch.word_emb
    }

    /// Build the n x L unary-potential node for a sentence. Dropout fires
    /// only in train mode.
    pub fn unary_node(
        &self,
        g: &mut Graph,
        bind: &Binding,
        sentence: &Sentence,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> NodeId {
        let rate = if self.config.variant == Variant::Plus {
            self.config.dropout
        } else {
            0.0
        };
        let word_ids: Vec<usize> = sentence
            .tokens()
            .iter()
            .map(|t| self.word_vocab.lookup(t))
            .collect();
        let mut emb = g.gather_rows(bind.node(self.arch.word_emb), &word_ids);

        if let (Some(cnn), Some(cv)) = (&self.arch.char, &self.char_vocab) {
            let mut per_token = Vec::with_capacity(sentence.len());
            for tok in sentence.tokens() {
                let char_ids: Vec<usize> =
                    tok.chars().map(|c| cv.lookup(&c.to_string())).collect();
                let chars = g.gather_rows(bind.node(cnn.emb), &char_ids);
                let chars = dropout(g, chars, rate, mode, rng);
                let pad = g.gather_rows(bind.node(cnn.emb), &[PAD]);
                let fm = conv_window(g, bind, chars, pad, 1, &cnn.conv);
                per_token.push(g.max_over_rows(fm));
            }
            let char_emb = g.concat_rows(&per_token);
            emb = g.concat_cols(&[emb, char_emb]);
        }

        let emb = dropout(g, emb, rate, mode, rng);
        let feats = self.arch.blstm.encode(g, bind, emb);
        let feats = dropout(g, feats, rate, mode, rng);
        g.matmul(feats, bind.node(self.arch.u))
    }

    /// Evaluation-mode unary table (deterministic, no dropout).
    pub fn unary_table(&self, sentence: &Sentence) -> Tensor {
        let mut g = Graph::new();
        let bind = self.params.bind(&mut g, false);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let node = self.unary_node(&mut g, &bind, sentence, Mode::Eval, &mut rng);
        g.value(node).clone()
    }

    pub fn transitions(&self) -> &Tensor {
        self.params.get(self.arch.w_trans)
    }

    /// Conditional log-likelihood loss node: log Z + E(x, gold). Always
    /// nonnegative; differentiable w.r.t. all bound model parameters.
    pub fn nll_node(
        &self,
        g: &mut Graph,
        bind: &Binding,
        sentence: &Sentence,
        gold: &[usize],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> NodeId {
        assert_eq!(sentence.len(), gold.len(), "gold length mismatch");
        let unary = self.unary_node(g, bind, sentence, mode, rng);
        let w = bind.node(self.arch.w_trans);
        let log_z = log_partition_node(g, unary, w);
        let y = g.constant(one_hot(gold, self.num_labels()));
        let e = energy_node(g, unary, w, y);
        g.add(log_z, e)
    }

    /// Viterbi decode of one sentence under the current parameters.
    pub fn decode(&self, sentence: &Sentence) -> (Vec<usize>, f64) {
        let unary = self.unary_table(sentence);
        super::energy::viterbi(&unary, self.transitions())
    }
}

/// Versioned JSON checkpoint container shared by all model kinds.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub format_version: u32,
    pub kind: String,
    pub model: T,
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("checkpoint kind mismatch: expected `{expected}`, found `{found}`")]
    KindMismatch { expected: String, found: String },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
}

pub fn save_checkpoint<T: Serialize>(
    path: &std::path::Path,
    kind: &str,
    model: &T,
) -> Result<(), CheckpointError> {
    let ckpt = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        kind: kind.to_string(),
        model,
    };
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(file, &ckpt)?;
    Ok(())
}

pub fn load_checkpoint<T: for<'de> Deserialize<'de>>(
    path: &std::path::Path,
    kind: &str,
) -> Result<T, CheckpointError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let ckpt: Checkpoint<T> = serde_json::from_reader(file)?;
    if ckpt.format_version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(ckpt.format_version));
    }
    if ckpt.kind != kind {
        return Err(CheckpointError::KindMismatch {
            expected: kind.to_string(),
            found: ckpt.kind,
        });
    }
    Ok(ckpt.model)
}

impl EnergyModel {
    pub fn save(&self, path: &std::path::Path) -> Result<(), CheckpointError> {
        save_checkpoint(path, "crf", self)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CheckpointError> {
        let mut model: EnergyModel = load_checkpoint(path, "crf")?;
        model.word_vocab.rebuild_index();
        if let Some(cv) = &mut model.char_vocab {
            cv.rebuild_index();
        }
        model.label_vocab.rebuild_index();
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sentence;

    fn tiny_corpus() -> RawCorpus {
        vec![
            (
                Sentence::from_strs(&["the", "dog", "runs"]),
                vec!["D".into(), "N".into(), "V".into()],
            ),
            (
                Sentence::from_strs(&["a", "cat", "sleeps"]),
                vec!["D".into(), "N".into(), "V".into()],
            ),
        ]
    }

    fn tiny_model(variant: Variant) -> EnergyModel {
        let corpus = tiny_corpus();
        let vocab = LabelVocab::from_corpus(&corpus);
        EnergyModel::new(
            CrfConfig {
                variant,
                word_dim: 5,
                hidden: 4,
                char_dim: 3,
                char_hidden: 4,
                dropout: 0.5,
                init_scale: 0.1,
                seed: 42,
            },
            &corpus,
            vocab,
        )
    }

    #[test]
    fn zero_projection_gives_zero_unary() {
        let mut model = tiny_model(Variant::Base);
        let u = model.arch.u;
        *model.params.get_mut(u) = Tensor::zeros(8, 3);
        let table = model.unary_table(&Sentence::from_strs(&["the", "dog"]));
        assert!(table.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eval_mode_deterministic() {
        let model = tiny_model(Variant::Plus);
        let s = Sentence::from_strs(&["the", "dog", "runs"]);
        assert_eq!(model.unary_table(&s), model.unary_table(&s));
    }

    #[test]
    fn unary_gradcheck() {
        let mut model = tiny_model(Variant::Base);
        let s = Sentence::from_strs(&["the", "dog"]);
        let model2 = model.clone();
        let err = crate::numgrad::grad_check(
            &mut model.params,
            move |g, bind| {
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                let u = model2.unary_node(g, bind, &s, Mode::Eval, &mut rng);
                g.sum_all(u)
            },
            1e-5,
        );
        assert!(err <= 1e-4, "rel err {err}");
    }

    #[test]
    fn nll_nonnegative_and_gradcheck() {
        for variant in [Variant::Base, Variant::Plus] {
            let mut model = tiny_model(variant);
            let s = Sentence::from_strs(&["the", "dog", "runs"]);
            let gold = vec![0usize, 1, 2];
            let model2 = model.clone();
            let s2 = s.clone();
            let gold2 = gold.clone();
            let err = crate::numgrad::grad_check(
                &mut model.params,
                move |g, bind| {
                    let mut rng = ChaCha8Rng::seed_from_u64(0);
                    model2.nll_node(g, bind, &s2, &gold2, Mode::Eval, &mut rng)
                },
                1e-5,
            );
            assert!(err <= 1e-4, "rel err {err} ({variant:?})");

            let mut g = Graph::new();
            let bind = model.params.bind(&mut g, false);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let loss = model.nll_node(&mut g, &bind, &s, &gold, Mode::Eval, &mut rng);
            assert!(g.scalar(loss).unwrap() >= 0.0);
        }
    }

    #[test]
    fn nll_zero_for_single_label() {
        let corpus: RawCorpus = vec![(
            Sentence::from_strs(&["a", "b"]),
            vec!["X".into(), "X".into()],
        )];
        let vocab = LabelVocab::from_corpus(&corpus);
        let model = EnergyModel::new(
            CrfConfig {
                word_dim: 3,
                hidden: 2,
                ..CrfConfig::default()
            },
            &corpus,
            vocab,
        );
        let mut g = Graph::new();
        let bind = model.params.bind(&mut g, false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = Sentence::from_strs(&["a", "b"]);
        let loss = model.nll_node(&mut g, &bind, &s, &[0, 0], Mode::Eval, &mut rng);
        assert!(g.scalar(loss).unwrap().abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip_bit_exact() {
        let model = tiny_model(Variant::Plus);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("crf.json");
        model.save(&path).unwrap();
        let loaded = EnergyModel::load(&path).unwrap();
        let s = Sentence::from_strs(&["the", "cat", "sleeps"]);
        assert_eq!(model.unary_table(&s), loaded.unary_table(&s));
        assert_eq!(model.transitions(), loaded.transitions());
    }

    #[test]
    fn checkpoint_kind_mismatch() {
        let model = tiny_model(Variant::Base);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_checkpoint(&path, "other", &model).unwrap();
        assert!(matches!(
            EnergyModel::load(&path),
            Err(CheckpointError::KindMismatch { .. })
        ));
    }
}
