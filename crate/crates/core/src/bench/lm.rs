//! Single-direction LSTM language models over symbol sequences (words or
//! label strings), used to stratify search error by sentence typicality.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crf::one_hot;
use crate::infnet::PROB_CLAMP;
use crate::numgrad::{Graph, Linear, LstmCell, ParamId, ParamSet, SgdMomentum, Tensor};

/// Symbol classes: index 0 is UNK (every out-of-vocabulary symbol), the last
/// index is EOS, which doubles as the begin-of-sequence input.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LmVocab {
    symbols: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

pub const LM_UNK: usize = 0;

impl LmVocab {
    fn from_sequences(sequences: &[Vec<String>]) -> Self {
        let mut symbols = vec!["<unk>".to_string()];
        let mut seen = HashMap::new();
        for seq in sequences {
            for s in seq {
                if !seen.contains_key(s) {
                    seen.insert(s.clone(), ());
                    symbols.push(s.clone());
                }
            }
        }
        symbols.push("<eos>".to_string());
        let mut v = LmVocab {
            symbols,
            index: HashMap::new(),
        };
        v.rebuild_index();
        v
    }

    pub fn rebuild_index(&mut self) {
        self.index = self
            .symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
    }

    /// Number of prediction classes, EOS included.
    pub fn num_classes(&self) -> usize {
        self.symbols.len()
    }

    pub fn eos(&self) -> usize {
        self.symbols.len() - 1
    }

    pub fn lookup(&self, symbol: &str) -> usize {
        self.index.get(symbol).copied().unwrap_or(LM_UNK)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub emb_dim: usize,
    pub hidden: usize,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            emb_dim: 16,
            hidden: 64,
            lr: 0.05,
            momentum: 0.9,
            epochs: 10,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum LmError {
    #[error("empty language-model training set")]
    EmptyTrain,
    #[error("language-model training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LmModel {
    pub config: LmConfig,
    pub vocab: LmVocab,
    pub params: ParamSet,
    emb: ParamId,
    cell: LstmCell,
    out: Linear,
}

impl LmModel {
    pub fn new(config: LmConfig, sequences: &[Vec<String>]) -> Self {
        let vocab = LmVocab::from_sequences(sequences);
        let c = vocab.num_classes();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let init = |r: usize, cc: usize, rng: &mut ChaCha8Rng| {
            if config.init_scale == 0.0 {
                Tensor::zeros(r, cc)
            } else {
                Tensor::rand_uniform(r, cc, -config.init_scale, config.init_scale, rng)
            }
        };
        let emb = params.add("emb", init(c, config.emb_dim, &mut rng));
        let cell = LstmCell::new(
            &mut params,
            "lstm",
            config.emb_dim,
            config.hidden,
            config.init_scale,
            &mut rng,
        );
        let out = Linear::new(&mut params, "out", config.hidden, c, config.init_scale, &mut rng);
        LmModel {
            config,
            vocab,
            params,
            emb,
            cell,
            out,
        }
    }

    fn encode(&self, sequence: &[String]) -> (Vec<usize>, Vec<usize>) {
        let ids: Vec<usize> = sequence.iter().map(|s| self.vocab.lookup(s)).collect();
        let eos = self.vocab.eos();
        let mut inputs = vec![eos];
        inputs.extend(&ids);
        let mut targets = ids;
        targets.push(eos);
        (inputs, targets)
    }

    /// Summed negative log probability of the sequence plus EOS, as a graph
    /// node (for training) built on clamped log-probabilities.
    fn nll_node(
        &self,
        g: &mut Graph,
        bind: &crate::numgrad::Binding,
        sequence: &[String],
    ) -> crate::numgrad::NodeId {
        let (inputs, targets) = self.encode(sequence);
        let emb = g.gather_rows(bind.node(self.emb), &inputs);
        let hs = self.cell.run(g, bind, emb, false);
        let rows = g.concat_rows(&hs);
        let logits = self.out.forward(g, bind, rows);
        let dists = g.softmax_rows(logits);
        let gold = g.constant(one_hot(&targets, self.vocab.num_classes()));
        let ln = g.ln_clamp(dists, PROB_CLAMP);
        let picked = g.mul(gold, ln);
        let s = g.sum_all(picked);
        g.scale(s, -1.0)
    }

    /// Summed negative log probability (nats), EOS included.
    pub fn nll(&self, sequence: &[String]) -> f64 {
        let mut g = Graph::new();
        let bind = self.params.bind(&mut g, false);
        let node = self.nll_node(&mut g, &bind, sequence);
        g.scalar(node).expect("finite language-model forward")
    }
}

pub fn train_lm(sequences: &[Vec<String>], config: &LmConfig) -> Result<LmModel, LmError> {
    if sequences.is_empty() {
        return Err(LmError::EmptyTrain);
    }
    let mut model = LmModel::new(config.clone(), sequences);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = SgdMomentum::new(&model.params, config.lr, config.momentum);
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for &idx in &order {
            let mut g = Graph::new();
            let bind = model.params.bind(&mut g, true);
            let loss = model.nll_node(&mut g, &bind, &sequences[idx]);
            let grads = g.backward(loss).map_err(|e| LmError::Diverged {
                epoch,
                detail: e.to_string(),
            })?;
            let param_grads = bind.collect(&grads);
            opt.step(&mut model.params, &param_grads)
                .map_err(|e| LmError::Diverged {
                    epoch,
                    detail: e.to_string(),
                })?;
        }
    }
    Ok(model)
}

/// exp(mean per-symbol negative log probability), the EOS transition
/// included in both the sum and the count.
pub fn lm_perplexity(model: &LmModel, sequence: &[String]) -> f64 {
    let n = sequence.len() + 1;
    (model.nll(sequence) / n as f64).exp()
}
