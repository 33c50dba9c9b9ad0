//! Conditional log-likelihood training with SGD + momentum, shuffled epochs,
//! and early stopping on the dev metric.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{EnergyModel, Variant};
use crate::corpus::{token_accuracy, EncodedCorpus, LabelVocab};
use crate::numgrad::{Graph, Mode, SgdMomentum};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// Stop after this many epochs without a dev improvement.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.05,
            momentum: 0.9,
            epochs: 20,
            patience: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty training set")]
    EmptyTrain,
    #[error("empty dev set")]
    EmptyDev,
    #[error("training diverged at epoch {epoch}, sentence {sentence}: {detail}")]
    Diverged {
        epoch: usize,
        sentence: usize,
        detail: String,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_metric: f64,
}

pub struct TrainOutcome {
    pub model: EnergyModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Dev token accuracy of Viterbi decoding, with the `*` rule applied.
pub fn dev_accuracy(model: &EnergyModel, dev: &EncodedCorpus, vocab: &LabelVocab) -> f64 {
    let gold: Vec<Vec<String>> = dev.iter().map(|(_, g)| vocab.decode(g)).collect();
    let pred: Vec<Vec<String>> = dev
        .iter()
        .map(|(s, _)| vocab.decode(&model.decode(s).0))
        .collect();
    token_accuracy(&gold, &pred).unwrap_or(0.0)
}

pub fn train_crf(
    mut model: EnergyModel,
    train: &EncodedCorpus,
    dev: &EncodedCorpus,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    if dev.is_empty() {
        return Err(TrainError::EmptyDev);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = SgdMomentum::new(&model.params, config.lr, config.momentum);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let label_vocab = model.label_vocab.clone();

    let mut best_metric = f64::NEG_INFINITY;
    let mut best_params = model.params.clone();
    let mut best_epoch = 0;
    let mut stale = 0usize;
    let mut log = Vec::new();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for &idx in order.iter() {
            let (sentence, gold) = &train[idx];
            let mut g = Graph::new();
            let bind = model.params.bind(&mut g, true);
            let loss = model.nll_node(&mut g, &bind, sentence, gold, Mode::Train, &mut rng);
            let loss_val = g.scalar(loss).map_err(|e| TrainError::Diverged {
                epoch,
                sentence: idx,
                detail: e.to_string(),
            })?;
            total_loss += loss_val;
            let grads = g.backward(loss).map_err(|e| TrainError::Diverged {
                epoch,
                sentence: idx,
                detail: e.to_string(),
            })?;
            let mut param_grads = bind.collect(&grads);
            if model.config.variant == Variant::Base {
                // base variant keeps pretrained/fixed word embeddings
                param_grads[model.word_emb_param().0] = None;
            }
            opt.step(&mut model.params, &param_grads)
                .map_err(|e| TrainError::Diverged {
                    epoch,
                    sentence: idx,
                    detail: e.to_string(),
                })?;
        }
        let dev_metric = dev_accuracy(&model, dev, &label_vocab);
        log.push(EpochLog {
            epoch,
            mean_loss: total_loss / train.len() as f64,
            dev_metric,
        });
        if dev_metric > best_metric {
            best_metric = dev_metric;
            best_params = model.params.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    model.params = best_params;
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
    })
}
