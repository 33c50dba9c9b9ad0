//! Training for inference networks: minimize the frozen-CRF energy of the
//! relaxed output plus a weighted local cross-entropy, or the local loss
//! alone (the non-structured baseline).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{discretize, token_loss_node, InfNetModel};
use crate::corpus::{token_accuracy, EncodedCorpus};
use crate::crf::{energy_node, EnergyModel, EpochLog};
use crate::numgrad::{Graph, Mode, SgdMomentum};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct InfNetTrainConfig {
    /// Local-loss weight; must be > 0 unless annealing is on.
    pub lambda: f64,
    /// Replaces lambda with e^{-0.01 * epoch}.
    pub anneal: bool,
    /// Weight on the energy term; 1.0 normally, 0.0 reduces training to the
    /// local baseline exactly.
    pub energy_weight: f64,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for InfNetTrainConfig {
    fn default() -> Self {
        InfNetTrainConfig {
            lambda: 1.0,
            anneal: false,
            energy_weight: 1.0,
            lr: 0.05,
            momentum: 0.9,
            epochs: 20,
            patience: 5,
            seed: 0,
        }
    }
}

/// Local-loss weight in effect at a given epoch.
pub fn lambda_at(config: &InfNetTrainConfig, epoch: usize) -> f64 {
    if config.anneal {
        (-0.01 * epoch as f64).exp()
    } else {
        config.lambda
    }
}

#[derive(Debug, Error)]
pub enum InfNetTrainError {
    #[error("empty training set")]
    EmptyTrain,
    #[error("empty dev set")]
    EmptyDev,
    #[error("local-loss weight must be > 0 when annealing is off (got {0})")]
    BadLambda(f64),
    #[error("training diverged at epoch {epoch}, sentence {sentence}: {detail}")]
    Diverged {
        epoch: usize,
        sentence: usize,
        detail: String,
    },
}

pub struct InfNetOutcome {
    pub model: InfNetModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Dev token accuracy of the discretized inference-network output, with the
/// `*` rule applied.
pub fn infnet_dev_accuracy(model: &InfNetModel, dev: &EncodedCorpus) -> f64 {
    let vocab = &model.label_vocab;
    let gold: Vec<Vec<String>> = dev.iter().map(|(_, g)| vocab.decode(g)).collect();
    let pred: Vec<Vec<String>> = dev
        .iter()
        .map(|(s, _)| {
            let (logits, _) = model.forward_eval(s);
            vocab.decode(&discretize(&logits))
        })
        .collect();
    token_accuracy(&gold, &pred).unwrap_or(0.0)
}

fn train_impl(
    mut model: InfNetModel,
    train: &EncodedCorpus,
    dev: &EncodedCorpus,
    energy: Option<&EnergyModel>,
    config: &InfNetTrainConfig,
) -> Result<InfNetOutcome, InfNetTrainError> {
    if train.is_empty() {
        return Err(InfNetTrainError::EmptyTrain);
    }
    if dev.is_empty() {
        return Err(InfNetTrainError::EmptyDev);
    }
    if !config.anneal && config.lambda <= 0.0 {
        return Err(InfNetTrainError::BadLambda(config.lambda));
    }
    if let Some(e) = energy {
        assert_eq!(
            e.label_vocab.len(),
            model.label_vocab.len(),
            "energy model and inference network disagree on the label set"
        );
    }
    let use_energy = energy.is_some() && config.energy_weight != 0.0;

    // The energy model is frozen: its potentials enter each per-sentence
    // graph as constants, so no gradient can reach its parameters.
    let unaries: Vec<_> = if use_energy {
        let e = energy.unwrap();
        train.iter().map(|(s, _)| e.unary_table(s)).collect()
    } else {
        Vec::new()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = SgdMomentum::new(&model.params, config.lr, config.momentum);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let num_labels = model.num_labels();

    let mut best_metric = f64::NEG_INFINITY;
    let mut best_params = model.params.clone();
    let mut best_epoch = 0;
    let mut stale = 0usize;
    let mut log = Vec::new();

    for epoch in 0..config.epochs {
        let lam = lambda_at(config, epoch);
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for &idx in order.iter() {
            let (sentence, gold) = &train[idx];
            let mut g = Graph::new();
            let bind = model.params.bind(&mut g, true);
            let logits = model.logits_node(&mut g, &bind, sentence, Mode::Train, None, &mut rng);
            let dists = g.softmax_rows(logits);
            let local = token_loss_node(&mut g, gold, dists, num_labels);
            let weighted_local = g.scale(local, lam);
            let loss = if use_energy {
                let u = g.constant(unaries[idx].clone());
                let w = g.constant(energy.unwrap().transitions().clone());
                let e = energy_node(&mut g, u, w, dists);
                let ew = g.scale(e, config.energy_weight);
                g.add(ew, weighted_local)
            } else {
                weighted_local
            };
            let diverged = |detail: String| InfNetTrainError::Diverged {
                epoch,
                sentence: idx,
                detail,
            };
            total_loss += g.scalar(loss).map_err(|e| diverged(e.to_string()))?;
            let grads = g.backward(loss).map_err(|e| diverged(e.to_string()))?;
            let param_grads = bind.collect(&grads);
            opt.step(&mut model.params, &param_grads)
                .map_err(|e| diverged(e.to_string()))?;
        }
        let dev_metric = infnet_dev_accuracy(&model, dev);
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
    Ok(InfNetOutcome {
        model,
        log,
        best_epoch,
    })
}

/// Train against a frozen energy model: per-example loss is
/// energy(unary(x), W, distributions) + lambda_t * token_loss.
pub fn train_infnet(
    model: InfNetModel,
    train: &EncodedCorpus,
    dev: &EncodedCorpus,
    energy: &EnergyModel,
    config: &InfNetTrainConfig,
) -> Result<InfNetOutcome, InfNetTrainError> {
    train_impl(model, train, dev, Some(energy), config)
}

/// Local cross-entropy only; no structured energy term.
pub fn train_local_baseline(
    model: InfNetModel,
    train: &EncodedCorpus,
    dev: &EncodedCorpus,
    config: &InfNetTrainConfig,
) -> Result<InfNetOutcome, InfNetTrainError> {
    train_impl(model, train, dev, None, config)
}
