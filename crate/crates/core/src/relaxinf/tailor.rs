//! Per-instance refinements of a trained inference network: fine-tuning its
//! parameters on a single example's energy (instance tailoring) and using
//! its logits as a gradient-descent starting point (warm start).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gd::{gd_from_logits, GdConfig, GdError, GdOutcome};
use crate::corpus::Sentence;
use crate::crf::{discrete_energy, energy_node, EnergyModel};
use crate::infnet::{discretize, InfNetModel};
use crate::numgrad::{Graph, Mode, SgdMomentum};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Return the lowest-energy discretized output seen across epochs
    /// (including the unrefined epoch-0 output) instead of the last one.
    pub keep_best_energy: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            epochs: 10,
            lr: 0.05,
            momentum: 0.9,
            keep_best_energy: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TailorOutcome {
    pub labels: Vec<usize>,
    pub energy: f64,
    /// Epoch whose output was returned (0 = unrefined).
    pub epoch: usize,
    /// True when fine-tuning diverged and the epoch-0 output was returned.
    pub fell_back: bool,
}

/// Fine-tune a clone of the inference network on one sentence's energy and
/// return the best (or last) discretized output. The original network is
/// never modified.
pub fn instance_tailor(
    x: &Sentence,
    infnet: &InfNetModel,
    energy_model: &EnergyModel,
    config: &RefineConfig,
) -> TailorOutcome {
    assert!(config.epochs >= 1, "tailoring needs at least one epoch");
    let unary = energy_model.unary_table(x);
    let w = energy_model.transitions().clone();
    let mut tailored = infnet.clone();
    let mut opt = SgdMomentum::new(&tailored.params, config.lr, config.momentum);

    let evaluate = |m: &InfNetModel| -> (Vec<usize>, f64) {
        let (logits, _) = m.forward_eval(x);
        let labels = discretize(&logits);
        let e = discrete_energy(&unary, &w, &labels);
        (labels, e)
    };

    let (labels0, energy0) = evaluate(&tailored);
    let mut best = TailorOutcome {
        labels: labels0.clone(),
        energy: energy0,
        epoch: 0,
        fell_back: false,
    };

    for epoch in 1..=config.epochs {
        let step = (|| -> Result<(), String> {
            let mut g = Graph::new();
            let bind = tailored.params.bind(&mut g, true);
            let mut rng = ChaCha8Rng::seed_from_u64(tailored.config.seed);
            let logits = tailored.logits_node(&mut g, &bind, x, Mode::Eval, None, &mut rng);
            let dists = g.softmax_rows(logits);
            let u = g.constant(unary.clone());
            let wn = g.constant(w.clone());
            let e = energy_node(&mut g, u, wn, dists);
            let grads = g.backward(e).map_err(|e| e.to_string())?;
            let param_grads = bind.collect(&grads);
            opt.step(&mut tailored.params, &param_grads)
                .map_err(|e| e.to_string())
        })();
        if let Err(detail) = step {
            log::warn!("instance tailoring diverged at epoch {epoch}: {detail}");
            return TailorOutcome {
                labels: labels0,
                energy: energy0,
                epoch: 0,
                fell_back: true,
            };
        }
        let (labels, energy) = evaluate(&tailored);
        let take = if config.keep_best_energy {
            energy < best.energy
        } else {
            true
        };
        if take {
            best = TailorOutcome {
                labels,
                energy,
                epoch,
                fell_back: false,
            };
        }
    }
    best
}

/// Gradient-descent inference initialized at the inference network's logits.
/// With zero iterations this is exactly the network's discretized output.
pub fn warm_start_gd(
    x: &Sentence,
    infnet: &InfNetModel,
    energy_model: &EnergyModel,
    config: &GdConfig,
) -> Result<GdOutcome, GdError> {
    let (logits, _) = infnet.forward_eval(x);
    let unary = energy_model.unary_table(x);
    gd_from_logits(&unary, energy_model.transitions(), logits, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{encode_corpus, gen_hmm_corpus, HmmSpec, LabelVocab, RawCorpus};
    use crate::crf::CrfConfig;
    use crate::infnet::{
        train_infnet, Family, InfNetConfig, InfNetTrainConfig,
    };
    use crate::numgrad::Tensor;
    use crate::relaxinf::gd::{gd_minimize, GdInit};

    fn setup() -> (RawCorpus, EnergyModel, InfNetModel) {
        let spec = HmmSpec::disjoint_emissions(3, 9, 31);
        let raw = gen_hmm_corpus(&spec, 50, (3, 7), 32).unwrap();
        let vocab = LabelVocab::from_corpus(&raw);
        let enc = encode_corpus(&raw, &vocab).unwrap();
        let energy = EnergyModel::new(
            CrfConfig {
                word_dim: 6,
                hidden: 6,
                seed: 33,
                ..CrfConfig::default()
            },
            &raw,
            vocab.clone(),
        );
        let infnet = InfNetModel::new(
            InfNetConfig {
                family: Family::Blstm,
                word_dim: 6,
                hidden: 6,
                seed: 34,
                ..InfNetConfig::default()
            },
            &raw,
            vocab,
        );
        let (train, dev) = enc.split_at(40);
        let out = train_infnet(
            infnet,
            &train.to_vec(),
            &dev.to_vec(),
            &energy,
            &InfNetTrainConfig {
                epochs: 5,
                lambda: 0.2,
                ..InfNetTrainConfig::default()
            },
        )
        .unwrap();
        (raw, energy, out.model)
    }

    #[test]
    fn tailoring_never_worse_and_isolated() {
        let (raw, energy, infnet) = setup();
        let before: Vec<Tensor> = infnet.params.iter().map(|p| p.value.clone()).collect();
        for (sentence, _) in raw.iter().take(10) {
            let (logits, _) = infnet.forward_eval(sentence);
            let unrefined = discretize(&logits);
            let unrefined_energy = discrete_energy(
                &energy.unary_table(sentence),
                energy.transitions(),
                &unrefined,
            );
            let out = instance_tailor(sentence, &infnet, &energy, &RefineConfig::default());
            assert!(!out.fell_back);
            assert!(
                out.energy <= unrefined_energy + 1e-12,
                "tailored {} vs unrefined {}",
                out.energy,
                unrefined_energy
            );
        }
        for (p, b) in infnet.params.iter().zip(&before) {
            assert_eq!(&p.value, b, "{} modified by tailoring", p.name);
        }
    }

    #[test]
    fn tailoring_divergence_falls_back_to_epoch_zero() {
        let (raw, energy, infnet) = setup();
        let sentence = &raw[0].0;
        let (logits, _) = infnet.forward_eval(sentence);
        let expected = discretize(&logits);
        let out = instance_tailor(
            sentence,
            &infnet,
            &energy,
            &RefineConfig {
                lr: 1e300,
                epochs: 3,
                ..RefineConfig::default()
            },
        );
        assert!(out.fell_back);
        assert_eq!(out.epoch, 0);
        assert_eq!(out.labels, expected);
    }

    #[test]
    fn warm_start_zero_iterations_is_infnet_output() {
        let (raw, energy, infnet) = setup();
        for (sentence, _) in raw.iter().take(10) {
            let (logits, _) = infnet.forward_eval(sentence);
            let expected = discretize(&logits);
            let out = warm_start_gd(
                sentence,
                &infnet,
                &energy,
                &GdConfig {
                    iterations: 0,
                    init: GdInit::WarmStart,
                    ..GdConfig::default()
                },
            )
            .unwrap();
            assert_eq!(out.labels, expected);
        }
    }

    #[test]
    fn warm_start_beats_cold_start_on_most_instances() {
        let (raw, energy, infnet) = setup();
        let config = GdConfig {
            iterations: 30,
            lr: 1.0,
            ..GdConfig::default()
        };
        let mut wins = 0usize;
        let total = 20usize;
        for (sentence, _) in raw.iter().take(total) {
            let unary = energy.unary_table(sentence);
            let cold = gd_minimize(&unary, energy.transitions(), &config).unwrap();
            let warm = warm_start_gd(sentence, &infnet, &energy, &config).unwrap();
            let threshold = *cold.trajectory.last().unwrap();
            let first_hit = |traj: &[f64]| {
                traj.iter()
                    .position(|&e| e <= threshold)
                    .unwrap_or(traj.len())
            };
            if first_hit(&warm.trajectory) < first_hit(&cold.trajectory) {
                wins += 1;
            }
        }
        assert!(
            wins * 10 >= total * 9,
            "warm start earlier on only {wins}/{total} instances"
        );
    }
}
