//! Subcommand implementations: data generation, training, inference,
//! benchmarking, and evaluation.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Serialize;

use crfbench_core::bench::{
    correlate_search_error, run_bench, train_lm, BenchConfig, LmConfig, Method,
};
use crfbench_core::corpus::{
    encode_corpus, gen_hmm_corpus, load_conll, span_f1, token_accuracy, write_conll,
    write_conll_with, EncodedCorpus, HmmSpec, LabelVocab, RawCorpus,
};
use crfbench_core::crf::{train_crf, EnergyModel, EpochLog};
use crfbench_core::infnet::{
    discretize, train_infnet, train_local_baseline, InfNetModel,
};
use crfbench_core::relaxinf::{gd_infer, instance_tailor, warm_start_gd, GdConfig, GdInit};

use crate::config::{config_err, runtime_err, AppError, ExperimentConfig};

fn build_spec(config: &ExperimentConfig) -> Result<HmmSpec, AppError> {
    let g = &config.data.generator;
    match g.kind.as_str() {
        "random" => Ok(HmmSpec::random(g.states, g.vocab, g.seed)),
        "disjoint_emissions" => Ok(HmmSpec::disjoint_emissions(g.states, g.vocab, g.seed)),
        "deterministic" => Ok(HmmSpec::deterministic(g.states)),
        other => Err(AppError::Config(format!(
            "unknown generator kind `{other}` (expected random, disjoint_emissions, or deterministic)"
        ))),
    }
}

fn load_split(config: &ExperimentConfig, split: &str) -> Result<RawCorpus, AppError> {
    let path = config.split_path(split);
    load_conll(&path, config.data.token_col, config.data.label_col).map_err(|e| {
        AppError::Config(format!(
            "cannot load {split} corpus from {}: {e}",
            path.display()
        ))
    })
}

fn corpus_stats(name: &str, corpus: &RawCorpus) -> String {
    let tokens: usize = corpus.iter().map(|(s, _)| s.len()).sum();
    let labels: BTreeSet<&String> = corpus.iter().flat_map(|(_, l)| l.iter()).collect();
    format!(
        "{name}: {} sentences, {tokens} tokens, {} distinct labels",
        corpus.len(),
        labels.len()
    )
}

pub fn cmd_gen_data(config: &ExperimentConfig) -> Result<(), AppError> {
    let spec = build_spec(config)?;
    let g = &config.data.generator;
    let lens = (g.min_len, g.max_len);
    let splits = [
        ("train", g.train, config.seed),
        ("dev", g.dev, config.seed.wrapping_add(1)),
        ("test", g.test, config.seed.wrapping_add(2)),
    ];
    for (name, count, seed) in splits {
        let corpus = gen_hmm_corpus(&spec, count, lens, seed).map_err(runtime_err)?;
        let path = config.split_path(name);
        write_conll(&path, &corpus).map_err(runtime_err)?;
        println!("{}", corpus_stats(name, &corpus));
    }
    Ok(())
}

fn write_log(path: &Path, log: &[EpochLog]) -> Result<(), AppError> {
    let text = serde_json::to_string_pretty(log).expect("log serialization");
    std::fs::write(path, text).map_err(runtime_err)
}

fn vocab_from(corpora: &[&RawCorpus]) -> LabelVocab {
    let mut merged: RawCorpus = Vec::new();
    for c in corpora {
        merged.extend((*c).iter().cloned());
    }
    LabelVocab::from_corpus(&merged)
}

fn encode(
    raw: &RawCorpus,
    vocab: &LabelVocab,
    what: &str,
) -> Result<EncodedCorpus, AppError> {
    encode_corpus(raw, vocab)
        .map_err(|e| AppError::Config(format!("cannot encode {what} corpus: {e}")))
}

pub fn cmd_train_crf(config: &ExperimentConfig) -> Result<(), AppError> {
    let train_raw = load_split(config, "train")?;
    let dev_raw = load_split(config, "dev")?;
    let vocab = vocab_from(&[&train_raw, &dev_raw]);
    let train = encode(&train_raw, &vocab, "train")?;
    let dev = encode(&dev_raw, &vocab, "dev")?;
    let mut model_cfg = config.crf.model.clone();
    model_cfg.seed = config.seed;
    let model = EnergyModel::new(model_cfg, &train_raw, vocab);
    let outcome = train_crf(model, &train, &dev, &config.crf.train).map_err(runtime_err)?;
    let path = config.checkpoint_path("crf");
    outcome.model.save(&path).map_err(runtime_err)?;
    write_log(&config.out_dir.join("crf_log.json"), &outcome.log)?;
    println!(
        "saved CRF checkpoint to {} (best epoch {}, dev accuracy {:.2})",
        path.display(),
        outcome.best_epoch,
        outcome.log[outcome.best_epoch].dev_metric
    );
    Ok(())
}

fn load_crf(config: &ExperimentConfig) -> Result<EnergyModel, AppError> {
    let path = config.checkpoint_path("crf");
    if !path.exists() {
        return Err(AppError::Config(format!(
            "missing CRF checkpoint {} (run train-crf first)",
            path.display()
        )));
    }
    EnergyModel::load(&path).map_err(runtime_err)
}

fn load_infnet_ckpt(config: &ExperimentConfig, kind: &str) -> Result<InfNetModel, AppError> {
    let path = config.checkpoint_path(kind);
    if !path.exists() {
        return Err(AppError::Config(format!(
            "missing {kind} checkpoint {} (train it first)",
            path.display()
        )));
    }
    InfNetModel::load(&path).map_err(runtime_err)
}

pub fn cmd_train_infnet(config: &ExperimentConfig) -> Result<(), AppError> {
    let energy = load_crf(config)?;
    let train_raw = load_split(config, "train")?;
    let dev_raw = load_split(config, "dev")?;
    let vocab = energy.label_vocab.clone();
    let train = encode(&train_raw, &vocab, "train")?;
    let dev = encode(&dev_raw, &vocab, "dev")?;
    let mut model_cfg = config.infnet.model.clone();
    model_cfg.seed = config.seed;
    let model = InfNetModel::new(model_cfg, &train_raw, vocab);
    let outcome =
        train_infnet(model, &train, &dev, &energy, &config.infnet.train).map_err(runtime_err)?;
    let path = config.checkpoint_path("infnet");
    outcome.model.save(&path).map_err(runtime_err)?;
    write_log(&config.out_dir.join("infnet_log.json"), &outcome.log)?;
    println!(
        "saved inference-network checkpoint to {} (best epoch {}, dev accuracy {:.2})",
        path.display(),
        outcome.best_epoch,
        outcome.log[outcome.best_epoch].dev_metric
    );
    Ok(())
}

pub fn cmd_train_baseline(config: &ExperimentConfig) -> Result<(), AppError> {
    let train_raw = load_split(config, "train")?;
    let dev_raw = load_split(config, "dev")?;
    let vocab = vocab_from(&[&train_raw, &dev_raw]);
    let train = encode(&train_raw, &vocab, "train")?;
    let dev = encode(&dev_raw, &vocab, "dev")?;
    let mut model_cfg = config.infnet.model.clone();
    model_cfg.seed = config.seed;
    let model = InfNetModel::new(model_cfg, &train_raw, vocab);
    let outcome =
        train_local_baseline(model, &train, &dev, &config.infnet.train).map_err(runtime_err)?;
    let path = config.checkpoint_path("baseline");
    outcome.model.save(&path).map_err(runtime_err)?;
    write_log(&config.out_dir.join("baseline_log.json"), &outcome.log)?;
    println!("saved baseline checkpoint to {}", path.display());
    Ok(())
}

fn parse_method(config: &ExperimentConfig, name: &str) -> Result<Method, AppError> {
    Ok(match name {
        "viterbi" => Method::Viterbi,
        "gd" => Method::Gd {
            iterations: config.gd.base.iterations,
            lr: config.gd.base.lr,
        },
        "infnet" => Method::Infnet,
        "infnet-discretized" => Method::InfnetDiscretized,
        "instance-tailored" => Method::InstanceTailored {
            epochs: config.bench.refine.epochs,
        },
        "warm-start" => Method::WarmStart {
            iterations: config.gd.base.iterations,
        },
        "local-baseline" => Method::LocalBaseline,
        other => {
            return Err(AppError::Config(format!(
                "unknown method `{other}` (expected viterbi, gd, infnet, infnet-discretized, \
                 instance-tailored, warm-start, or local-baseline)"
            )))
        }
    })
}

pub fn cmd_infer(
    config: &ExperimentConfig,
    method_name: &str,
    input: &Path,
    output: &Path,
) -> Result<(), AppError> {
    let method = parse_method(config, method_name)?;
    let raw = load_conll(input, config.data.token_col, config.data.label_col)
        .map_err(|e| AppError::Config(format!("cannot load {}: {e}", input.display())))?;
    let energy = load_crf(config)?;
    let needs_net = matches!(
        method,
        Method::Infnet
            | Method::InfnetDiscretized
            | Method::InstanceTailored { .. }
            | Method::WarmStart { .. }
    );
    let infnet = if needs_net {
        Some(load_infnet_ckpt(config, "infnet")?)
    } else {
        None
    };
    let baseline = if matches!(method, Method::LocalBaseline) {
        Some(load_infnet_ckpt(config, "baseline")?)
    } else {
        None
    };

    let mut labeled: RawCorpus = Vec::new();
    let mut energies = Vec::new();
    for (sentence, _) in &raw {
        let (labels, energy_val) = match &method {
            Method::Viterbi => energy.decode(sentence),
            Method::Gd { iterations, lr } => {
                let gd = GdConfig {
                    iterations: *iterations,
                    lr: *lr,
                    ..config.gd.base.clone()
                };
                let out = gd_infer(sentence, &energy, &gd).map_err(runtime_err)?;
                (out.labels, out.energy)
            }
            Method::Infnet | Method::InfnetDiscretized => {
                let net = infnet.as_ref().unwrap();
                let (logits, _) = net.forward_eval(sentence);
                let labels = discretize(&logits);
                let e = crfbench_core::crf::discrete_energy(
                    &energy.unary_table(sentence),
                    energy.transitions(),
                    &labels,
                );
                (labels, e)
            }
            Method::InstanceTailored { epochs } => {
                let net = infnet.as_ref().unwrap();
                let refine = crfbench_core::relaxinf::RefineConfig {
                    epochs: *epochs,
                    ..config.bench.refine.clone()
                };
                let out = instance_tailor(sentence, net, &energy, &refine);
                (out.labels, out.energy)
            }
            Method::WarmStart { iterations } => {
                let net = infnet.as_ref().unwrap();
                let gd = GdConfig {
                    iterations: *iterations,
                    init: GdInit::WarmStart,
                    ..config.gd.base.clone()
                };
                let out = warm_start_gd(sentence, net, &energy, &gd).map_err(runtime_err)?;
                (out.labels, out.energy)
            }
            Method::LocalBaseline => {
                let net = baseline.as_ref().unwrap();
                let (logits, _) = net.forward_eval(sentence);
                let labels = discretize(&logits);
                let e = crfbench_core::crf::discrete_energy(
                    &energy.unary_table(sentence),
                    energy.transitions(),
                    &labels,
                );
                (labels, e)
            }
        };
        labeled.push((sentence.clone(), energy.label_vocab.decode(&labels)));
        energies.push(energy_val);
    }
    write_conll_with(output, &labeled, Some(&energies)).map_err(runtime_err)?;
    println!(
        "wrote {} sentences ({} method) to {}",
        labeled.len(),
        method.id(),
        output.display()
    );
    Ok(())
}

pub fn cmd_bench(config: &ExperimentConfig) -> Result<(), AppError> {
    let energy = load_crf(config)?;
    let test_raw = load_split(config, "test")?;
    let vocab = energy.label_vocab.clone();
    let test = encode(&test_raw, &vocab, "test")?;
    let needs_net = config.bench.methods.iter().any(|m| {
        matches!(
            m,
            Method::Infnet
                | Method::InfnetDiscretized
                | Method::InstanceTailored { .. }
                | Method::WarmStart { .. }
        )
    });
    let infnet = if needs_net {
        Some(load_infnet_ckpt(config, "infnet")?)
    } else {
        None
    };
    let baseline = if config
        .bench
        .methods
        .iter()
        .any(|m| matches!(m, Method::LocalBaseline))
    {
        Some(load_infnet_ckpt(config, "baseline")?)
    } else {
        None
    };
    let bench_config = BenchConfig {
        passes: config.bench.passes,
        warmup: config.bench.warmup,
        gd: config.gd.base.clone(),
        refine: config.bench.refine.clone(),
        fingerprint: format!("seed={};methods={}", config.seed, config.bench.methods.len()),
        seed: config.seed,
    };
    let report = run_bench(
        &test,
        &energy,
        infnet.as_ref(),
        baseline.as_ref(),
        &config.bench.methods,
        &bench_config,
    )
    .map_err(runtime_err)?;

    std::fs::write(config.out_dir.join("report.json"), report.to_json()).map_err(runtime_err)?;
    let table = report.render_table();
    std::fs::write(config.out_dir.join("report.txt"), &table).map_err(runtime_err)?;
    std::fs::write(
        config.out_dir.join("report.csv"),
        report.per_sentence_csv(),
    )
    .map_err(runtime_err)?;

    // perplexity/search-error correlations from LMs trained on the train split
    if let Ok(train_raw) = load_split(config, "train") {
        let words: Vec<Vec<String>> = train_raw.iter().map(|(s, _)| s.tokens().to_vec()).collect();
        let labels: Vec<Vec<String>> = train_raw.iter().map(|(_, l)| l.clone()).collect();
        let lm_cfg = LmConfig {
            seed: config.seed,
            epochs: 5,
            ..LmConfig::default()
        };
        let word_lm = train_lm(&words, &lm_cfg).map_err(runtime_err)?;
        let label_lm = train_lm(&labels, &lm_cfg).map_err(runtime_err)?;
        let cors = correlate_search_error(&test, &vocab, &report, &word_lm, &label_lm);
        let text = serde_json::to_string_pretty(&cors).expect("correlation serialization");
        std::fs::write(config.out_dir.join("correlations.json"), text).map_err(runtime_err)?;
    }

    print!("{table}");
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    token_accuracy: f64,
    span_precision: f64,
    span_recall: f64,
    span_f1: f64,
    degenerate_spans: bool,
}

pub fn cmd_eval(config: &ExperimentConfig, gold: &Path, pred: &Path) -> Result<(), AppError> {
    let gold_raw = load_conll(gold, config.data.token_col, config.data.label_col)
        .map_err(|e| AppError::Config(format!("cannot load {}: {e}", gold.display())))?;
    let pred_raw = load_conll(pred, config.data.token_col, config.data.label_col)
        .map_err(|e| AppError::Config(format!("cannot load {}: {e}", pred.display())))?;
    let gold_labels: Vec<Vec<String>> = gold_raw.iter().map(|(_, l)| l.clone()).collect();
    let pred_labels: Vec<Vec<String>> = pred_raw.iter().map(|(_, l)| l.clone()).collect();
    let acc = token_accuracy(&gold_labels, &pred_labels).map_err(config_err)?;
    let f1 = span_f1(&gold_labels, &pred_labels).map_err(config_err)?;
    let out = EvalOutput {
        token_accuracy: acc,
        span_precision: f1.precision,
        span_recall: f1.recall,
        span_f1: f1.f1,
        degenerate_spans: f1.degenerate,
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("eval serialization"));
    Ok(())
}
