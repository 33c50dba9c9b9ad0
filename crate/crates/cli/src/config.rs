//! Experiment configuration: one JSON document, individual keys overridable
//! from the command line, resolved copy echoed into the output directory.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crfbench_core::bench::Method;
use crfbench_core::crf::{CrfConfig, TrainConfig};
use crfbench_core::infnet::{InfNetConfig, InfNetTrainConfig};
use crfbench_core::relaxinf::{GdConfig, RefineConfig};

#[derive(Debug)]
pub enum AppError {
    /// Bad configuration or missing prerequisite; exit code 2.
    Config(String),
    /// Failure while running (I/O, divergence, ...); exit code 3.
    Runtime(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(m) => write!(f, "configuration error: {m}"),
            AppError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

pub fn config_err(e: impl fmt::Display) -> AppError {
    AppError::Config(e.to_string())
}

pub fn runtime_err(e: impl fmt::Display) -> AppError {
    AppError::Runtime(e.to_string())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// One of "random", "disjoint_emissions", "deterministic".
    pub kind: String,
    pub states: usize,
    pub vocab: usize,
    pub seed: u64,
    pub min_len: usize,
    pub max_len: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            kind: "disjoint_emissions".into(),
            states: 5,
            vocab: 20,
            seed: 1,
            min_len: 3,
            max_len: 10,
            train: 200,
            dev: 50,
            test: 50,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub generator: GeneratorConfig,
    /// Explicit corpus files; defaults to <out_dir>/{train,dev,test}.conll.
    pub paths: DataPaths,
    pub token_col: usize,
    pub label_col: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            generator: GeneratorConfig::default(),
            paths: DataPaths::default(),
            token_col: 0,
            label_col: 1,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CrfSection {
    pub model: CrfConfig,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct InfnetSection {
    pub model: InfNetConfig,
    pub train: InfNetTrainConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GdSection {
    pub base: GdConfig,
    pub n_grid: Vec<usize>,
    pub lr_grid: Vec<f64>,
}

impl Default for GdSection {
    fn default() -> Self {
        GdSection {
            base: GdConfig::default(),
            n_grid: vec![5, 10, 20, 50, 100],
            lr_grid: vec![10.0, 5.0, 1.0, 0.5, 0.1],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSection {
    pub methods: Vec<Method>,
    pub passes: usize,
    pub warmup: usize,
    pub refine: RefineConfig,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            methods: vec![
                Method::Viterbi,
                Method::Gd {
                    iterations: 20,
                    lr: 1.0,
                },
                Method::InfnetDiscretized,
                Method::WarmStart { iterations: 10 },
            ],
            passes: 3,
            warmup: 1,
            refine: RefineConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Checkpoints {
    pub crf: Option<PathBuf>,
    pub infnet: Option<PathBuf>,
    pub baseline: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub crf: CrfSection,
    pub infnet: InfnetSection,
    pub gd: GdSection,
    pub bench: BenchSection,
    pub checkpoints: Checkpoints,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            crf: CrfSection::default(),
            infnet: InfnetSection::default(),
            gd: GdSection::default(),
            bench: BenchSection::default(),
            checkpoints: Checkpoints::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn split_path(&self, split: &str) -> PathBuf {
        let explicit = match split {
            "train" => &self.data.paths.train,
            "dev" => &self.data.paths.dev,
            "test" => &self.data.paths.test,
            other => panic!("unknown split {other}"),
        };
        explicit
            .clone()
            .unwrap_or_else(|| self.out_dir.join(format!("{split}.conll")))
    }

    pub fn checkpoint_path(&self, kind: &str) -> PathBuf {
        let explicit = match kind {
            "crf" => &self.checkpoints.crf,
            "infnet" => &self.checkpoints.infnet,
            "baseline" => &self.checkpoints.baseline,
            other => panic!("unknown checkpoint kind {other}"),
        };
        explicit
            .clone()
            .unwrap_or_else(|| self.out_dir.join(format!("{kind}.json")))
    }
}

/// Apply one `--set path.to.key=value` override onto the JSON document,
/// creating intermediate objects as needed. The value is parsed as JSON when
/// possible and treated as a bare string otherwise.
fn apply_override(doc: &mut serde_json::Value, spec: &str) -> Result<(), AppError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| AppError::Config(format!("override `{spec}` is not of the form key=value")))?;
    if path.is_empty() {
        return Err(AppError::Config(format!("override `{spec}` has an empty key")));
    }
    let value: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !cursor.is_object() {
            return Err(AppError::Config(format!(
                "override `{spec}`: `{}` is not an object",
                parts[..i].join(".")
            )));
        }
        let map = cursor.as_object_mut().unwrap();
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        cursor = map
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    unreachable!("non-empty key path always terminates in the loop")
}

/// Load the config file (or start from defaults when absent), apply `--set`
/// overrides, and deserialize into the typed config.
pub fn load_config(
    path: Option<&Path>,
    overrides: &[String],
) -> Result<ExperimentConfig, AppError> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| AppError::Config(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| AppError::Config(format!("invalid JSON in {}: {e}", p.display())))?
        }
        None => serde_json::to_value(ExperimentConfig::default()).expect("default config"),
    };
    for spec in overrides {
        apply_override(&mut doc, spec)?;
    }
    serde_json::from_value(doc).map_err(|e| AppError::Config(format!("invalid config: {e}")))
}

/// Write the fully resolved config into the output directory for provenance.
pub fn echo_config(config: &ExperimentConfig) -> Result<(), AppError> {
    std::fs::create_dir_all(&config.out_dir).map_err(runtime_err)?;
    let text = serde_json::to_string_pretty(config).expect("config serialization");
    std::fs::write(config.out_dir.join("config.json"), text).map_err(runtime_err)
}
