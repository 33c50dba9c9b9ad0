//! Pretrained word embedding text files: one `token v_1 ... v_dim` line per
//! word.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::types::CorpusError;
use crate::numgrad::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
    /// Stable seeded vector returned for out-of-vocabulary tokens.
    pub unk: Vec<f64>,
    /// Lower-case tokens before lookup (default on).
    pub lowercase: bool,
}

impl EmbeddingTable {
    pub fn lookup(&self, token: &str) -> &[f64] {
        let key;
        let token = if self.lowercase {
            key = token.to_lowercase();
            key.as_str()
        } else {
            token
        };
        self.vectors.get(token).map_or(&self.unk, |v| v.as_slice())
    }
}

pub fn load_embeddings(
    path: &Path,
    dim: usize,
    lowercase: bool,
    seed: u64,
) -> Result<EmbeddingTable, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut vectors: HashMap<String, Vec<f64>> = HashMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap().to_string();
        let token = if lowercase { token.to_lowercase() } else { token };
        let vals: Result<Vec<f64>, _> = parts.map(|p| p.parse::<f64>()).collect();
        let vals = vals.map_err(|_| CorpusError::WrongDimension {
            line: lineno + 1,
            want: dim,
            found: 0,
        })?;
        if vals.len() != dim {
            return Err(CorpusError::WrongDimension {
                line: lineno + 1,
                want: dim,
                found: vals.len(),
            });
        }
        if vectors.insert(token.clone(), vals).is_some() {
            log::warn!("duplicate embedding for `{token}` on line {}; last wins", lineno + 1);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unk = Tensor::rand_uniform(1, dim, -0.1, 0.1, &mut rng).data;
    Ok(EmbeddingTable {
        dim,
        vectors,
        unk,
        lowercase,
    })
}
