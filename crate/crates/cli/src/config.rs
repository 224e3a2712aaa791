//! Run configuration documents.

use num_rational::BigRational;
use qfock_core::arakiwoods::{AwModel, SpectralBlock};
use qfock_core::cache::GramCache;
use qfock_core::model::FockModel;
use qfock_core::QMatrix;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::UsageError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKindConfig {
    Mixed,
    ArakiWoods,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Float,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BlockConfig {
    Invariant,
    Pair { lambda: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKindConfig,
    pub truncation: usize,
    /// Dimension of the one-particle space when `q_constant` is used for a mixed model.
    pub d: Option<usize>,
    pub q: Option<Vec<Vec<f64>>>,
    /// Exact entries such as `"1/3"`, used by exact precision.
    pub q_rational: Option<Vec<Vec<String>>>,
    pub q_constant: Option<f64>,
    pub blocks: Option<Vec<BlockConfig>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub identity: f64,
    pub bound: f64,
    pub positivity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identity: 1e-9,
            bound: 1e-12,
            positivity: 1e-12,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub letter: Option<usize>,
    pub pairs: Option<Vec<[usize; 2]>>,
    pub order: Option<usize>,
    pub trials: Option<usize>,
    pub max_len: Option<usize>,
    pub cap: Option<usize>,
    pub xi_cap: Option<usize>,
    pub eta_cap: Option<usize>,
    pub v_cap: Option<usize>,
    pub mode: Option<String>,
    pub compare_naive: Option<bool>,
    pub a: Option<Vec<String>>,
    pub b: Option<Vec<String>>,
    pub k_letters: Option<Vec<usize>>,
    pub decay: Option<f64>,
    pub xi0: Option<usize>,
    pub eta_letter: Option<usize>,
    pub xi_coefficients: Option<Vec<[f64; 2]>>,
    pub max_level: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub model: ModelConfig,
    pub seed: Option<u64>,
    pub precision: Option<Precision>,
    pub cache: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub params: Params,
}

/// A validated model, ready for the commands.
pub enum Model {
    Mixed(FockModel),
    ArakiWoods(AwModel),
}

impl Model {
    pub fn fock(&self) -> &FockModel {
        match self {
            Model::Mixed(m) => m,
            Model::ArakiWoods(a) => a.fock(),
        }
    }

    pub fn aw(&self) -> Option<&AwModel> {
        match self {
            Model::ArakiWoods(a) => Some(a),
            Model::Mixed(_) => None,
        }
    }
}

fn usage(field: &str, message: impl std::fmt::Display) -> UsageError {
    UsageError(format!("invalid config field `{field}`: {message}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, UsageError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| UsageError(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), UsageError> {
        let m = &self.model;
        if m.truncation < 1 {
            return Err(usage("model.truncation", "N must be at least 1"));
        }
        match m.kind {
            ModelKindConfig::Mixed => {
                if m.blocks.is_some() {
                    return Err(usage("model.blocks", "only allowed for araki-woods models"));
                }
                self.q_matrix()?;
            }
            ModelKindConfig::ArakiWoods => {
                let blocks = m.blocks.as_ref().ok_or_else(|| usage("model.blocks", "required for araki-woods models"))?;
                if blocks.is_empty() {
                    return Err(usage("model.blocks", "at least one block is required"));
                }
                for (k, b) in blocks.iter().enumerate() {
                    if let BlockConfig::Pair { lambda } = b {
                        if !(lambda.is_finite() && *lambda > 0.0) {
                            return Err(usage(&format!("model.blocks[{k}].lambda"), format!("{lambda} is not positive")));
                        }
                    }
                }
                if m.q.is_some() || m.q_rational.is_some() || m.d.is_some() {
                    return Err(usage("model.q", "araki-woods models take `q_constant` and `blocks` only"));
                }
                let q = m.q_constant.ok_or_else(|| usage("model.q_constant", "required for araki-woods models"))?;
                if !(q.abs() < 1.0) {
                    return Err(usage("model.q_constant", format!("{q} is not in (-1, 1)")));
                }
            }
        }
        Ok(())
    }

    pub fn q_matrix(&self) -> Result<QMatrix, UsageError> {
        let m = &self.model;
        if let ModelKindConfig::ArakiWoods = m.kind {
            let blocks = m.blocks.as_deref().unwrap_or_default();
            let dim = blocks.iter().map(|b| if let BlockConfig::Pair { .. } = b { 2 } else { 1 }).sum();
            let q = m.q_constant.unwrap_or(0.0);
            return QMatrix::constant(dim, q).map_err(|e| usage("model.q_constant", e));
        }
        let given = [m.q.is_some(), m.q_rational.is_some(), m.q_constant.is_some()].iter().filter(|&&b| b).count();
        if given != 1 {
            return Err(usage("model.q", "give exactly one of `q`, `q_rational` or `q_constant`"));
        }
        if let Some(rows) = &m.q {
            if m.d.is_some_and(|d| d != rows.len()) {
                return Err(usage("model.d", "does not match the number of Q rows"));
            }
            return QMatrix::new(rows).map_err(|e| usage("model.q", e));
        }
        if let Some(rows) = &m.q_rational {
            let parsed: Vec<Vec<BigRational>> = rows
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    r.iter()
                        .enumerate()
                        .map(|(j, s)| {
                            s.trim()
                                .parse::<BigRational>()
                                .map_err(|e| usage(&format!("model.q_rational[{i}][{j}]"), format!("`{s}`: {e}")))
                        })
                        .collect()
                })
                .collect::<Result<_, _>>()?;
            return QMatrix::from_rationals(&parsed).map_err(|e| usage("model.q_rational", e));
        }
        let d = m.d.ok_or_else(|| usage("model.d", "required with `q_constant`"))?;
        if d == 0 {
            return Err(usage("model.d", "must be at least 1"));
        }
        QMatrix::constant(d, m.q_constant.unwrap_or(0.0)).map_err(|e| usage("model.q_constant", e))
    }

    pub fn spectral_blocks(&self) -> Vec<SpectralBlock> {
        self.model
            .blocks
            .iter()
            .flatten()
            .map(|b| match *b {
                BlockConfig::Invariant => SpectralBlock::Invariant,
                BlockConfig::Pair { lambda } => SpectralBlock::Pair { lambda },
            })
            .collect()
    }

    /// Build the model; library errors here are reported as failed checks by the caller.
    pub fn build_model(&self, cache: Option<GramCache>) -> qfock_core::Result<Model> {
        let n = self.model.truncation;
        match self.model.kind {
            ModelKindConfig::Mixed => {
                let q = self.q_matrix().map_err(|e| qfock_core::QfockError::Domain(e.0))?;
                Ok(Model::Mixed(match cache {
                    Some(c) => FockModel::mixed_with_cache(q, n, c)?,
                    None => FockModel::mixed(q, n)?,
                }))
            }
            ModelKindConfig::ArakiWoods => {
                let blocks = self.spectral_blocks();
                let q = self.model.q_constant.unwrap_or(0.0);
                Ok(Model::ArakiWoods(match cache {
                    Some(c) => AwModel::with_cache(&blocks, q, n, c)?,
                    None => AwModel::new(&blocks, q, n)?,
                }))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asymmetric_q_names_the_pair() {
        let err = RunConfig::parse(
            "[model]\nkind = \"mixed\"\ntruncation = 3\nq = [[0.1, 0.2], [0.3, 0.1]]\n",
        )
        .unwrap_err();
        assert!(err.0.contains("model.q") && err.0.contains("q[0][1]"), "{}", err.0);
    }

    #[test]
    fn araki_woods_fields() {
        let ok = RunConfig::parse(
            "[model]\nkind = \"araki-woods\"\ntruncation = 3\nq_constant = 0.3\nblocks = [{ kind = \"invariant\" }, { kind = \"pair\", lambda = 4.0 }]\n",
        )
        .unwrap();
        assert_eq!(ok.q_matrix().unwrap().d(), 3);
        let bad = RunConfig::parse(
            "[model]\nkind = \"araki-woods\"\ntruncation = 3\nq_constant = 0.3\nblocks = [{ kind = \"pair\", lambda = -1.0 }]\n",
        )
        .unwrap_err();
        assert!(bad.0.contains("model.blocks[0].lambda"));
        let unknown = RunConfig::parse("[model]\nkind = \"mixed\"\ntruncation = 3\nq_constant = 0.1\nd = 1\nfoo = 1\n").unwrap_err();
        assert!(unknown.0.contains("foo"));
    }

    #[test]
    fn rational_entries() {
        let cfg = RunConfig::parse("[model]\nkind = \"mixed\"\ntruncation = 2\nq_rational = [[\"1/3\"]]\n").unwrap();
        assert!((cfg.q_matrix().unwrap().get(0, 0) - 1.0 / 3.0).abs() < 1e-16);
        let bad = RunConfig::parse("[model]\nkind = \"mixed\"\ntruncation = 2\nq_rational = [[\"x\"]]\n").unwrap_err();
        assert!(bad.0.contains("q_rational[0][0]"));
    }
}
