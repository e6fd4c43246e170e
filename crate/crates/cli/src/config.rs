//! Config files for each subcommand. Unknown keys are rejected.

use std::ops::Range;
use std::path::{Path, PathBuf};

use ccqkan::experiments::{GridSpec, MnistSpec};
use ccqkan::{EvalCondition, ModelVariant, TrainConfig, REFERENCE_CONFIGS};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Parses `a..b` into a half-open range.
pub fn parse_range(text: &str) -> Result<Range<u64>, String> {
    let (a, b) = text
        .split_once("..")
        .ok_or_else(|| format!("expected a range like 0..16, got `{text}`"))?;
    let a: u64 = a
        .trim()
        .parse()
        .map_err(|_| format!("bad range start in `{text}`"))?;
    let b: u64 = b
        .trim()
        .parse()
        .map_err(|_| format!("bad range end in `{text}`"))?;
    if a >= b {
        return Err(format!("range `{text}` is empty"));
    }
    Ok(a..b)
}

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridFile {
    pub configs: Vec<[usize; 2]>,
    pub conditions: Vec<EvalCondition>,
    pub models: Vec<ModelVariant>,
    pub seeds: String,
    pub data_seed: u64,
    pub n_points: usize,
    pub workers: usize,
    pub train: TrainConfig,
}

impl Default for GridFile {
    fn default() -> Self {
        let spec = GridSpec::default();
        Self {
            configs: REFERENCE_CONFIGS.iter().map(|&(n, d)| [n, d]).collect(),
            conditions: spec.conditions,
            models: spec.models,
            seeds: "0..16".into(),
            data_seed: spec.data_seed,
            n_points: spec.n_points,
            workers: 1,
            train: spec.train,
        }
    }
}

impl GridFile {
    pub fn to_spec(&self) -> Result<GridSpec, CliError> {
        Ok(GridSpec {
            configs: self.configs.iter().map(|&[n, d]| (n, d)).collect(),
            conditions: self.conditions.clone(),
            models: self.models.clone(),
            seeds: parse_range(&self.seeds).map_err(|e| CliError::Config(format!("seeds: {e}")))?,
            train: self.train,
            data_seed: self.data_seed,
            n_points: self.n_points,
            workers: self.workers.max(1),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub n: usize,
    pub degree: usize,
    pub model: ModelVariant,
    pub condition: EvalCondition,
    pub seed: u64,
    pub data_seed: u64,
    pub n_points: usize,
    pub train: TrainConfig,
}

impl Default for TrainFile {
    fn default() -> Self {
        Self {
            n: 2,
            degree: 2,
            model: ModelVariant::Original,
            condition: EvalCondition::ideal(),
            seed: 0,
            data_seed: 0,
            n_points: 30,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsFile {
    pub results: Option<PathBuf>,
    pub curve_seeds: String,
    pub test_seeds: String,
}

impl Default for StatsFile {
    fn default() -> Self {
        Self {
            results: None,
            curve_seeds: "0..10".into(),
            test_seeds: "0..16".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MnistFile {
    /// Digits CSV; the bundled copy is used when absent.
    pub digits: Option<PathBuf>,
    pub widths: Vec<usize>,
    pub degree: Option<usize>,
    pub splits: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub split_seed: u64,
    pub models: Option<Vec<ModelVariant>>,
    pub workers: usize,
    pub train: TrainConfig,
}

impl Default for MnistFile {
    fn default() -> Self {
        let b = MnistSpec::binary_default();
        Self {
            digits: None,
            widths: b.widths,
            degree: None,
            splits: b.splits,
            n_train: b.n_train,
            n_test: b.n_test,
            split_seed: b.split_seed,
            models: None,
            workers: 1,
            train: b.train,
        }
    }
}

impl MnistFile {
    pub fn to_spec(&self, base: MnistSpec) -> MnistSpec {
        MnistSpec {
            widths: self.widths.clone(),
            degree: self.degree.unwrap_or(base.degree),
            splits: self.splits,
            n_train: self.n_train,
            n_test: self.n_test,
            split_seed: self.split_seed,
            models: self.models.clone().unwrap_or(base.models),
            train: self.train,
            workers: self.workers.max(1),
        }
    }
}
