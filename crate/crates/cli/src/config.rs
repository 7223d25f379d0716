//! Experiment configuration, schema version 1.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sclab_core::cones::TransactionCostSpec;
use sclab_core::goals::Goal;
use sclab_core::market::PriceModel;
use sclab_core::search::{ControlProblem, MarketBenchmark, MarketProblem, PolicyFamily, StorageProblem};
use sclab_core::storage::{DemandModel, StorageBenchmark, StorageCostSpec};
use sclab_core::{Error, TimeGrid};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub model: ModelConfig,
    pub goal: Goal,
    pub policy: PolicyFamily,
    pub search: SearchConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub metric: MetricConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Market(MarketModel),
    Storage(StorageModel),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketModel {
    pub fees: TransactionCostSpec,
    pub prices: PriceModel,
    pub endowment: Vec<f64>,
    pub horizon: f64,
    pub n_steps: usize,
    #[serde(default = "buy_and_hold")]
    pub benchmark: MarketBenchmark,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageModel {
    pub demand: DemandModel,
    pub costs: StorageCostSpec,
    pub budget: f64,
    pub horizon: f64,
    pub n_steps: usize,
    pub benchmark: StorageBenchmark,
}

fn buy_and_hold() -> MarketBenchmark {
    MarketBenchmark::BuyAndHold
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub n_paths: usize,
    /// Candidate evaluations per optimization.
    pub budget: usize,
    pub master_seed: u64,
    /// Step counts for the refinement study; defaults to the model grid.
    #[serde(default)]
    pub grids: Vec<usize>,
    /// Sample sizes for the refinement study; defaults to `n_paths`.
    #[serde(default)]
    pub sample_sizes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub directory: Option<PathBuf>,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: None,
            formats: all_formats(),
        }
    }
}

fn all_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    /// Path dump to read; defaults to `controls.csv` in the output directory.
    #[serde(default)]
    pub input: Option<PathBuf>,
    /// Column prefix of the dump.
    #[serde(default)]
    pub prefix: Option<String>,
    /// Only the first paths of the dump are compared.
    #[serde(default)]
    pub max_paths: Option<usize>,
}

/// Configuration problem with the offending field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn at(path: &str, e: Error) -> ConfigError {
    let msg = match e {
        Error::InvalidInput(m) => m,
        other => other.to_string(),
    };
    ConfigError(format!("{path}: {msg}"))
}

/// A validated problem ready to run.
pub enum Problem {
    Market(MarketProblem),
    Storage(StorageProblem),
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: cannot read config: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "model" {
                if let Some(deeper) = model_error(text) {
                    return deeper;
                }
            }
            if path == "." {
                ConfigError(inner.to_string())
            } else {
                ConfigError(format!("{path}: {inner}"))
            }
        })?;
        if config.schema != SCHEMA_VERSION {
            return Err(ConfigError(format!(
                "schema: unsupported version {} (expected {SCHEMA_VERSION})",
                config.schema
            )));
        }
        Ok(config)
    }

    /// Checks every section and builds the problem.
    pub fn build(&self) -> Result<Problem, ConfigError> {
        self.goal.validate().map_err(|e| at("goal", e))?;
        let s = &self.search;
        if s.n_paths < 2 {
            return Err(ConfigError("search.n_paths: need at least 2".into()));
        }
        if s.budget == 0 {
            return Err(ConfigError("search.budget: must be positive".into()));
        }
        if let Some(i) = s.sample_sizes.iter().position(|&n| n < 2) {
            return Err(ConfigError(format!("search.sample_sizes[{i}]: need at least 2")));
        }
        if let Some(i) = s.grids.iter().position(|&n| n == 0) {
            return Err(ConfigError(format!("search.grids[{i}]: must be positive")));
        }
        let problem = match &self.model {
            ModelConfig::Market(MarketModel {
                fees,
                prices,
                endowment,
                horizon,
                n_steps,
                benchmark,
            }) => {
                fees.validate().map_err(|e| at("model.fees", e))?;
                prices.validate().map_err(|e| at("model.prices", e))?;
                let grid = grid(*horizon, *n_steps)?;
                if endowment.iter().any(|v| !v.is_finite()) {
                    return Err(ConfigError("model.endowment: entries must be finite".into()));
                }
                Problem::Market(
                    MarketProblem::new(fees.clone(), prices.clone(), endowment.clone(), grid, self.goal, *benchmark)
                        .map_err(|e| at("model", e))?,
                )
            }
            ModelConfig::Storage(StorageModel {
                demand,
                costs,
                budget,
                horizon,
                n_steps,
                benchmark,
            }) => {
                demand.validate().map_err(|e| at("model.demand", e))?;
                let grid = grid(*horizon, *n_steps)?;
                costs.validate(grid.horizon()).map_err(|e| at("model.costs", e))?;
                benchmark.validate().map_err(|e| at("model.benchmark", e))?;
                Problem::Storage(
                    StorageProblem::new(demand.clone(), costs.clone(), *budget, grid, self.goal, *benchmark)
                        .map_err(|e| at("model", e))?,
                )
            }
        };
        match &problem {
            Problem::Market(p) => self.policy.validate(p),
            Problem::Storage(p) => self.policy.validate(p),
        }
        .map_err(|e| at("policy", e))?;
        let base = match &problem {
            Problem::Market(p) => p.grid().n_steps(),
            Problem::Storage(p) => p.grid().n_steps(),
        };
        let mut grids = self.grids_or(base);
        grids.sort_unstable();
        for w in grids.windows(2) {
            if w[1] % w[0] != 0 || !(w[1] / w[0]).is_power_of_two() {
                return Err(ConfigError(format!(
                    "search.grids: {} and {} are not dyadically nested",
                    w[0], w[1]
                )));
            }
        }
        Ok(problem)
    }

    pub fn grids_or(&self, base: usize) -> Vec<usize> {
        if self.search.grids.is_empty() {
            vec![base]
        } else {
            self.search.grids.clone()
        }
    }

    pub fn sample_sizes(&self) -> Vec<usize> {
        if self.search.sample_sizes.is_empty() {
            vec![self.search.n_paths]
        } else {
            self.search.sample_sizes.clone()
        }
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}

/// Internally tagged enums buffer their content, which loses the field path;
/// deserialize the model section again as its concrete variant.
fn model_error(text: &str) -> Option<ConfigError> {
    fn deeper<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Option<ConfigError> {
        let e = serde_path_to_error::deserialize::<_, T>(v).err()?;
        let path = e.path().to_string();
        Some(ConfigError(format!("model.{path}: {}", e.into_inner())))
    }
    let root: serde_json::Value = serde_json::from_str(text).ok()?;
    let mut model = root.get("model")?.as_object()?.clone();
    let kind = model.remove("kind")?;
    match kind.as_str()? {
        "market" => deeper::<MarketModel>(model.into()),
        "storage" => deeper::<StorageModel>(model.into()),
        _ => None,
    }
}

fn grid(horizon: f64, n_steps: usize) -> Result<TimeGrid, ConfigError> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(ConfigError("model.horizon: must be finite and positive".into()));
    }
    if n_steps == 0 {
        return Err(ConfigError("model.n_steps: must be positive".into()));
    }
    TimeGrid::new(horizon, n_steps).map_err(|e| at("model", e))
}
