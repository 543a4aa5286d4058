//! Experiment description files (TOML).
//!
//! A file names a built-in cell (`experiment = "env3-cda"`) or spells the
//! pieces out (`env`, `config`, `latency`), and may override any default.
//! Example:
//!
//! ```toml
//! experiment = "env3-2mla-d25"
//! variant = "marketsim"
//! mixtures = 100
//! runs = 20
//! seed = 7
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tables::{environment, Cell, Defaults, Environment, MarketConfig, StrategyProfile, DEFAULTS};
use crate::engine::Time;
use crate::market::SimParams;
use crate::metrics::ExecTimeMode;
use crate::traders::{GreedyVariant, StrategyId};
use crate::Error;

/// Raw file contents. Every field is optional; [`ExperimentFile::resolve`]
/// fills gaps from the built-in tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Built-in experiment id such as `env1-2mla-d100`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<MarketConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency: Option<Time>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<GreedyVariant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub greedy: Option<bool>,
    /// Inline probability vector over the eleven strategy rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<f64>>,
    /// Explicit strategy row for every trader; replaces mixture sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixtures: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exec_time: Option<ExecTimeMode>,
    /// Explicit environment, overriding `env`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<Environment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defaults: Option<Defaults>,
}

impl ExperimentFile {
    pub fn parse(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String, Error> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// File for a built-in cell with everything else defaulted.
    pub fn builtin(id: &str) -> Self {
        ExperimentFile {
            experiment: Some(id.to_string()),
            ..Self::default()
        }
    }

    pub fn resolve(&self) -> Result<ExperimentSpec, Error> {
        let cell = match &self.experiment {
            Some(id) => {
                let cell = Cell::parse(id)?;
                let conflict = |field: &str| {
                    Error::Config(format!("'{field}' conflicts with built-in experiment '{id}'"))
                };
                if self.env.is_some_and(|e| e != cell.env) {
                    return Err(conflict("env"));
                }
                if self.config.is_some_and(|c| c != cell.config) {
                    return Err(conflict("config"));
                }
                if self.latency.is_some_and(|d| d != cell.latency) {
                    return Err(conflict("latency"));
                }
                Some(cell)
            }
            None => None,
        };

        let env_id = cell.map(|c| c.env).or(self.env);
        let env = match (&self.environment, env_id) {
            (Some(e), _) => *e,
            (None, Some(id)) => environment(id).map_err(|e| Error::Config(format!("env: {e}")))?,
            (None, None) => return Err(Error::Config("missing field 'env' (or 'experiment' / [environment])".into())),
        };
        let config = cell.map(|c| c.config).or(self.config).unwrap_or(MarketConfig::Cda);
        let latency = cell.map(|c| c.latency).or(self.latency).unwrap_or(0);
        if config == MarketConfig::Cda && latency != 0 {
            return Err(Error::Config("latency: a single exchange has no SIP latency".into()));
        }
        let d = self.defaults.unwrap_or(DEFAULTS);
        let variant = self.variant.unwrap_or(GreedyVariant::BestGuess);
        let params = SimParams {
            horizon: env.horizon,
            arrival_rate: env.arrival_rate,
            fundamental_mean: d.fundamental_mean,
            kappa: env.kappa,
            shock_variance: d.shock_variance,
            pv_variance: d.pv_variance,
            q_max: d.q_max,
            alpha: d.alpha,
            n_exchanges: config.n_exchanges(),
            with_la: config.with_la(),
            latency,
            variant,
            greedy_enabled: self.greedy.unwrap_or(true),
        };
        params.validate().map_err(|e| Error::Config(e.to_string()))?;

        let source = match (&self.mixture, &self.profile) {
            (Some(_), Some(_)) => return Err(Error::Config("give either 'mixture' or 'profile', not both".into())),
            (Some(rows), None) => {
                if rows.len() != env.n_zi {
                    return Err(Error::Config(format!(
                        "mixture: {} entries for {} traders",
                        rows.len(),
                        env.n_zi
                    )));
                }
                let ids = rows
                    .iter()
                    .map(|&r| StrategyId::new(r))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| Error::Config(format!("mixture: {e}")))?;
                MixtureSource::Fixed(ids)
            }
            (None, Some(v)) => {
                let probs: [f64; 11] = v
                    .as_slice()
                    .try_into()
                    .map_err(|_| Error::Config(format!("profile: expected 11 probabilities, got {}", v.len())))?;
                MixtureSource::Profile(StrategyProfile::new(probs).map_err(|e| Error::Config(format!("profile: {e}")))?)
            }
            (None, None) => {
                let builtin = match cell {
                    Some(c) => Some(c),
                    None if self.environment.is_none() => env_id
                        .map(|e| Cell::new(e, config, latency))
                        .transpose()
                        .map_err(|e| Error::Config(e.to_string()))?,
                    None => None,
                };
                let c = builtin.ok_or_else(|| Error::Config("missing field 'profile' for a custom environment".into()))?;
                MixtureSource::Profile(c.profile().map_err(|e| Error::Config(e.to_string()))?)
            }
        };

        if env.n_zi == 0 {
            return Err(Error::Config("environment: need at least one trader".into()));
        }
        let mixtures = self.mixtures.unwrap_or(500);
        let runs = self.runs.unwrap_or(100);
        if mixtures == 0 {
            return Err(Error::Config("mixtures: must be at least 1".into()));
        }
        if runs == 0 {
            return Err(Error::Config("runs: must be at least 1".into()));
        }

        let id = match (&self.name, cell) {
            (Some(n), _) => n.clone(),
            (None, Some(c)) => c.id(),
            (None, None) => match env_id.filter(|_| self.environment.is_none()) {
                Some(e) => Cell::new(e, config, latency).map(|c| c.id()).unwrap_or_else(|_| "custom".into()),
                None => "custom".into(),
            },
        };
        let env_label = match (self.environment, env_id) {
            (None, Some(e)) => e.to_string(),
            _ => "custom".into(),
        };

        Ok(ExperimentSpec {
            id,
            env_label,
            config,
            n_zi: env.n_zi,
            params,
            source,
            mixtures,
            runs,
            seed: self.seed.unwrap_or(0),
            exec_time: self.exec_time.unwrap_or_default(),
            output: self.output.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum MixtureSource {
    Profile(StrategyProfile),
    Fixed(Vec<StrategyId>),
}

/// Fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub id: String,
    pub env_label: String,
    pub config: MarketConfig,
    pub n_zi: usize,
    pub params: SimParams,
    pub source: MixtureSource,
    pub mixtures: usize,
    pub runs: usize,
    pub seed: u64,
    pub exec_time: ExecTimeMode,
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn builtin(id: &str, variant: GreedyVariant, mixtures: usize, runs: usize, seed: u64) -> Result<Self, Error> {
        ExperimentFile {
            experiment: Some(id.into()),
            variant: Some(variant),
            mixtures: Some(mixtures),
            runs: Some(runs),
            seed: Some(seed),
            ..ExperimentFile::default()
        }
        .resolve()
    }

    pub fn variant(&self) -> GreedyVariant {
        self.params.variant
    }
}
