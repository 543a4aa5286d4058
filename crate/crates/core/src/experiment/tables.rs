//! Built-in environments, market configurations and strategy profiles.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::Time;
use crate::market::SimParams;
use crate::traders::{GreedyVariant, STRATEGY_TABLE};
use crate::Error;

/// Market environment parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub n_zi: usize,
    pub arrival_rate: f64,
    pub kappa: f64,
    pub horizon: Time,
}

pub const ENVIRONMENTS: [Environment; 3] = [
    Environment {
        n_zi: 24,
        arrival_rate: 0.05,
        kappa: 0.05,
        horizon: 15_000,
    },
    Environment {
        n_zi: 238,
        arrival_rate: 0.005,
        kappa: 0.02,
        horizon: 10_000,
    },
    Environment {
        n_zi: 58,
        arrival_rate: 0.005,
        kappa: 0.02,
        horizon: 5_000,
    },
];

/// Latencies run for each environment, in ticks.
pub const LATENCY_GRIDS: [&[Time]; 3] = [
    &[0, 100, 200, 300, 400, 600, 700, 900],
    &[0, 50, 100],
    &[0, 25, 50, 75, 100],
];

/// Built-in environment by 1-based id.
pub fn environment(id: u8) -> Result<Environment, Error> {
    ENVIRONMENTS
        .get((id as usize).wrapping_sub(1))
        .copied()
        .ok_or_else(|| Error::InvalidParameter(format!("unknown environment {id}; expected 1, 2 or 3")))
}

/// Parameters shared by every configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Defaults {
    pub fundamental_mean: f64,
    pub shock_variance: f64,
    pub pv_variance: f64,
    pub alpha: f64,
    pub q_max: i32,
}

pub const DEFAULTS: Defaults = Defaults {
    fundamental_mean: 100_000.0,
    shock_variance: 5.0e6,
    pv_variance: 5.0e6,
    alpha: 0.001,
    q_max: 10,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MarketConfig {
    /// One exchange.
    #[serde(rename = "cda")]
    Cda,
    #[serde(rename = "2m-nola")]
    TwoMarketNoLa,
    #[serde(rename = "2m-la")]
    TwoMarketLa,
}

impl MarketConfig {
    pub const ALL: [MarketConfig; 3] = [MarketConfig::Cda, MarketConfig::TwoMarketNoLa, MarketConfig::TwoMarketLa];

    pub fn as_str(self) -> &'static str {
        match self {
            MarketConfig::Cda => "cda",
            MarketConfig::TwoMarketNoLa => "2m-nola",
            MarketConfig::TwoMarketLa => "2m-la",
        }
    }

    pub fn n_exchanges(self) -> usize {
        match self {
            MarketConfig::Cda => 1,
            _ => 2,
        }
    }

    pub fn with_la(self) -> bool {
        self == MarketConfig::TwoMarketLa
    }
}

impl fmt::Display for MarketConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MarketConfig {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        MarketConfig::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown market configuration '{s}'")))
    }
}

/// Probability of each strategy row, `ZI_1` first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile(pub [f64; 11]);

impl StrategyProfile {
    /// Validate, renormalizing a vector that is off by more than rounding.
    pub fn new(probs: [f64; 11]) -> Result<Self, Error> {
        Self::labelled(probs, "strategy profile")
    }

    /// As [`StrategyProfile::new`], naming the profile in the warning.
    pub fn labelled(probs: [f64; 11], label: &str) -> Result<Self, Error> {
        let (profile, sum) = Self::checked(probs)?;
        if (sum - 1.0).abs() > 1e-9 {
            log::warn!("{label} sums to {sum}; renormalizing to 1");
        }
        Ok(profile)
    }

    /// Validated, renormalized profile and the original sum.
    fn checked(mut probs: [f64; 11]) -> Result<(Self, f64), Error> {
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidParameter(format!("profile has a negative or non-finite entry: {probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidParameter("profile puts no mass on any strategy".into()));
        }
        if (sum - 1.0).abs() > 1e-9 {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        Ok((StrategyProfile(probs), sum))
    }

    pub fn point_mass(row: u8) -> Result<Self, Error> {
        let mut probs = [0.0; 11];
        let slot = probs
            .get_mut((row as usize).wrapping_sub(1))
            .ok_or_else(|| Error::InvalidParameter(format!("strategy row {row} outside 1..=11")))?;
        *slot = 1.0;
        Ok(StrategyProfile(probs))
    }

    pub fn probabilities(&self) -> &[f64; 11] {
        &self.0
    }

    /// Rows with positive probability.
    pub fn support(&self) -> Vec<u8> {
        (1..=STRATEGY_TABLE.len() as u8).filter(|&r| self.0[r as usize - 1] > 0.0).collect()
    }
}

/// One (environment, configuration, latency) combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub env: u8,
    pub config: MarketConfig,
    pub latency: Time,
}

impl Cell {
    pub fn new(env: u8, config: MarketConfig, latency: Time) -> Result<Self, Error> {
        environment(env)?;
        if config == MarketConfig::Cda && latency != 0 {
            return Err(Error::InvalidParameter("a single exchange has no SIP latency".into()));
        }
        if config == MarketConfig::TwoMarketLa && latency == 0 {
            return Err(Error::InvalidParameter(
                "no built-in profile for an arbitrageur at zero latency".into(),
            ));
        }
        Ok(Cell { env, config, latency })
    }

    /// Experiment id such as `env1-2mla-d100`.
    pub fn id(&self) -> String {
        match self.config {
            MarketConfig::Cda => format!("env{}-cda", self.env),
            MarketConfig::TwoMarketNoLa => format!("env{}-2mnola-d{}", self.env, self.latency),
            MarketConfig::TwoMarketLa => format!("env{}-2mla-d{}", self.env, self.latency),
        }
    }

    pub fn parse(id: &str) -> Result<Self, Error> {
        let bad = || Error::InvalidParameter(format!("malformed experiment id '{id}'"));
        let rest = id.strip_prefix("env").ok_or_else(bad)?;
        let (env, rest) = rest.split_once('-').ok_or_else(bad)?;
        let env: u8 = env.parse().map_err(|_| bad())?;
        let (config, latency) = if rest == "cda" {
            (MarketConfig::Cda, 0)
        } else if let Some(d) = rest.strip_prefix("2mnola-d") {
            (MarketConfig::TwoMarketNoLa, d.parse().map_err(|_| bad())?)
        } else if let Some(d) = rest.strip_prefix("2mla-d") {
            (MarketConfig::TwoMarketLa, d.parse().map_err(|_| bad())?)
        } else {
            return Err(bad());
        };
        Cell::new(env, config, latency)
    }

    pub fn environment(&self) -> Environment {
        environment(self.env).expect("validated at construction")
    }

    /// Full run parameters with the default constants.
    pub fn sim_params(&self, variant: GreedyVariant) -> SimParams {
        let env = self.environment();
        SimParams {
            horizon: env.horizon,
            arrival_rate: env.arrival_rate,
            fundamental_mean: DEFAULTS.fundamental_mean,
            kappa: env.kappa,
            shock_variance: DEFAULTS.shock_variance,
            pv_variance: DEFAULTS.pv_variance,
            q_max: DEFAULTS.q_max,
            alpha: DEFAULTS.alpha,
            n_exchanges: self.config.n_exchanges(),
            with_la: self.config.with_la(),
            latency: self.latency,
            variant,
            greedy_enabled: true,
        }
    }

    /// Built-in profile; warns if the published row needed renormalizing.
    pub fn profile(&self) -> Result<StrategyProfile, Error> {
        let probs = raw_profiles(verified_profiles_csv()?)?
            .remove(self)
            .ok_or_else(|| Error::InvalidParameter(format!("no built-in profile for {}", self.id())))?;
        StrategyProfile::labelled(probs, &format!("profile of {}", self.id()))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// Every built-in cell, in table order.
pub fn all_cells() -> Vec<Cell> {
    let mut cells = Vec::new();
    for (i, grid) in LATENCY_GRIDS.iter().enumerate() {
        let env = i as u8 + 1;
        cells.push(Cell {
            env,
            config: MarketConfig::Cda,
            latency: 0,
        });
        for &d in grid.iter() {
            cells.push(Cell {
                env,
                config: MarketConfig::TwoMarketNoLa,
                latency: d,
            });
            if d > 0 {
                cells.push(Cell {
                    env,
                    config: MarketConfig::TwoMarketLa,
                    latency: d,
                });
            }
        }
    }
    cells
}

pub const PROFILES_CSV: &str = include_str!("../../data/profiles.csv");
pub const PROFILES_SHA256: &str = "9a7c80a1c28a0d8722cb951d8e4a4b136134fd9dd560f981c498cad0b6686d65";

pub const TARGETS_CSV: &str = include_str!("../../data/ww_targets.csv");
pub const TARGETS_SHA256: &str = "6ee8bc3a03f1bb84d7b82eca96f1db7651090ae97c7fda2d94d2ee254dfcbd9d";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Deserialize)]
struct ProfileRow {
    env: u8,
    config: MarketConfig,
    latency: Time,
    strategy: u8,
    probability: f64,
}

/// Parse the embedded profile table, verifying its checksum.
pub fn builtin_profiles() -> Result<BTreeMap<Cell, StrategyProfile>, Error> {
    parse_profiles(verified_profiles_csv()?)
}

fn verified_profiles_csv() -> Result<&'static str, Error> {
    let digest = sha256_hex(PROFILES_CSV.as_bytes());
    if digest != PROFILES_SHA256 {
        return Err(Error::Config(format!("profile table checksum mismatch: {digest}")));
    }
    Ok(PROFILES_CSV)
}

/// Profiles from CSV text, renormalized silently.
pub fn parse_profiles(text: &str) -> Result<BTreeMap<Cell, StrategyProfile>, Error> {
    raw_profiles(text)?
        .into_iter()
        .map(|(cell, probs)| StrategyProfile::checked(probs).map(|(p, _)| (cell, p)))
        .collect()
}

fn raw_profiles(text: &str) -> Result<BTreeMap<Cell, [f64; 11]>, Error> {
    let mut raw: BTreeMap<Cell, [f64; 11]> = BTreeMap::new();
    for row in csv::Reader::from_reader(text.as_bytes()).deserialize() {
        let row: ProfileRow = row?;
        let cell = Cell::new(row.env, row.config, row.latency)?;
        let slot = (row.strategy as usize)
            .checked_sub(1)
            .filter(|&i| i < 11)
            .ok_or_else(|| Error::InvalidParameter(format!("strategy row {} outside 1..=11", row.strategy)))?;
        raw.entry(cell).or_insert([0.0; 11])[slot] += row.probability;
    }
    Ok(raw)
}

/// Published target means keyed by `(experiment id, metric)`.
pub fn builtin_targets() -> Result<BTreeMap<(String, String), f64>, Error> {
    let digest = sha256_hex(TARGETS_CSV.as_bytes());
    if digest != TARGETS_SHA256 {
        return Err(Error::Config(format!("targets table checksum mismatch: {digest}")));
    }
    parse_targets(TARGETS_CSV.as_bytes())
}

#[derive(Deserialize)]
struct TargetRow {
    experiment_id: String,
    metric: String,
    target: f64,
}

pub fn parse_targets<R: std::io::Read>(reader: R) -> Result<BTreeMap<(String, String), f64>, Error> {
    let mut out = BTreeMap::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: TargetRow = row?;
        out.insert((row.experiment_id, row.metric), row.target);
    }
    Ok(out)
}
