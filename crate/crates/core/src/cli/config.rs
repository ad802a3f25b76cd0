//! JSON run configurations. Every document is a single object; unknown keys
//! are rejected and errors name the offending key path.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::garch::{Initializer, ModelOrders, ParamVector};
use crate::harness::{AreaDomain, BootstrapSettings, NoiseSpec};
use crate::qml::QmlConfig;

/// Parses a config document, reporting the key path on failure.
pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let key = if path == "." { "<root>".to_owned() } else { path };
        Error::config(key, e.inner().to_string())
    })
}

pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Relative paths in a config are taken relative to the config file.
pub fn resolve_path(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn garch11() -> ModelOrders {
    ModelOrders::new(1, 1).expect("valid orders")
}
fn yes() -> bool {
    true
}
fn default_m() -> usize {
    100
}
fn default_r() -> usize {
    10
}
fn default_level() -> f64 {
    0.9
}
fn default_resolution() -> usize {
    50
}

/// Where the observed series comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    /// A GARCH path started from the unconditional variance of `theta_star`.
    Simulate {
        theta_star: ParamVector,
        noise: NoiseSpec,
        n: usize,
        #[serde(default)]
        burn_in: usize,
    },
    /// Compound returns of a `date,close` file.
    Prices {
        path: PathBuf,
        #[serde(default = "garch11")]
        orders: ModelOrders,
        #[serde(default = "yes")]
        standardize: bool,
    },
}

impl DataSource {
    pub fn orders(&self) -> ModelOrders {
        match self {
            DataSource::Simulate { theta_star, .. } => theta_star.orders(),
            DataSource::Prices { orders, .. } => *orders,
        }
    }
}

/// Parameter points to rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GridSpec {
    /// Cell centers of a `resolution²` grid over `(α, β) ∈ [0,1)²`, keeping
    /// `α + β < 1`, with `ω = 1 - α - β`.
    UnitVariance {
        #[serde(default = "default_resolution")]
        resolution: usize,
    },
    /// `α` fixed at its estimate; cell centers over `β ∈ [0, 1 - α̂)` and
    /// `ω ∈ (0, omega_max)`, `omega_max` defaulting to `2ω̂`.
    FixAlpha {
        #[serde(default = "default_resolution")]
        resolution: usize,
        #[serde(default)]
        omega_max: Option<f64>,
    },
    /// The single point `θ̂`.
    Estimate,
    Points { points: Vec<ParamVector> },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::UnitVariance {
            resolution: default_resolution(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScopeRegionConfig {
    pub data: DataSource,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_r")]
    pub r: usize,
    /// Root of the noise and permutation streams.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub standardize_residuals: bool,
    #[serde(default)]
    pub initializer: Initializer,
    #[serde(default)]
    pub qml: QmlConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub prices: PathBuf,
    #[serde(default)]
    pub symbol: Option<String>,
    #[serde(default = "garch11")]
    pub orders: ModelOrders,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_r")]
    pub r: usize,
    /// Nominal level of the three baselines.
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub standardize_residuals: bool,
    #[serde(default)]
    pub initializer: Initializer,
    #[serde(default = "default_area_samples")]
    pub area_samples: usize,
    /// Area draws for the LR region, where every draw costs a bootstrap run.
    #[serde(default = "default_lr_area_samples")]
    pub lr_area_samples: usize,
    #[serde(default)]
    pub area_domain: AreaDomain,
    #[serde(default)]
    pub bootstrap: BootstrapSettings,
    #[serde(default)]
    pub qml: QmlConfig,
}

fn default_area_samples() -> usize {
    1000
}
fn default_lr_area_samples() -> usize {
    100
}

/// Synthetic `date,close` file whose returns follow a GARCH process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthPricesConfig {
    pub theta_star: ParamVector,
    pub noise: NoiseSpec,
    /// Number of returns; the file has one more row.
    pub n: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start_date: String,
    #[serde(default = "default_initial_price")]
    pub initial_price: f64,
    /// Daily returns are `return_scale · X_t`.
    #[serde(default = "default_return_scale")]
    pub return_scale: f64,
}

fn default_burn_in() -> usize {
    1000
}
fn default_start() -> String {
    "2014-01-02".into()
}
fn default_initial_price() -> f64 {
    100.0
}
fn default_return_scale() -> f64 {
    0.01
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_name_the_key() {
        let err = parse_config::<ScopeRegionConfig>(
            r#"{"data": {"source": "simulate", "theta_star": {"omega": 0.23, "alphas": [0.44], "betas": [0.33]},
                "noise": {"family": "logistic"}, "n": 100}, "grid": {"mode": "unit-variance", "resolutoin": 5}}"#,
        )
        .unwrap_err();
        match err {
            Error::Config { key, message } => {
                assert!(key.starts_with("grid"), "{key}");
                assert!(message.contains("resolutoin"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        match parse_config::<MarketConfig>(r#"{"prices": "a.csv", "mm": 3}"#).unwrap_err() {
            Error::Config { message, .. } => assert!(message.contains("mm")),
            other => panic!("{other:?}"),
        }
        let err = parse_config::<MarketConfig>(r#"{"symbol": "x"}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn defaults_fill_in() {
        let c: ScopeRegionConfig = parse_config(
            r#"{"data": {"source": "prices", "path": "spx.csv"}, "grid": {"mode": "estimate"}}"#,
        )
        .unwrap();
        assert_eq!((c.m, c.r, c.seed), (100, 10, 0));
        assert_eq!(c.data.orders(), garch11());
        assert_eq!(c.grid, GridSpec::Estimate);
        let back: ScopeRegionConfig = parse_config(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let base = Path::new("/data/runs");
        assert_eq!(resolve_path(base, Path::new("a.csv")), PathBuf::from("/data/runs/a.csv"));
        assert_eq!(resolve_path(base, Path::new("/x/a.csv")), PathBuf::from("/x/a.csv"));
    }
}
