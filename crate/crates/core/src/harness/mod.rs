//! Monte Carlo coverage and relative-area experiments.

mod noise;
mod region;

pub use noise::{generate_noise, NoiseSpec};
pub use region::{relative_area, AreaDomain, LrRegion, Region, ScopeRegion};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    asymptotic_region, check_failures, lr_accepts, lr_bootstrap_pvalue, residual_bootstrap, BootstrapConfig,
    BootstrapRegion,
};
use crate::error::{Error, Result};
use crate::garch::{simulate, Initializer, ParamVector, SeriesSample};
use crate::qml::{asymptotic_covariance, qmle_fit, QmlConfig};
use crate::rng::{derive, stream};
use crate::scope::{in_region, ScopeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Scope,
    AsymEllipsoid,
    ResBootstrap,
    LrBootstrap,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Scope,
        Method::AsymEllipsoid,
        Method::ResBootstrap,
        Method::LrBootstrap,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Scope => "scope",
            Method::AsymEllipsoid => "asym-ellipsoid",
            Method::ResBootstrap => "res-bootstrap",
            Method::LrBootstrap => "lr-bootstrap",
        }
    }
}

/// Bootstrap settings shared by the two bootstrap methods. The seed is
/// derived per trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSettings {
    pub b: usize,
    pub burn_in: usize,
    pub max_failure_rate: f64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        let d = BootstrapConfig::default();
        BootstrapSettings {
            b: d.b,
            burn_in: d.burn_in,
            max_failure_rate: d.max_failure_rate,
        }
    }
}

impl BootstrapSettings {
    pub fn config(&self, seed: u64, qml: QmlConfig) -> BootstrapConfig {
        BootstrapConfig {
            b: self.b,
            seed,
            burn_in: self.burn_in,
            max_failure_rate: self.max_failure_rate,
            qml,
        }
    }
}

/// One coverage experiment: a method, a data-generating process and a
/// trial budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSpec {
    pub method: Method,
    pub theta_star: ParamVector,
    pub noise: NoiseSpec,
    pub n: usize,
    pub trials: usize,
    #[serde(default)]
    pub burn_in: usize,
    /// Nominal level for the baselines; ScoPe uses `1 - r/m`.
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default)]
    pub standardize_residuals: bool,
    #[serde(default)]
    pub initializer: Initializer,
    #[serde(default)]
    pub seed: u64,
    /// Uniform draws per trial for the relative area; 0 skips it.
    #[serde(default)]
    pub area_samples: usize,
    #[serde(default)]
    pub area_domain: AreaDomain,
    #[serde(default)]
    pub bootstrap: BootstrapSettings,
    #[serde(default)]
    pub qml: QmlConfig,
    /// Fraction of failed trials tolerated before the run is abandoned.
    #[serde(default = "default_failure_rate")]
    pub max_failure_rate: f64,
}

fn default_level() -> f64 {
    0.9
}
fn default_m() -> usize {
    100
}
fn default_r() -> usize {
    10
}
fn default_failure_rate() -> f64 {
    0.1
}

impl CoverageSpec {
    pub fn new(method: Method, theta_star: ParamVector, noise: NoiseSpec, n: usize, trials: usize) -> Self {
        CoverageSpec {
            method,
            theta_star,
            noise,
            n,
            trials,
            burn_in: 0,
            level: default_level(),
            m: default_m(),
            r: default_r(),
            standardize_residuals: false,
            initializer: Initializer::default(),
            seed: 0,
            area_samples: 0,
            area_domain: AreaDomain::default(),
            bootstrap: BootstrapSettings::default(),
            qml: QmlConfig::default(),
            max_failure_rate: default_failure_rate(),
        }
    }

    pub fn nominal(&self) -> f64 {
        match self.method {
            Method::Scope => 1.0 - self.r as f64 / self.m as f64,
            _ => self.level,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.area_domain.validate()?;
        if self.n < 2 {
            return Err(Error::invalid("n", "need at least 2 observations"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials", "need at least one trial"));
        }
        match self.method {
            Method::Scope => {
                ScopeConfig::new(self.m, self.r, 0)?;
            }
            _ => {
                if !(self.level > 0.0 && self.level < 1.0) {
                    return Err(Error::invalid("level", format!("must lie in (0, 1), got {}", self.level)));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return Err(Error::invalid("max_failure_rate", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// The `index`-th simulated sample, exactly as a coverage run sees it.
    pub fn trial_sample(&self, index: u64) -> Result<SeriesSample> {
        let seed = derive(self.seed, index);
        let noise = generate_noise(&self.noise, self.n + self.burn_in, derive(seed, stream::NOISE))?;
        let init = Initializer::Unconditional
            .conditions(&self.theta_star)
            .expect("parameter-only initializer");
        simulate(&self.theta_star, &noise, &init, self.burn_in)
    }

    fn scope_config(&self, trial_seed: u64) -> Result<ScopeConfig> {
        Ok(ScopeConfig::new(self.m, self.r, derive(trial_seed, stream::PERMUTATIONS))?
            .with_initializer(self.initializer)
            .with_standardized_residuals(self.standardize_residuals))
    }

    fn qml_config(&self) -> QmlConfig {
        QmlConfig {
            initializer: self.initializer,
            ..self.qml
        }
    }

    fn run_trial(&self, index: u64) -> Result<Trial> {
        let trial_seed = derive(self.seed, index);
        let sample = self.trial_sample(index)?;
        let orders = self.theta_star.orders();
        let area_seed = derive(trial_seed, stream::AREA);
        let area = |region: &dyn Region| -> Result<Option<f64>> {
            if self.area_samples == 0 {
                return Ok(None);
            }
            relative_area(region, orders, &self.area_domain, self.area_samples, area_seed).map(Some)
        };
        let theta = &self.theta_star;
        match self.method {
            Method::Scope => {
                let config = self.scope_config(trial_seed)?;
                let perms = config.permutations(sample.len())?;
                let hit = in_region(theta, &sample, &perms, &config)?;
                let region = ScopeRegion {
                    sample: &sample,
                    perms: &perms,
                    config: &config,
                };
                Ok(Trial { hit, area: area(&region)? })
            }
            Method::AsymEllipsoid => {
                let qml = self.qml_config();
                let fit = qmle_fit(&sample, orders, &qml)?;
                let resolved = qml.initializer.apply(&fit.theta_hat, &sample);
                let cov = asymptotic_covariance(&fit.theta_hat, &resolved)?;
                let region = asymptotic_region(&fit, &cov, self.level, sample.len())?;
                Ok(Trial {
                    hit: region.contains(theta),
                    area: area(&region)?,
                })
            }
            Method::ResBootstrap => {
                let qml = self.qml_config();
                let fit = qmle_fit(&sample, orders, &qml)?;
                let config = self.bootstrap.config(derive(trial_seed, stream::BOOTSTRAP), qml);
                let boots = residual_bootstrap(&sample, &fit, &config)?;
                let region = BootstrapRegion::new(&boots, self.level)?;
                Ok(Trial {
                    hit: region.contains(theta),
                    area: area(&region)?,
                })
            }
            Method::LrBootstrap => {
                let qml = self.qml_config();
                let fit = qmle_fit(&sample, orders, &qml)?;
                let config = self.bootstrap.config(derive(trial_seed, stream::BOOTSTRAP), qml);
                let test = lr_bootstrap_pvalue(theta, &sample, &fit, &config)?;
                let region = LrRegion {
                    sample: &sample,
                    fit: &fit,
                    config: &config,
                    level: self.level,
                };
                Ok(Trial {
                    hit: lr_accepts(test.p_value, self.level),
                    area: area(&region)?,
                })
            }
        }
    }
}

struct Trial {
    hit: bool,
    area: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub method: Method,
    pub trials: usize,
    /// Trials whose region could not be built (fit or bootstrap failure).
    pub failed: usize,
    pub hits: usize,
    /// `hits / (trials - failed)`.
    pub empirical_coverage: f64,
    pub nominal: f64,
    /// Mean over completed trials; absent when `area_samples == 0`.
    pub relative_area: Option<f64>,
    pub area_samples: usize,
    pub seed: u64,
    pub spec: CoverageSpec,
}

impl CoverageReport {
    /// Binomial standard error of the empirical coverage.
    pub fn standard_error(&self) -> f64 {
        let k = (self.trials - self.failed) as f64;
        let p = self.empirical_coverage;
        (p * (1.0 - p) / k).sqrt()
    }
}

/// Runs `spec.trials` independent trials. Results depend only on the spec,
/// not on thread scheduling.
pub fn empirical_coverage(spec: &CoverageSpec) -> Result<CoverageReport> {
    spec.validate()?;
    let outcomes: Vec<Result<Trial>> = (0..spec.trials as u64)
        .into_par_iter()
        .map(|i| spec.run_trial(i))
        .collect();

    let mut hits = 0;
    let mut failed = 0;
    let mut areas = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(trial) => {
                hits += usize::from(trial.hit);
                areas.extend(trial.area);
            }
            // Configuration problems are not trial failures.
            Err(e @ (Error::InvalidParameter { .. } | Error::DimensionMismatch { .. } | Error::Config { .. })) => {
                return Err(e)
            }
            Err(_) => failed += 1,
        }
    }
    check_failures(failed, spec.trials, spec.max_failure_rate, "coverage trials")?;
    let completed = spec.trials - failed;
    if completed == 0 {
        return Err(Error::TooManyFailures {
            what: "coverage trials",
            failed,
            attempted: spec.trials,
            limit: spec.max_failure_rate,
        });
    }
    let relative_area = (!areas.is_empty()).then(|| areas.iter().sum::<f64>() / areas.len() as f64);
    Ok(CoverageReport {
        method: spec.method,
        trials: spec.trials,
        failed,
        hits,
        empirical_coverage: hits as f64 / completed as f64,
        nominal: spec.nominal(),
        relative_area,
        area_samples: spec.area_samples,
        seed: spec.seed,
        spec: spec.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(method: Method, trials: usize) -> CoverageSpec {
        let theta = ParamVector::garch11(0.23, 0.44, 0.33).unwrap();
        let mut s = CoverageSpec::new(method, theta, NoiseSpec::Gaussian, 100, trials);
        s.m = 20;
        s.r = 2;
        s.seed = 11;
        s
    }

    #[test]
    fn scope_run_is_deterministic() {
        let s = spec(Method::Scope, 40);
        let a = empirical_coverage(&s).unwrap();
        let b = empirical_coverage(&s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.failed, 0);
        assert_eq!(a.nominal, 0.9);
        assert!(a.relative_area.is_none());
    }

    #[test]
    fn trial_samples_differ_and_repeat() {
        let s = spec(Method::Scope, 1);
        let a = s.trial_sample(0).unwrap();
        assert_eq!(a, s.trial_sample(0).unwrap());
        assert_ne!(a.observations(), s.trial_sample(1).unwrap().observations());
        assert_eq!(a.len(), 100);
    }

    #[test]
    fn area_is_reported() {
        let mut s = spec(Method::AsymEllipsoid, 4);
        s.area_samples = 200;
        let report = empirical_coverage(&s).unwrap();
        let area = report.relative_area.unwrap();
        assert!((0.0..=1.0).contains(&area));
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = spec(Method::Scope, 10);
        s.r = 20;
        assert!(empirical_coverage(&s).is_err());
        let mut s = spec(Method::AsymEllipsoid, 10);
        s.level = 1.0;
        assert!(empirical_coverage(&s).is_err());
        let mut s = spec(Method::Scope, 0);
        s.trials = 0;
        assert!(empirical_coverage(&s).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let json = r#"{
            "method": "lr-bootstrap",
            "theta_star": {"omega": 0.23, "alphas": [0.44], "betas": [0.33]},
            "noise": {"family": "logistic"},
            "n": 100,
            "trials": 10,
            "bootstrap": {"b": 49}
        }"#;
        let s: CoverageSpec = serde_json::from_str(json).unwrap();
        assert_eq!(s.method, Method::LrBootstrap);
        assert_eq!(s.bootstrap.b, 49);
        assert_eq!(s.level, 0.9);
        let back: CoverageSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<CoverageSpec>(&json.replace("\"n\"", "\"nn\"")).is_err());
    }
}
