//! Comparison regions: the asymptotic normal ellipsoid, a residual-bootstrap
//! ellipsoid and the likelihood-ratio bootstrap test.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::garch::{residuals, simulate, standardize, ParamVector, SeriesSample};
use crate::qml::{self, CovarianceEstimate, QmlConfig, QmlFit};
use crate::rng::{derive, seeded};

/// Quantile of the χ² distribution with `dof` degrees of freedom.
pub fn chi_square_quantile(level: f64, dof: usize) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("level", format!("must lie in (0, 1), got {level}")));
    }
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::invalid("dof", e.to_string()))?;
    Ok(dist.inverse_cdf(level))
}

/// `{θ : (θ - center)ᵀ shape (θ - center) ≤ radius}`
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    pub center: ParamVector,
    pub shape: DMatrix<f64>,
    pub radius: f64,
}

impl Ellipsoid {
    pub fn quadratic_form(&self, theta: &ParamVector) -> f64 {
        let diff = DVector::from_iterator(
            theta.dim(),
            theta.to_vec().iter().zip(self.center.to_vec()).map(|(a, b)| a - b),
        );
        (diff.transpose() * &self.shape * &diff)[(0, 0)]
    }

    pub fn contains(&self, theta: &ParamVector) -> bool {
        theta.orders() == self.center.orders() && self.quadratic_form(theta) <= self.radius
    }
}

fn inverse_spd(matrix: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let scale = matrix.amax();
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::SingularInformation(format!("{what} is zero or not finite")));
    }
    let eig = matrix.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min <= 1e-12 * eig.eigenvalues.max() {
        return Err(Error::SingularInformation(format!("{what} is singular (smallest eigenvalue {min:e})")));
    }
    matrix
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::SingularInformation(format!("{what} is not positive definite")))
}

/// `{θ : (θ - θ̂)ᵀ Γ⁻¹ (θ - θ̂) ≤ s/n}` with `s` the χ²(d) quantile at `level`.
pub fn asymptotic_region(fit: &QmlFit, cov: &CovarianceEstimate, level: f64, n: usize) -> Result<Ellipsoid> {
    let d = fit.theta_hat.dim();
    if cov.gamma.nrows() != d || cov.gamma.ncols() != d {
        return Err(Error::DimensionMismatch {
            field: "gamma",
            expected: d,
            found: cov.gamma.nrows(),
        });
    }
    let shape = inverse_spd(&cov.gamma, "asymptotic covariance")?;
    let s = chi_square_quantile(level, d)?;
    Ok(Ellipsoid {
        center: fit.theta_hat.clone(),
        shape,
        radius: s / n as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    /// Replications.
    pub b: usize,
    pub seed: u64,
    /// Simulation steps discarded before each bootstrap series.
    pub burn_in: usize,
    /// Fraction of failed refits tolerated before the run is abandoned.
    pub max_failure_rate: f64,
    pub qml: QmlConfig,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            b: 199,
            seed: 0,
            burn_in: 0,
            max_failure_rate: 0.1,
            qml: QmlConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSample {
    /// The estimate the replications were generated around.
    pub center: ParamVector,
    /// Successful bootstrap QMLEs, in replication order.
    pub estimates: Vec<ParamVector>,
    /// Replications attempted; `estimates.len() + failed == b`.
    pub b: usize,
    pub failed: usize,
    pub seed: u64,
}

/// Fits from the center first, falling back to the multi-start search.
fn refit(sample: &SeriesSample, center: &ParamVector, config: &QmlConfig) -> Result<QmlFit> {
    match qml::qmle_fit_from(sample, center.orders(), config, center) {
        Ok(fit) => Ok(fit),
        Err(_) => qml::qmle_fit(sample, center.orders(), config),
    }
}

pub(crate) fn check_failures(failed: usize, attempted: usize, limit: f64, what: &'static str) -> Result<()> {
    if attempted > 0 && failed as f64 > limit * attempted as f64 {
        return Err(Error::TooManyFailures {
            what,
            failed,
            attempted,
            limit,
        });
    }
    Ok(())
}

/// Draws `burn_in + n` innovations with replacement from `pool`.
fn resample(pool: &[f64], len: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..len).map(|_| pool[rng.random_range(0..pool.len())]).collect()
}

/// Residual bootstrap: resample standardized QMLE residuals, simulate under
/// θ̂ and refit.
pub fn residual_bootstrap(sample: &SeriesSample, fit: &QmlFit, config: &BootstrapConfig) -> Result<BootstrapSample> {
    let center = fit.theta_hat.clone();
    if config.b == 0 {
        return Ok(BootstrapSample {
            center,
            estimates: Vec::new(),
            b: 0,
            failed: 0,
            seed: config.seed,
        });
    }
    let resolved = config.qml.initializer.apply(&center, sample);
    let pool = standardize(&residuals(&center, &resolved)?)?;
    let n = sample.len();

    let outcomes: Vec<Option<ParamVector>> = (0..config.b as u64)
        .into_par_iter()
        .map(|j| {
            let noise = resample(&pool, config.burn_in + n, derive(config.seed, j));
            let series = simulate(&center, &noise, resolved.init(), config.burn_in).ok()?;
            refit(&series, &center, &config.qml).ok().map(|f| f.theta_hat)
        })
        .collect();
    let failed = outcomes.iter().filter(|o| o.is_none()).count();
    check_failures(failed, config.b, config.max_failure_rate, "bootstrap refits")?;
    Ok(BootstrapSample {
        center,
        estimates: outcomes.into_iter().flatten().collect(),
        b: config.b,
        failed,
        seed: config.seed,
    })
}

/// Ellipsoid around the bootstrap center shaped by the covariance of the
/// bootstrap estimates, with the χ²(d) quantile as radius.
#[derive(Debug, Clone)]
pub struct BootstrapRegion {
    pub ellipsoid: Ellipsoid,
}

impl BootstrapRegion {
    pub fn new(boots: &BootstrapSample, level: f64) -> Result<Self> {
        if boots.estimates.len() < 50 {
            return Err(Error::invalid(
                "b",
                format!("need at least 50 bootstrap estimates, have {}", boots.estimates.len()),
            ));
        }
        let d = boots.center.dim();
        let rows: Vec<Vec<f64>> = boots.estimates.iter().map(ParamVector::to_vec).collect();
        let k = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / k).collect();
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for r in &rows {
            for i in 0..d {
                for j in 0..d {
                    cov[(i, j)] += (r[i] - mean[i]) * (r[j] - mean[j]);
                }
            }
        }
        cov /= k - 1.0;
        let shape = inverse_spd(&cov, "bootstrap covariance")?;
        Ok(BootstrapRegion {
            ellipsoid: Ellipsoid {
                center: boots.center.clone(),
                shape,
                radius: chi_square_quantile(level, d)?,
            },
        })
    }

    pub fn contains(&self, theta: &ParamVector) -> bool {
        self.ellipsoid.contains(theta)
    }
}

pub fn bootstrap_region_membership(theta: &ParamVector, boots: &BootstrapSample, level: f64) -> Result<bool> {
    Ok(BootstrapRegion::new(boots, level)?.contains(theta))
}

/// Outcome of one likelihood-ratio bootstrap test.
#[derive(Debug, Clone, PartialEq)]
pub struct LrTest {
    pub lr: f64,
    pub bootstrap_lrs: Vec<f64>,
    pub failed: usize,
    pub p_value: f64,
}

/// `(1 + #{bootstrap ≥ observed}) / (b + 1)`
pub fn lr_p_value(observed: f64, bootstrap: &[f64]) -> f64 {
    let at_least = bootstrap.iter().filter(|v| **v >= observed).count();
    (1 + at_least) as f64 / (bootstrap.len() + 1) as f64
}

/// Region rule for a p-value: keep θ when `p > 1 - level`.
pub fn lr_accepts(p_value: f64, level: f64) -> bool {
    p_value > 1.0 - level + 1e-12
}

fn likelihood_ratio(theta: &ParamVector, fit: &QmlFit, sample: &SeriesSample, config: &QmlConfig) -> Result<f64> {
    let at_theta = qml::neg_quasi_loglik_with(theta, sample, config.initializer)?;
    let lr = 2.0 * sample.len() as f64 * (at_theta - fit.neg_loglik);
    Ok(lr.max(0.0))
}

/// Likelihood-ratio bootstrap p-value of `H0: θ* = theta`.
///
/// Bootstrap series are simulated under `theta` from its own residuals
/// (resampled with replacement) and refitted; their likelihood ratios at
/// `theta` form the reference distribution.
pub fn lr_bootstrap_pvalue(
    theta: &ParamVector,
    sample: &SeriesSample,
    fit: &QmlFit,
    config: &BootstrapConfig,
) -> Result<LrTest> {
    if theta.orders() != fit.theta_hat.orders() {
        return Err(Error::DimensionMismatch {
            field: "theta",
            expected: fit.theta_hat.dim(),
            found: theta.dim(),
        });
    }
    let lr = likelihood_ratio(theta, fit, sample, &config.qml)?;
    let resolved = config.qml.initializer.apply(theta, sample);
    let pool = residuals(theta, &resolved)?;
    let n = sample.len();

    let outcomes: Vec<Option<f64>> = (0..config.b as u64)
        .into_par_iter()
        .map(|j| {
            let noise = resample(&pool, config.burn_in + n, derive(config.seed, j));
            let series = simulate(theta, &noise, resolved.init(), config.burn_in).ok()?;
            let boot_fit = refit(&series, theta, &config.qml).ok()?;
            likelihood_ratio(theta, &boot_fit, &series, &config.qml).ok()
        })
        .collect();
    let failed = outcomes.iter().filter(|o| o.is_none()).count();
    check_failures(failed, config.b, config.max_failure_rate, "LR bootstrap refits")?;
    let bootstrap_lrs: Vec<f64> = outcomes.into_iter().flatten().collect();
    let p_value = lr_p_value(lr, &bootstrap_lrs);
    Ok(LrTest {
        lr,
        bootstrap_lrs,
        failed,
        p_value,
    })
}
