use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{lr_accepts, lr_bootstrap_pvalue, BootstrapConfig, BootstrapRegion, Ellipsoid};
use crate::error::{Error, Result};
use crate::garch::{ModelOrders, ParamVector, SeriesSample};
use crate::qml::QmlFit;
use crate::rng::{derive, seeded};
use crate::scope::{in_region, PermutationSet, ScopeConfig};

/// A confidence region as a membership oracle.
pub trait Region: Sync {
    fn contains(&self, theta: &ParamVector) -> Result<bool>;
}

impl<F> Region for F
where
    F: Fn(&ParamVector) -> Result<bool> + Sync,
{
    fn contains(&self, theta: &ParamVector) -> Result<bool> {
        self(theta)
    }
}

impl Region for Ellipsoid {
    fn contains(&self, theta: &ParamVector) -> Result<bool> {
        Ok(Ellipsoid::contains(self, theta))
    }
}

impl Region for BootstrapRegion {
    fn contains(&self, theta: &ParamVector) -> Result<bool> {
        Ok(BootstrapRegion::contains(self, theta))
    }
}

pub struct ScopeRegion<'a> {
    pub sample: &'a SeriesSample,
    pub perms: &'a PermutationSet,
    pub config: &'a ScopeConfig,
}

impl Region for ScopeRegion<'_> {
    fn contains(&self, theta: &ParamVector) -> Result<bool> {
        in_region(theta, self.sample, self.perms, self.config)
    }
}

/// `{θ : LR bootstrap p-value > 1 - level}`; every membership query runs a
/// full bootstrap.
pub struct LrRegion<'a> {
    pub sample: &'a SeriesSample,
    pub fit: &'a QmlFit,
    pub config: &'a BootstrapConfig,
    pub level: f64,
}

impl Region for LrRegion<'_> {
    fn contains(&self, theta: &ParamVector) -> Result<bool> {
        let test = lr_bootstrap_pvalue(theta, self.sample, self.fit, self.config)?;
        Ok(lr_accepts(test.p_value, self.level))
    }
}

/// Admissible parameter set that relative areas are measured against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AreaDomain {
    /// Coefficients uniform on `{α, β ≥ 0, Σα + Σβ < 1}` with
    /// `ω = 1 - Σα - Σβ` (unit unconditional variance).
    #[default]
    UnitVariance,
    /// Coefficients as above, `ω` uniform on `(0, omega_max)`.
    Box { omega_max: f64 },
}

impl AreaDomain {
    pub fn validate(&self) -> Result<()> {
        if let AreaDomain::Box { omega_max } = self {
            if !(omega_max.is_finite() && *omega_max > 0.0) {
                return Err(Error::invalid("area_domain.omega_max", "must be finite and > 0"));
            }
        }
        Ok(())
    }

    /// One uniform draw.
    pub fn sample(&self, orders: ModelOrders, rng: &mut impl rand::Rng) -> ParamVector {
        let k = orders.p() + orders.q();
        // Uniform on the open simplex: normalized exponentials with one slack cell.
        let mut e: Vec<f64> = (0..=k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let total: f64 = e.iter().sum();
        e.iter_mut().for_each(|v| *v /= total);
        let coeffs = &e[..k];
        let omega = match self {
            AreaDomain::UnitVariance => e[k].max(f64::MIN_POSITIVE),
            AreaDomain::Box { omega_max } => {
                let u: f64 = rng.random();
                (1.0 - u) * omega_max
            }
        };
        ParamVector::new(omega, coeffs[..orders.p()].to_vec(), coeffs[orders.p()..].to_vec())
            .expect("draws are feasible")
    }
}

/// Fraction of `samples` uniform draws from `domain` that fall inside `region`.
pub fn relative_area<R: Region + ?Sized>(
    region: &R,
    orders: ModelOrders,
    domain: &AreaDomain,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    domain.validate()?;
    if samples == 0 {
        return Err(Error::invalid("area_samples", "need at least one sample"));
    }
    let hits = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeded(derive(seed, i));
            let theta = domain.sample(orders, &mut rng);
            region.contains(&theta).map(usize::from)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(hits as f64 / samples as f64)
}
