use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

/// Innovation law, scaled to zero mean and unit variance where the variance
/// exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    Gaussian,
    /// Scale `√3/π`.
    Logistic,
    /// Scale `1/√2`.
    Laplace,
    /// Scaled by `√((df-2)/df)` when `df > 2`; left unscaled otherwise.
    StudentT { df: f64 },
}

impl NoiseSpec {
    pub fn infinite_variance(&self) -> bool {
        matches!(self, NoiseSpec::StudentT { df } if *df <= 2.0)
    }

    pub fn name(&self) -> String {
        match self {
            NoiseSpec::Gaussian => "gaussian".into(),
            NoiseSpec::Logistic => "logistic".into(),
            NoiseSpec::Laplace => "laplace".into(),
            NoiseSpec::StudentT { df } => format!("student-t({df})"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let NoiseSpec::StudentT { df } = self {
            if !(df.is_finite() && *df > 0.0) {
                return Err(Error::invalid("noise.df", format!("must be finite and > 0, got {df}")));
            }
        }
        Ok(())
    }
}

/// Uniform on the open interval (0, 1).
fn open_unit(rng: &mut impl rand::Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// `n` i.i.d. draws from `spec`, reproducible from `seed`.
pub fn generate_noise(spec: &NoiseSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid("n", "need at least one draw"));
    }
    let mut rng = seeded(seed);
    let draws = match *spec {
        NoiseSpec::Gaussian => (0..n).map(|_| StandardNormal.sample(&mut rng)).collect(),
        NoiseSpec::Logistic => {
            let scale = 3f64.sqrt() / PI;
            (0..n)
                .map(|_| {
                    let u = open_unit(&mut rng);
                    scale * (u / (1.0 - u)).ln()
                })
                .collect()
        }
        NoiseSpec::Laplace => {
            let scale = 1.0 / 2f64.sqrt();
            (0..n)
                .map(|_| {
                    let u = open_unit(&mut rng) - 0.5;
                    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
                })
                .collect()
        }
        NoiseSpec::StudentT { df } => {
            let dist = StudentT::new(df).map_err(|e| Error::invalid("noise.df", e.to_string()))?;
            let scale = if df > 2.0 { ((df - 2.0) / df).sqrt() } else { 1.0 };
            (0..n).map(|_| scale * dist.sample(&mut rng)).collect()
        }
    };
    Ok(draws)
}
