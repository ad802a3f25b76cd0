//! GARCH(p,q) model representation, simulation and filtering.
//!
//! The conditional variance of a GARCH(p,q) process obeys
//!
//! ```text
//! σ²_t = ω + Σ_{i=1..p} α_i X²_{t-i} + Σ_{j=1..q} β_j σ²_{t-j},   X_t = σ_t ε_t
//! ```
//!
//! Indices `t ≤ 0` are served from [`InitialConditions`]: `presample_sq[k]`
//! holds `X²_{-k}` and `initial_variances[k]` holds `σ²_{-k}`.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawOrders")]
pub struct ModelOrders {
    p: usize,
    q: usize,
}

#[derive(Deserialize)]
struct RawOrders {
    p: usize,
    q: usize,
}

impl TryFrom<RawOrders> for ModelOrders {
    type Error = Error;
    fn try_from(raw: RawOrders) -> Result<Self> {
        ModelOrders::new(raw.p, raw.q)
    }
}

impl ModelOrders {
    pub fn new(p: usize, q: usize) -> Result<Self> {
        if p == 0 && q == 0 {
            return Err(Error::invalid("orders", "p = q = 0 is not a GARCH model"));
        }
        Ok(ModelOrders { p, q })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Number of free parameters, `p + q + 1`.
    pub fn dim(&self) -> usize {
        self.p + self.q + 1
    }
}

/// A parameter point `(ω, α_1..α_p, β_1..β_q)`.
///
/// Construction enforces `ω > 0` and nonnegative coefficients. Stationarity
/// is queryable through [`ParamVector::is_stationary`] but never enforced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ParamVector {
    omega: f64,
    alphas: Vec<f64>,
    betas: Vec<f64>,
}

#[derive(Deserialize)]
struct RawParams {
    omega: f64,
    #[serde(default)]
    alphas: Vec<f64>,
    #[serde(default)]
    betas: Vec<f64>,
}

impl TryFrom<RawParams> for ParamVector {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        ParamVector::new(raw.omega, raw.alphas, raw.betas)
    }
}

impl ParamVector {
    pub fn new(omega: f64, alphas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::invalid("omega", format!("must be finite and > 0, got {omega}")));
        }
        if alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::invalid("alphas", "entries must be finite and >= 0"));
        }
        if betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::invalid("betas", "entries must be finite and >= 0"));
        }
        ModelOrders::new(alphas.len(), betas.len())?;
        Ok(ParamVector {
            omega,
            alphas,
            betas,
        })
    }

    pub fn garch11(omega: f64, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(omega, vec![alpha], vec![beta])
    }

    /// Builds a point from its flat layout `(ω, α.., β..)`.
    pub fn from_slice(orders: ModelOrders, values: &[f64]) -> Result<Self> {
        if values.len() != orders.dim() {
            return Err(Error::DimensionMismatch {
                field: "theta",
                expected: orders.dim(),
                found: values.len(),
            });
        }
        let p = orders.p();
        Self::new(values[0], values[1..=p].to_vec(), values[p + 1..].to_vec())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(self.omega);
        v.extend_from_slice(&self.alphas);
        v.extend_from_slice(&self.betas);
        v
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn orders(&self) -> ModelOrders {
        ModelOrders {
            p: self.alphas.len(),
            q: self.betas.len(),
        }
    }

    pub fn dim(&self) -> usize {
        1 + self.alphas.len() + self.betas.len()
    }

    /// `Σα + Σβ`.
    pub fn persistence(&self) -> f64 {
        self.alphas.iter().sum::<f64>() + self.betas.iter().sum::<f64>()
    }

    pub fn is_stationary(&self) -> bool {
        self.persistence() < 1.0
    }
}

/// Values standing in for `X²_t` and `σ²_t` at `t ≤ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConditions {
    pub presample_sq: Vec<f64>,
    pub initial_variances: Vec<f64>,
}

impl InitialConditions {
    pub fn new(presample_sq: Vec<f64>, initial_variances: Vec<f64>) -> Result<Self> {
        if presample_sq.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::invalid("presample_sq", "entries must be finite and >= 0"));
        }
        if initial_variances.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("initial_variances", "entries must be finite and > 0"));
        }
        Ok(InitialConditions {
            presample_sq,
            initial_variances,
        })
    }

    /// Every presample square and initial variance set to `value`.
    pub fn constant(orders: ModelOrders, value: f64) -> Result<Self> {
        Self::new(vec![value; orders.p()], vec![value; orders.q()])
    }

    fn check(&self, theta: &ParamVector) -> Result<()> {
        if self.presample_sq.len() != theta.alphas.len() {
            return Err(Error::DimensionMismatch {
                field: "presample_sq",
                expected: theta.alphas.len(),
                found: self.presample_sq.len(),
            });
        }
        if self.initial_variances.len() != theta.betas.len() {
            return Err(Error::DimensionMismatch {
                field: "initial_variances",
                expected: theta.betas.len(),
                found: self.initial_variances.len(),
            });
        }
        Ok(())
    }
}

/// An observed series `X_1..X_n` together with its initial conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSample {
    observations: Vec<f64>,
    init: InitialConditions,
}

impl SeriesSample {
    pub fn new(observations: Vec<f64>, init: InitialConditions) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::invalid("observations", "need at least one observation"));
        }
        if observations.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("observations", "entries must be finite"));
        }
        Ok(SeriesSample { observations, init })
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn init(&self) -> &InitialConditions {
        &self.init
    }

    pub fn presample_sq(&self) -> &[f64] {
        &self.init.presample_sq
    }

    pub fn initial_variances(&self) -> &[f64] {
        &self.init.initial_variances
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn with_init(&self, init: InitialConditions) -> SeriesSample {
        SeriesSample {
            observations: self.observations.clone(),
            init,
        }
    }

    pub(crate) fn check(&self, theta: &ParamVector) -> Result<()> {
        self.init.check(theta)
    }
}

/// How the values at `t ≤ 0` are chosen when a parameter point is evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initializer {
    /// `ω / (1 - Σα - Σβ)` of the evaluated point; `ω` when that point is
    /// not stationary.
    #[default]
    Unconditional,
    /// `ω` of the evaluated point.
    Omega,
    /// Whatever the sample carries (known or user-supplied values).
    Fixed,
}

impl Initializer {
    /// True when the resolved initial conditions depend on the evaluated point.
    pub fn depends_on_theta(&self) -> bool {
        !matches!(self, Initializer::Fixed)
    }

    /// Parameter-only initial conditions; `None` for [`Initializer::Fixed`].
    pub fn conditions(&self, theta: &ParamVector) -> Option<InitialConditions> {
        let value = match self {
            Initializer::Unconditional => {
                unconditional_variance(theta).unwrap_or(theta.omega)
            }
            Initializer::Omega => theta.omega,
            Initializer::Fixed => return None,
        };
        Some(InitialConditions {
            presample_sq: vec![value; theta.alphas.len()],
            initial_variances: vec![value; theta.betas.len()],
        })
    }

    /// The sample as seen when evaluating `theta`.
    pub fn apply<'a>(&self, theta: &ParamVector, sample: &'a SeriesSample) -> Cow<'a, SeriesSample> {
        match self.conditions(theta) {
            Some(init) => Cow::Owned(sample.with_init(init)),
            None => Cow::Borrowed(sample),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariancePath {
    pub values: Vec<f64>,
}

/// `X²_{t-i}` (or `σ²_{t-i}`) with `t` zero-based, falling back to the
/// presample for negative indices.
#[inline]
pub(crate) fn lagged(history: &[f64], presample: &[f64], t: usize, lag: usize) -> f64 {
    if t >= lag {
        history[t - lag]
    } else {
        presample[lag - t - 1]
    }
}

pub(crate) fn fill_variances(theta: &ParamVector, sample: &SeriesSample, out: &mut Vec<f64>) {
    let obs = &sample.observations;
    let init = &sample.init;
    out.clear();
    out.reserve(obs.len());
    for t in 0..obs.len() {
        let mut s2 = theta.omega;
        for (i, a) in theta.alphas.iter().enumerate() {
            let x = if t > i { obs[t - i - 1] * obs[t - i - 1] } else { init.presample_sq[i - t] };
            s2 += a * x;
        }
        for (j, b) in theta.betas.iter().enumerate() {
            s2 += b * lagged(out, &init.initial_variances, t, j + 1);
        }
        out.push(s2);
    }
}

pub fn variance_path(theta: &ParamVector, sample: &SeriesSample) -> Result<VariancePath> {
    sample.check(theta)?;
    let mut values = Vec::new();
    fill_variances(theta, sample, &mut values);
    Ok(VariancePath { values })
}

/// Unconditional variance `η = ω / (1 - Σα - Σβ)` of a stationary point.
pub fn unconditional_variance(theta: &ParamVector) -> Result<f64> {
    let persistence = theta.persistence();
    if persistence >= 1.0 {
        return Err(Error::NotStationary { persistence });
    }
    Ok(theta.omega / (1.0 - persistence))
}

/// Runs the process forward on `noise`, discarding the first `burn_in` steps.
///
/// The returned sample's initial conditions are the true values just before
/// its first observation: `init` itself when `burn_in == 0`, otherwise the
/// tail of the burn-in run.
pub fn simulate(
    theta: &ParamVector,
    noise: &[f64],
    init: &InitialConditions,
    burn_in: usize,
) -> Result<SeriesSample> {
    init.check(theta)?;
    if noise.len() <= burn_in {
        return Err(Error::DimensionMismatch {
            field: "noise",
            expected: burn_in + 1,
            found: noise.len(),
        });
    }
    let p = theta.alphas.len();
    let q = theta.betas.len();
    let total = noise.len();

    // Histories are stored oldest first, presample included.
    let mut x2 = Vec::with_capacity(p + total);
    x2.extend(init.presample_sq.iter().rev());
    let mut s2 = Vec::with_capacity(q + total);
    s2.extend(init.initial_variances.iter().rev());
    let mut xs = Vec::with_capacity(total);

    for (t, eps) in noise.iter().enumerate() {
        let mut var = theta.omega;
        for (i, a) in theta.alphas.iter().enumerate() {
            var += a * x2[p + t - i - 1];
        }
        for (j, b) in theta.betas.iter().enumerate() {
            var += b * s2[q + t - j - 1];
        }
        let x = var.sqrt() * eps;
        xs.push(x);
        x2.push(x * x);
        s2.push(var);
    }

    let presample_sq = (0..p).map(|k| x2[p + burn_in - 1 - k]).collect();
    let initial_variances = (0..q).map(|k| s2[q + burn_in - 1 - k]).collect();
    SeriesSample::new(
        xs.split_off(burn_in),
        InitialConditions {
            presample_sq,
            initial_variances,
        },
    )
}

/// Reconstructed innovations `X_t / σ̂_t(θ)`.
pub fn residuals(theta: &ParamVector, sample: &SeriesSample) -> Result<Vec<f64>> {
    let path = variance_path(theta, sample)?;
    Ok(sample
        .observations
        .iter()
        .zip(&path.values)
        .map(|(x, s2)| x / s2.sqrt())
        .collect())
}

/// Centers and scales to sample mean 0 and (population) standard deviation 1.
pub fn standardize(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::DegenerateSample(format!(
            "standardizing needs at least 2 values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(sd.is_finite() && sd > 1e-12 * scale) {
        return Err(Error::DegenerateSample("values have zero spread".into()));
    }
    Ok(values.iter().map(|v| (v - mean) / sd).collect())
}
