//! Gaussian quasi-maximum likelihood for GARCH(p,q).
//!
//! The objective is the normalized negative quasi-log-likelihood
//! `ℓ_n(θ) = (1/n) Σ [log σ̂²_t(θ) + X²_t / σ̂²_t(θ)]` and its analytic score
//! `(1/n) Σ (1 - ε̂²_t) ∇σ̂²_t / σ̂²_t`, where `∇σ̂²_t` follows its own
//! recursion seeded with zero before the first observation. Initial
//! conditions are treated as constants when differentiating, even when an
//! [`Initializer`] derives them from the evaluated point.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::garch::{lagged, residuals, standardize, InitialConditions, Initializer, ModelOrders, ParamVector, SeriesSample};
use crate::optim::{self, BfgsOptions, Termination};

/// Output of one pass of the variance and gradient recursions.
pub(crate) struct Filtered {
    /// `(1/n) Σ [log σ²_t + e²_t]`
    pub mean_objective: f64,
    pub score: Vec<f64>,
    /// `(1/n) Σ ∇σ²_t ∇σ²_tᵀ / σ⁴_t`, row-major, when requested.
    pub information: Option<Vec<f64>>,
}

/// Runs the conditional-variance recursion and its gradient.
///
/// `observe(t, σ²_t)` returns `(x²_t, e²_t)`: the squared observation fed
/// back into later variances, and the squared innovation entering the score.
/// Observed data give `(X²_t, X²_t/σ²_t)`; a permuted trajectory gives
/// `(σ²_t r²_{π(t)}, r²_{π(t)})`.
pub(crate) fn filter<F>(
    theta: &ParamVector,
    init: &InitialConditions,
    n: usize,
    mut observe: F,
    with_information: bool,
) -> Filtered
where
    F: FnMut(usize, f64) -> (f64, f64),
{
    let alphas = theta.alphas();
    let betas = theta.betas();
    let p = alphas.len();
    let d = theta.dim();

    let mut x2 = Vec::with_capacity(n);
    let mut s2 = Vec::with_capacity(n);
    let mut grads = vec![0.0; n * d];
    let mut score = vec![0.0; d];
    let mut info = if with_information { Some(vec![0.0; d * d]) } else { None };
    let mut objective = 0.0;

    for t in 0..n {
        let (head, tail) = grads.split_at_mut(t * d);
        let g = &mut tail[..d];

        let mut var = theta.omega();
        g[0] = 1.0;
        for (i, a) in alphas.iter().enumerate() {
            let x = lagged(&x2, &init.presample_sq, t, i + 1);
            var += a * x;
            g[1 + i] = x;
        }
        for (j, b) in betas.iter().enumerate() {
            let s = lagged(&s2, &init.initial_variances, t, j + 1);
            var += b * s;
            g[1 + p + j] = s;
        }
        // Direct terms are all in place before the recursive ones are added.
        for (j, b) in betas.iter().enumerate() {
            if t > j {
                let prev = &head[(t - j - 1) * d..(t - j) * d];
                for (gk, pk) in g.iter_mut().zip(prev) {
                    *gk += b * pk;
                }
            }
        }

        let (x2_t, e2_t) = observe(t, var);
        x2.push(x2_t);
        s2.push(var);

        objective += var.ln() + e2_t;
        let factor = (1.0 - e2_t) / var;
        for (sk, gk) in score.iter_mut().zip(g.iter()) {
            *sk += factor * gk;
        }
        if let Some(info) = info.as_mut() {
            let w = 1.0 / (var * var);
            for r in 0..d {
                for c in 0..d {
                    info[r * d + c] += w * g[r] * g[c];
                }
            }
        }
    }

    let scale = 1.0 / n as f64;
    score.iter_mut().for_each(|v| *v *= scale);
    if let Some(info) = info.as_mut() {
        info.iter_mut().for_each(|v| *v *= scale);
    }
    Filtered {
        mean_objective: objective * scale,
        score,
        information: info,
    }
}

fn filter_sample(theta: &ParamVector, sample: &SeriesSample, with_information: bool) -> Filtered {
    let obs = sample.observations();
    filter(
        theta,
        sample.init(),
        obs.len(),
        |t, var| {
            let x2 = obs[t] * obs[t];
            (x2, x2 / var)
        },
        with_information,
    )
}

/// `ℓ_n(θ)`; minimizing it maximizes the Gaussian quasi-likelihood.
pub fn neg_quasi_loglik(theta: &ParamVector, sample: &SeriesSample) -> Result<f64> {
    sample.check(theta)?;
    Ok(filter_sample(theta, sample, false).mean_objective)
}

/// Analytic gradient of [`neg_quasi_loglik`].
pub fn score(theta: &ParamVector, sample: &SeriesSample) -> Result<Vec<f64>> {
    sample.check(theta)?;
    Ok(filter_sample(theta, sample, false).score)
}

pub fn loglik_and_score(theta: &ParamVector, sample: &SeriesSample) -> Result<(f64, Vec<f64>)> {
    sample.check(theta)?;
    let f = filter_sample(theta, sample, false);
    Ok((f.mean_objective, f.score))
}

/// Score at `theta` with the initial conditions the initializer assigns to
/// `theta`. This is the field whose root the QML fit looks for.
pub fn score_with(theta: &ParamVector, sample: &SeriesSample, initializer: Initializer) -> Result<Vec<f64>> {
    score(theta, &initializer.apply(theta, sample))
}

pub fn neg_quasi_loglik_with(theta: &ParamVector, sample: &SeriesSample, initializer: Initializer) -> Result<f64> {
    neg_quasi_loglik(theta, &initializer.apply(theta, sample))
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QmlConfig {
    /// Convergence threshold on `‖∇ℓ_n‖∞`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// The fit stays inside `Σα + Σβ ≤ 1 - stationarity_margin`.
    pub stationarity_margin: f64,
    pub omega_min: f64,
    pub initializer: Initializer,
    pub starts: usize,
}

impl Default for QmlConfig {
    fn default() -> Self {
        QmlConfig {
            tolerance: 1e-8,
            max_iterations: 500,
            stationarity_margin: 1e-4,
            omega_min: 1e-10,
            initializer: Initializer::default(),
            starts: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmlFit {
    pub theta_hat: ParamVector,
    pub neg_loglik: f64,
    /// `‖∇ℓ_n(θ̂)‖∞`
    pub score_norm: f64,
    pub converged: bool,
    /// The optimum sits on the edge of the feasible set, where the score need
    /// not vanish.
    pub at_boundary: bool,
    pub iterations: usize,
}

/// Maps ℝ^d onto `{ω > ω_min, c_k > 0, Σc < 1 - δ}` with
/// `ω = ω_min + e^{u_0}` and `c = (1-δ) softmax(0, u_1..)` minus the first cell.
struct Reparam {
    omega_min: f64,
    cap: f64,
}

impl Reparam {
    fn to_theta(&self, u: &[f64]) -> Vec<f64> {
        let mut theta = Vec::with_capacity(u.len());
        theta.push(self.omega_min + u[0].exp());
        let shift = u[1..].iter().fold(0.0f64, |m, v| m.max(*v));
        let base = (-shift).exp();
        let weights: Vec<f64> = u[1..].iter().map(|v| (v - shift).exp()).collect();
        let total = base + weights.iter().sum::<f64>();
        theta.extend(weights.iter().map(|w| self.cap * w / total));
        theta
    }

    fn to_u(&self, theta: &[f64]) -> Vec<f64> {
        let mut u = Vec::with_capacity(theta.len());
        u.push((theta[0] - self.omega_min).max(1e-300).ln());
        let coeffs: Vec<f64> = theta[1..].iter().map(|c| c.max(1e-10)).collect();
        let mut frac: f64 = coeffs.iter().sum::<f64>() / self.cap;
        if frac >= 1.0 - 1e-10 {
            frac = 1.0 - 1e-10;
        }
        let scale = frac / (coeffs.iter().sum::<f64>() / self.cap);
        for c in coeffs {
            u.push((c * scale / self.cap / (1.0 - frac)).ln());
        }
        u
    }

    /// Chain rule from a θ-gradient to a u-gradient.
    fn pull_back(&self, theta: &[f64], grad: &[f64]) -> Vec<f64> {
        let mut g = Vec::with_capacity(grad.len());
        g.push(grad[0] * (theta[0] - self.omega_min));
        let c = &theta[1..];
        let weighted: f64 = c.iter().zip(&grad[1..]).map(|(ci, gi)| ci * gi).sum::<f64>() / self.cap;
        g.extend(c.iter().zip(&grad[1..]).map(|(ci, gi)| ci * (gi - weighted)));
        g
    }
}

struct Fitter<'a> {
    sample: &'a SeriesSample,
    orders: ModelOrders,
    config: &'a QmlConfig,
    reparam: Reparam,
}

impl<'a> Fitter<'a> {
    fn new(sample: &'a SeriesSample, orders: ModelOrders, config: &'a QmlConfig) -> Self {
        Fitter {
            sample,
            orders,
            config,
            reparam: Reparam {
                omega_min: config.omega_min,
                cap: 1.0 - config.stationarity_margin,
            },
        }
    }

    fn point(&self, theta: &[f64]) -> Option<ParamVector> {
        ParamVector::from_slice(self.orders, theta).ok()
    }

    fn resolved_init(&self, theta: &[f64]) -> Option<InitialConditions> {
        let point = self.point(theta)?;
        Some(match self.config.initializer.conditions(&point) {
            Some(init) => init,
            None => self.sample.init().clone(),
        })
    }

    /// BFGS in the reparameterized space with initial conditions frozen.
    fn descend(&self, start: &[f64], init: &InitialConditions) -> (Vec<f64>, usize, Termination) {
        let frozen = self.sample.with_init(init.clone());
        let objective = |u: &[f64]| {
            let theta = self.reparam.to_theta(u);
            match self.point(&theta) {
                Some(point) => {
                    let f = filter_sample(&point, &frozen, false);
                    if f.mean_objective.is_finite() {
                        let g = self.reparam.pull_back(&theta, &f.score);
                        return (f.mean_objective, g);
                    }
                    (f64::INFINITY, vec![0.0; theta.len()])
                }
                None => (f64::INFINITY, vec![0.0; theta.len()]),
            }
        };
        let opts = BfgsOptions {
            max_iterations: self.config.max_iterations,
            gradient_tolerance: 1e-3 * self.config.tolerance,
            ..BfgsOptions::default()
        };
        let u0 = self.reparam.to_u(start);
        let m = optim::minimize(objective, &u0, &opts);
        (self.reparam.to_theta(&m.x), m.iterations, m.termination)
    }

    /// Score field at θ with θ's own initial conditions, plus the objective.
    fn evaluate(&self, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
        let point = self.point(theta)?;
        let init = self.resolved_init(theta)?;
        let f = filter_sample(&point, &self.sample.with_init(init), false);
        if f.mean_objective.is_finite() && f.score.iter().all(|g| g.is_finite()) {
            Some((f.mean_objective, f.score))
        } else {
            None
        }
    }

    fn feasible(&self, theta: &[f64]) -> bool {
        theta[0] > self.config.omega_min
            && theta[1..].iter().all(|c| *c >= 0.0)
            && theta[1..].iter().sum::<f64>() <= self.reparam.cap
    }

    fn interior(&self, theta: &[f64]) -> bool {
        theta[0] > 10.0 * self.config.omega_min
            && theta[1..].iter().all(|c| *c > 1e-6)
            && theta[1..].iter().sum::<f64>() < self.reparam.cap - 1e-7
    }

    /// Full descent from one start, re-freezing the initial conditions until
    /// they agree with the point they were derived from.
    /// Moves a start off the boundary: near-zero softmax cells have
    /// near-zero gradient and would never leave it.
    fn lift_off_boundary(&self, theta: &[f64]) -> Vec<f64> {
        const FLOOR: f64 = 1e-3;
        let cap = self.reparam.cap;
        let mut t = theta.to_vec();
        t[0] = t[0].max(self.config.omega_min * 2.0);
        t[1..].iter_mut().for_each(|c| *c = c.max(FLOOR * cap));
        let sum: f64 = t[1..].iter().sum();
        let limit = cap * (1.0 - FLOOR);
        if sum > limit {
            t[1..].iter_mut().for_each(|c| *c *= limit / sum);
        }
        t
    }

    fn run_from(&self, start: &[f64]) -> (Vec<f64>, usize, Termination) {
        let mut theta = self.lift_off_boundary(start);
        let mut iterations = 0;
        let mut termination = Termination::Gradient;
        let rounds = if self.config.initializer.depends_on_theta() { 30 } else { 1 };
        for _ in 0..rounds {
            let Some(init) = self.resolved_init(&theta) else { break };
            let (next, iters, term) = self.descend(&theta, &init);
            iterations += iters;
            termination = term;
            let shift = theta.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            theta = next;
            if shift < 1e-12 {
                break;
            }
            if let Some((_, g)) = self.evaluate(&theta) {
                if inf_norm(&g) <= 1e-3 * self.config.tolerance {
                    break;
                }
            }
        }
        (theta, iterations, termination)
    }

    /// Newton iterations on the score field with a finite-difference Jacobian.
    fn polish(&self, mut theta: Vec<f64>) -> (Vec<f64>, usize) {
        let d = theta.len();
        let mut iterations = 0;
        let Some((_, mut g)) = self.evaluate(&theta) else { return (theta, 0) };
        for _ in 0..30 {
            let norm = inf_norm(&g);
            if norm <= 1e-4 * self.config.tolerance || !self.interior(&theta) {
                break;
            }
            let mut jac = DMatrix::<f64>::zeros(d, d);
            let mut ok = true;
            for k in 0..d {
                let h = (1e-6 * theta[k].abs().max(1e-4)).min(0.25 * theta[k]);
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                plus[k] += h;
                minus[k] -= h;
                match (self.evaluate(&plus), self.evaluate(&minus)) {
                    (Some((_, gp)), Some((_, gm))) => {
                        for r in 0..d {
                            jac[(r, k)] = (gp[r] - gm[r]) / (2.0 * h);
                        }
                    }
                    _ => ok = false,
                }
            }
            if !ok {
                break;
            }
            let rhs = -DVector::from_column_slice(&g);
            let Some(step) = jac.lu().solve(&rhs) else { break };
            let mut lambda = 1.0;
            let mut accepted = false;
            while lambda > 1e-6 {
                let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + lambda * s).collect();
                if self.feasible(&trial) {
                    if let Some((_, gt)) = self.evaluate(&trial) {
                        if inf_norm(&gt) < norm {
                            theta = trial;
                            g = gt;
                            accepted = true;
                            break;
                        }
                    }
                }
                lambda *= 0.5;
            }
            iterations += 1;
            if !accepted {
                break;
            }
        }
        (theta, iterations)
    }

    fn starts(&self) -> Vec<Vec<f64>> {
        let obs = self.sample.observations();
        let level = obs.iter().map(|x| x * x).sum::<f64>() / obs.len() as f64;
        let (p, q) = (self.orders.p(), self.orders.q());
        let profiles: [(f64, f64); 5] = [(0.05, 0.90), (0.10, 0.80), (0.30, 0.50), (0.45, 0.25), (0.02, 0.02)];
        profiles
            .iter()
            .take(self.config.starts.max(1))
            .map(|&(a, b)| {
                let (a, b) = match (p, q) {
                    (_, 0) => ((a + b).min(0.95), 0.0),
                    (0, _) => (0.0, (a + b).min(0.95)),
                    _ => (a, b),
                };
                let mut theta = vec![level * (1.0 - a - b)];
                theta.extend(spread(a, p));
                theta.extend(spread(b, q));
                theta
            })
            .collect()
    }

    fn finish(&self, theta: Vec<f64>, iterations: usize, termination: Termination) -> Result<QmlFit> {
        let point = ParamVector::from_slice(self.orders, &theta)?;
        let (neg_loglik, g) = self
            .evaluate(&theta)
            .ok_or_else(|| Error::DegenerateData("likelihood is not finite at the optimum".into()))?;
        let score_norm = inf_norm(&g);
        let converged = score_norm <= self.config.tolerance;
        let at_boundary = !converged && !self.interior(&theta) && termination != Termination::MaxIterations;
        let fit = QmlFit {
            theta_hat: point,
            neg_loglik,
            score_norm,
            converged,
            at_boundary,
            iterations,
        };
        if converged || at_boundary {
            Ok(fit)
        } else {
            Err(Error::DidNotConverge(Box::new(fit)))
        }
    }
}

/// Same split of a total across `k` lags, halving with each lag.
fn spread(total: f64, k: usize) -> Vec<f64> {
    let norm: f64 = (0..k).map(|i| 0.5f64.powi(i as i32)).sum();
    (0..k).map(|i| total * 0.5f64.powi(i as i32) / norm).collect()
}

fn check_data(sample: &SeriesSample, orders: ModelOrders) -> Result<()> {
    if sample.observations().iter().all(|x| *x == 0.0) {
        return Err(Error::DegenerateData("all observations are zero".into()));
    }
    if sample.len() <= orders.dim() {
        return Err(Error::DegenerateData(format!(
            "{} observations cannot identify {} parameters",
            sample.len(),
            orders.dim()
        )));
    }
    Ok(())
}

/// Fits the QMLE over `{ω ≥ ω_min, α, β ≥ 0, Σα + Σβ ≤ 1 - δ}` from a set
/// of deterministic starting points.
///
/// An optimum on the edge of the feasible set is returned with
/// `at_boundary = true` and `converged = false`; an interior point whose
/// score could not be driven below the tolerance is an error.
pub fn qmle_fit(sample: &SeriesSample, orders: ModelOrders, config: &QmlConfig) -> Result<QmlFit> {
    check_data(sample, orders)?;
    check_fixed_dims(sample, orders, config)?;
    let fitter = Fitter::new(sample, orders, config);

    let mut best: Option<(f64, Vec<f64>, usize, Termination)> = None;
    for start in fitter.starts() {
        let (theta, iterations, termination) = fitter.run_from(&start);
        let Some((value, _)) = fitter.evaluate(&theta) else { continue };
        if best.as_ref().is_none_or(|b| value < b.0) {
            best = Some((value, theta, iterations, termination));
        }
    }
    let (_, theta, iterations, termination) =
        best.ok_or_else(|| Error::DegenerateData("no starting point gave a finite likelihood".into()))?;
    let (theta, polish_iterations) = fitter.polish(theta);
    fitter.finish(theta, iterations + polish_iterations, termination)
}

/// Fits from a single given starting point; a start that already meets the
/// tolerance is returned as is.
pub fn qmle_fit_from(
    sample: &SeriesSample,
    orders: ModelOrders,
    config: &QmlConfig,
    start: &ParamVector,
) -> Result<QmlFit> {
    check_data(sample, orders)?;
    check_fixed_dims(sample, orders, config)?;
    if start.orders() != orders {
        return Err(Error::DimensionMismatch {
            field: "start",
            expected: orders.dim(),
            found: start.dim(),
        });
    }
    let fitter = Fitter::new(sample, orders, config);
    let theta = start.to_vec();
    if let Some((_, g)) = fitter.evaluate(&theta) {
        if inf_norm(&g) <= config.tolerance {
            return fitter.finish(theta, 0, Termination::Gradient);
        }
    }
    let (theta, iterations, termination) = fitter.run_from(&theta);
    let (theta, polish_iterations) = fitter.polish(theta);
    fitter.finish(theta, iterations + polish_iterations, termination)
}

fn check_fixed_dims(sample: &SeriesSample, orders: ModelOrders, config: &QmlConfig) -> Result<()> {
    if config.initializer.depends_on_theta() {
        return Ok(());
    }
    if sample.presample_sq().len() != orders.p() {
        return Err(Error::DimensionMismatch {
            field: "presample_sq",
            expected: orders.p(),
            found: sample.presample_sq().len(),
        });
    }
    if sample.initial_variances().len() != orders.q() {
        return Err(Error::DimensionMismatch {
            field: "initial_variances",
            expected: orders.q(),
            found: sample.initial_variances().len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    /// Plug-in estimate of the asymptotic covariance of `√n (θ̂ - θ*)`.
    pub gamma: DMatrix<f64>,
    /// Fourth moment of the standardized residuals.
    pub kurtosis_hat: f64,
}

/// Sandwich covariance `F⁻¹ G F⁻¹`, which for the Gaussian quasi-likelihood
/// collapses to `(E[ε⁴] - 1) J⁻¹` with `J = E[∇σ² ∇σ²ᵀ / σ⁴]`.
pub fn asymptotic_covariance(theta_hat: &ParamVector, sample: &SeriesSample) -> Result<CovarianceEstimate> {
    sample.check(theta_hat)?;
    let d = theta_hat.dim();
    let z = standardize(&residuals(theta_hat, sample)?)?;
    let kurtosis_hat = z.iter().map(|v| v.powi(4)).sum::<f64>() / z.len() as f64;
    if kurtosis_hat <= 1.0 + 1e-6 {
        return Err(Error::SingularInformation(format!(
            "residual fourth moment {kurtosis_hat} leaves no spread in ε²"
        )));
    }
    let info = filter_sample(theta_hat, sample, true)
        .information
        .expect("information requested");
    let info = DMatrix::from_row_slice(d, d, &info);
    let inverse = info
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::SingularInformation("information matrix is not positive definite".into()))?;
    if inverse.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularInformation("information matrix inverse is not finite".into()));
    }
    let mut gamma = inverse * (kurtosis_hat - 1.0);
    let sym = (&gamma + gamma.transpose()) * 0.5;
    gamma.copy_from(&sym);
    Ok(CovarianceEstimate { gamma, kurtosis_hat })
}
