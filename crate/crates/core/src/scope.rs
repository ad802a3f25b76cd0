//! Score-permutation confidence regions.
//!
//! For a candidate θ the residuals `ε̂_t(θ)` are reconstructed, then `m - 1`
//! alternative trajectories are generated by feeding permuted residuals
//! through the variance recursion (`X̄_t = σ̄_t ε̂_{π(t)}`). The squared norm
//! of the score evaluated along the unpermuted trajectory is ranked against
//! the permuted ones; θ belongs to the region when that rank is at most
//! `m - r`. At the true parameter the `m` norms are exchangeable, so the
//! region covers it with probability exactly `1 - r/m`.
//!
//! All randomness lives in a [`PermutationSet`] that is drawn once per region
//! and shared read-only by every evaluated θ.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::garch::{residuals, standardize, Initializer, ParamVector, SeriesSample};
use crate::qml::filter;
use crate::rng::seeded;

/// Frozen randomness of one region: `m - 1` permutations of the time
/// indices and the tie-break permutation `ν` of `{0..m-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationSet {
    n: usize,
    perms: Vec<Vec<u32>>,
    nu: Vec<u32>,
    seed: u64,
}

fn is_bijection(p: &[u32]) -> bool {
    let mut seen = vec![false; p.len()];
    for &i in p {
        match seen.get_mut(i as usize) {
            Some(s) if !*s => *s = true,
            _ => return false,
        }
    }
    true
}

impl PermutationSet {
    /// Draws all permutations uniformly from a generator seeded with `seed`.
    pub fn generate(n: usize, m: usize, seed: u64) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid("m", "need m >= 2"));
        }
        if n == 0 || n > u32::MAX as usize {
            return Err(Error::invalid("n", format!("unsupported series length {n}")));
        }
        let mut rng = seeded(seed);
        let identity: Vec<u32> = (0..n as u32).collect();
        let perms = (0..m - 1)
            .map(|_| {
                let mut p = identity.clone();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        let mut nu: Vec<u32> = (0..m as u32).collect();
        nu.shuffle(&mut rng);
        Ok(PermutationSet { n, perms, nu, seed })
    }

    /// Assembles a set from explicit permutations (`seed` is recorded as 0).
    pub fn from_parts(perms: Vec<Vec<u32>>, nu: Vec<u32>) -> Result<Self> {
        let n = perms.first().map(Vec::len).unwrap_or(0);
        if n == 0 {
            return Err(Error::invalid("perms", "need at least one non-empty permutation"));
        }
        if perms.iter().any(|p| p.len() != n || !is_bijection(p)) {
            return Err(Error::invalid("perms", "every entry must be a bijection of 0..n"));
        }
        if nu.len() != perms.len() + 1 || !is_bijection(&nu) {
            return Err(Error::invalid("nu", "must be a bijection of 0..m"));
        }
        Ok(PermutationSet {
            n,
            perms,
            nu,
            seed: 0,
        })
    }

    pub fn m(&self) -> usize {
        self.perms.len() + 1
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn perms(&self) -> &[Vec<u32>] {
        &self.perms
    }

    pub fn nu(&self) -> &[u32] {
        &self.nu
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScopeConfig")]
pub struct ScopeConfig {
    m: usize,
    r: usize,
    pub standardize_residuals: bool,
    pub seed: u64,
    pub initializer: Initializer,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScopeConfig {
    m: usize,
    r: usize,
    #[serde(default)]
    standardize_residuals: bool,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    initializer: Initializer,
}

impl TryFrom<RawScopeConfig> for ScopeConfig {
    type Error = Error;
    fn try_from(raw: RawScopeConfig) -> Result<Self> {
        let mut c = ScopeConfig::new(raw.m, raw.r, raw.seed)?;
        c.standardize_residuals = raw.standardize_residuals;
        c.initializer = raw.initializer;
        Ok(c)
    }
}

impl ScopeConfig {
    /// Region of nominal coverage `1 - r/m`; requires `m > r > 0`.
    pub fn new(m: usize, r: usize, seed: u64) -> Result<Self> {
        if !(m > r && r > 0) {
            return Err(Error::invalid("r", format!("need m > r > 0, got m={m}, r={r}")));
        }
        Ok(ScopeConfig {
            m,
            r,
            standardize_residuals: false,
            seed,
            initializer: Initializer::default(),
        })
    }

    pub fn with_initializer(mut self, initializer: Initializer) -> Self {
        self.initializer = initializer;
        self
    }

    pub fn with_standardized_residuals(mut self, on: bool) -> Self {
        self.standardize_residuals = on;
        self
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn coverage(&self) -> f64 {
        1.0 - self.r as f64 / self.m as f64
    }

    pub fn permutations(&self, n: usize) -> Result<PermutationSet> {
        PermutationSet::generate(n, self.m, self.seed)
    }
}

/// θ-specific state shared by all `m` score evaluations.
struct Prepared<'a> {
    theta: &'a ParamVector,
    sample: std::borrow::Cow<'a, SeriesSample>,
    resid_sq: Vec<f64>,
}

impl<'a> Prepared<'a> {
    fn new(theta: &'a ParamVector, sample: &'a SeriesSample, config: &ScopeConfig) -> Result<Self> {
        let sample = config.initializer.apply(theta, sample);
        let eps = residuals(theta, &sample)?;
        let eps = if config.standardize_residuals { standardize(&eps)? } else { eps };
        let resid_sq = eps.iter().map(|e| e * e).collect();
        Ok(Prepared {
            theta,
            sample,
            resid_sq,
        })
    }

    /// `B(θ, π)`; `None` is the identity.
    fn score(&self, perm: Option<&[u32]>) -> Vec<f64> {
        let r2 = &self.resid_sq;
        let n = r2.len();
        match perm {
            Some(perm) => filter(
                self.theta,
                self.sample.init(),
                n,
                |t, var| {
                    let e2 = r2[perm[t] as usize];
                    (var * e2, e2)
                },
                false,
            ),
            None => filter(
                self.theta,
                self.sample.init(),
                n,
                |t, var| {
                    let e2 = r2[t];
                    (var * e2, e2)
                },
                false,
            ),
        }
        .score
    }

    fn sq_norm(&self, perm: Option<&[u32]>) -> f64 {
        let v: f64 = self.score(perm).iter().map(|g| g * g).sum();
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }
}

/// Perturbed score `B(θ, π)` along the trajectory driven by `ε̂_{π(t)}(θ)`.
/// The identity permutation reproduces the ordinary score.
pub fn perturbed_score(
    theta: &ParamVector,
    sample: &SeriesSample,
    perm: &[u32],
    config: &ScopeConfig,
) -> Result<Vec<f64>> {
    if perm.len() != sample.len() || !is_bijection(perm) {
        return Err(Error::invalid("perm", "must be a bijection of 0..n"));
    }
    sample_dims(theta, sample, config)?;
    Ok(Prepared::new(theta, sample, config)?.score(Some(perm)))
}

fn sample_dims(theta: &ParamVector, sample: &SeriesSample, config: &ScopeConfig) -> Result<()> {
    if config.initializer.depends_on_theta() {
        Ok(())
    } else {
        sample.check(theta)
    }
}

/// Position of `norms[0]` under the strict order `a ≻ b ⇔ a > b or (a = b
/// and ν(a) > ν(b))`, counted from 1.
pub fn reference_rank(norms: &[f64], nu: &[u32]) -> usize {
    let z0 = norms[0];
    1 + norms[1..]
        .iter()
        .zip(&nu[1..])
        .filter(|(z, nu_i)| z0 > **z || (z0 == **z && nu[0] > **nu_i))
        .count()
}

fn check_perms(sample: &SeriesSample, perms: &PermutationSet, config: &ScopeConfig) -> Result<()> {
    if perms.n() != sample.len() {
        return Err(Error::DimensionMismatch {
            field: "perms.n",
            expected: sample.len(),
            found: perms.n(),
        });
    }
    if perms.m() != config.m() {
        return Err(Error::DimensionMismatch {
            field: "perms.m",
            expected: config.m(),
            found: perms.m(),
        });
    }
    Ok(())
}

/// The `m` squared norms `‖B(θ, π_i)‖²`, reference first.
pub fn score_norms(
    theta: &ParamVector,
    sample: &SeriesSample,
    perms: &PermutationSet,
    config: &ScopeConfig,
) -> Result<Vec<f64>> {
    check_perms(sample, perms, config)?;
    sample_dims(theta, sample, config)?;
    let prepared = Prepared::new(theta, sample, config)?;
    let mut norms = Vec::with_capacity(perms.m());
    norms.push(prepared.sq_norm(None));
    norms.extend(perms.perms().iter().map(|p| prepared.sq_norm(Some(p))));
    Ok(norms)
}

/// Rank of the unperturbed squared score norm among all `m`, in `1..=m`.
pub fn rank(theta: &ParamVector, sample: &SeriesSample, perms: &PermutationSet, config: &ScopeConfig) -> Result<usize> {
    let norms = score_norms(theta, sample, perms, config)?;
    Ok(reference_rank(&norms, perms.nu()))
}

pub fn in_region(
    theta: &ParamVector,
    sample: &SeriesSample,
    perms: &PermutationSet,
    config: &ScopeConfig,
) -> Result<bool> {
    Ok(rank(theta, sample, perms, config)? <= config.m() - config.r())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPoint {
    pub theta: ParamVector,
    pub rank: usize,
    pub in_region: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankField {
    pub points: Vec<RankedPoint>,
    pub config: ScopeConfig,
}

impl RankField {
    pub fn region_size(&self) -> usize {
        self.points.iter().filter(|p| p.in_region).count()
    }
}

/// Ranks every grid point against the same permutation set. Output order
/// follows the grid regardless of scheduling.
pub fn rank_field(
    sample: &SeriesSample,
    grid: &[ParamVector],
    perms: &PermutationSet,
    config: &ScopeConfig,
) -> Result<RankField> {
    let threshold = config.m() - config.r();
    let points = grid
        .par_iter()
        .map(|theta| {
            let rank = rank(theta, sample, perms, config)?;
            Ok(RankedPoint {
                theta: theta.clone(),
                rank,
                in_region: rank <= threshold,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RankField {
        points,
        config: *config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::garch::{simulate, InitialConditions};
    use crate::qml;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn fixed(m: usize, r: usize) -> ScopeConfig {
        ScopeConfig::new(m, r, 1).unwrap().with_initializer(Initializer::Fixed)
    }

    #[test]
    fn config_requires_m_gt_r_gt_0() {
        assert!(ScopeConfig::new(10, 0, 0).is_err());
        assert!(ScopeConfig::new(10, 10, 0).is_err());
        assert!((ScopeConfig::new(20, 2, 0).unwrap().coverage() - 0.9).abs() < 1e-15);
        let parsed: std::result::Result<ScopeConfig, _> = serde_json::from_str(r#"{"m":5,"r":5}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn permutation_sets_are_reproducible_bijections() {
        let a = PermutationSet::generate(50, 7, 99).unwrap();
        let b = PermutationSet::generate(50, 7, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.perms().len(), 6);
        assert!(a.perms().iter().all(|p| is_bijection(p)));
        assert!(is_bijection(a.nu()) && a.nu().len() == 7);
        assert_ne!(a, PermutationSet::generate(50, 7, 100).unwrap());
        assert!(PermutationSet::from_parts(vec![vec![0, 0]], vec![0, 1]).is_err());
        assert!(PermutationSet::from_parts(vec![vec![1, 0]], vec![0, 1, 2]).is_err());
    }

    #[test]
    fn identity_permutation_reproduces_score() {
        let theta = ParamVector::garch11(0.3, 0.2, 0.5).unwrap();
        let init = InitialConditions::new(vec![1.2], vec![0.8]).unwrap();
        let sample = simulate(&theta, &noise(100, 4), &init, 0).unwrap();
        let eval = ParamVector::garch11(0.25, 0.3, 0.4).unwrap();
        let id: Vec<u32> = (0..100).collect();
        let b = perturbed_score(&eval, &sample, &id, &fixed(5, 1)).unwrap();
        let g = qml::score(&eval, &sample).unwrap();
        for (x, y) in b.iter().zip(&g) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-300), "{b:?} vs {g:?}");
        }
    }

    #[test]
    fn arch1_swap_by_hand() {
        // ω = 1, α = 0: σ̄² ≡ 1, so the perturbed score is a two-term sum.
        let theta = ParamVector::new(1.0, vec![0.0], vec![]).unwrap();
        let (a, b, c) = (0.7, -1.9, 2.5);
        let sample = SeriesSample::new(vec![a, b], InitialConditions::new(vec![c], vec![]).unwrap()).unwrap();
        let got = perturbed_score(&theta, &sample, &[1, 0], &fixed(5, 1)).unwrap();
        let want = [
            0.5 * ((1.0 - b * b) + (1.0 - a * a)),
            0.5 * ((1.0 - b * b) * c + (1.0 - a * a) * b * b),
        ];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn unit_residuals_give_zero_scores() {
        let theta = ParamVector::garch11(1.0, 0.0, 0.0).unwrap();
        let sample =
            SeriesSample::new(vec![1.0, -1.0, 1.0, -1.0], InitialConditions::new(vec![1.0], vec![1.0]).unwrap())
                .unwrap();
        let perms = PermutationSet::generate(4, 6, 3).unwrap();
        let config = fixed(6, 1);
        let norms = score_norms(&theta, &sample, &perms, &config).unwrap();
        assert!(norms.iter().all(|z| *z == 0.0));
        // All tied: ν alone decides.
        let rank = rank(&theta, &sample, &perms, &config).unwrap();
        assert_eq!(rank, 1 + perms.nu()[1..].iter().filter(|v| **v < perms.nu()[0]).count());
    }

    #[test]
    fn tie_breaking() {
        assert_eq!(reference_rank(&[0.0, 1.0, 2.0, 3.0], &[0, 1, 2, 3]), 1);
        assert_eq!(reference_rank(&[5.0, 5.0], &[1, 0]), 2);
        assert_eq!(reference_rank(&[5.0, 5.0], &[0, 1]), 1);
        assert_eq!(reference_rank(&[4.0, 1.0, 9.0, 4.0], &[2, 0, 1, 3]), 2);
    }

    #[test]
    fn mismatched_permutation_set_is_rejected() {
        let theta = ParamVector::garch11(1.0, 0.1, 0.1).unwrap();
        let sample = SeriesSample::new(vec![0.5; 10], InitialConditions::new(vec![1.0], vec![1.0]).unwrap()).unwrap();
        let config = fixed(5, 1);
        let wrong_n = PermutationSet::generate(9, 5, 0).unwrap();
        assert!(rank(&theta, &sample, &wrong_n, &config).is_err());
        let wrong_m = PermutationSet::generate(10, 4, 0).unwrap();
        assert!(rank(&theta, &sample, &wrong_m, &config).is_err());
    }

    #[test]
    fn estimate_has_rank_one_and_field_is_consistent() {
        let truth = ParamVector::garch11(0.23, 0.44, 0.33).unwrap();
        let init = InitialConditions::new(vec![1.0], vec![1.0]).unwrap();
        let sample = simulate(&truth, &noise(300, 21), &init, 0).unwrap();
        let fit = qml::qmle_fit(&sample, truth.orders(), &qml::QmlConfig::default()).unwrap();
        assert!(fit.converged);
        let config = ScopeConfig::new(40, 4, 8).unwrap();
        let perms = config.permutations(sample.len()).unwrap();
        assert_eq!(rank(&fit.theta_hat, &sample, &perms, &config).unwrap(), 1);

        let grid = vec![
            fit.theta_hat.clone(),
            truth.clone(),
            ParamVector::garch11(0.1, 0.9, 0.05).unwrap(),
        ];
        let field = rank_field(&sample, &grid, &perms, &config).unwrap();
        for (point, theta) in field.points.iter().zip(&grid) {
            assert_eq!(point.rank, rank(theta, &sample, &perms, &config).unwrap());
            assert_eq!(point.in_region, point.rank <= 36);
        }
        assert!(field.points[0].in_region);
        assert!(!field.points[2].in_region);
    }
}
