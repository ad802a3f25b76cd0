#![allow(dead_code)]

use garch_scope::garch::{residuals, simulate};
use garch_scope::qml::neg_quasi_loglik;
use garch_scope::scope::score_norms;
use garch_scope::{InitialConditions, Initializer, ParamVector, PermutationSet, ScopeConfig, SeriesSample};
use rand::Rng;

pub fn paper_theta() -> ParamVector {
    ParamVector::garch11(0.23, 0.44, 0.33).unwrap()
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<u32>> {
    fn go(prefix: &mut Vec<u32>, used: &mut [bool], out: &mut Vec<Vec<u32>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i as u32);
                go(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

pub fn factorial(k: usize) -> u128 {
    (1..=k as u128).product()
}

/// The sample a noise ordering produces at `theta`, started from the
/// unconditional-variance initial conditions that inference also uses.
pub fn sample_from(theta: &ParamVector, noise: &[f64]) -> SeriesSample {
    let init = Initializer::Unconditional.conditions(theta).unwrap();
    simulate(theta, noise, &init, 0).unwrap()
}

/// Exact counts of `rank = 1..=m` over every noise ordering `μ`, every
/// choice of `π_1..π_{m-1}` from all `n!` permutations and every tie-break
/// `ν`. Returns the counts and the total number of configurations.
///
/// For a fixed `μ` the perturbed norms are i.i.d. draws from the `n!` norms
/// `Z(π)`; only how many fall below, on, or above the reference matters. A
/// reference tied with `k` perturbed values sits uniformly among those
/// `k + 1` positions under a uniform `ν`.
pub fn enumerate_rank_counts(
    theta: &ParamVector,
    noise: &[f64],
    m: usize,
    standardize: bool,
) -> (Vec<u128>, u128) {
    let n = noise.len();
    let all = permutations(n);
    let nf = all.len();
    let config = ScopeConfig::new(nf + 1, 1, 0)
        .unwrap()
        .with_standardized_residuals(standardize);
    let nu: Vec<u32> = (0..=nf as u32).collect();
    let every = PermutationSet::from_parts(all.clone(), nu).unwrap();

    let mut counts = vec![0u128; m + 1];
    for mu in &all {
        let ordered: Vec<f64> = mu.iter().map(|&i| noise[i as usize]).collect();
        let sample = sample_from(theta, &ordered);
        assert_eq!(residuals(theta, &sample).unwrap(), ordered, "inversion must be exact");
        let norms = score_norms(theta, &sample, &every, &config).unwrap();
        let z0 = norms[0];
        let below = norms[1..].iter().filter(|z| **z < z0).count() as u128;
        let equal = norms[1..].iter().filter(|z| **z == z0).count() as u128;
        let above = nf as u128 - below - equal;
        assert!(equal >= 1, "the identity ties with the reference");

        let k = m - 1;
        for k_below in 0..=k {
            for k_equal in 0..=k - k_below {
                let k_above = k - k_below - k_equal;
                let ways = factorial(k) / (factorial(k_below) * factorial(k_equal) * factorial(k_above))
                    * below.pow(k_below as u32)
                    * equal.pow(k_equal as u32)
                    * above.pow(k_above as u32);
                let per_slot = factorial(m) / (k_equal as u128 + 1);
                for j in 0..=k_equal {
                    counts[1 + k_below + j] += ways * per_slot;
                }
            }
        }
    }
    let total = nf as u128 * (nf as u128).pow(m as u32 - 1) * factorial(m);
    (counts[1..].to_vec(), total)
}

/// A random parameter with coefficients bounded away from zero and total
/// persistence in [0.1, 0.95].
pub fn random_theta(rng: &mut impl Rng, p: usize, q: usize) -> ParamVector {
    let k = p + q;
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let persistence = rng.random_range(0.1..0.95);
    let coeffs: Vec<f64> = raw.iter().map(|v| (v / total * persistence).max(0.01)).collect();
    let omega = rng.random_range(0.05..1.0);
    ParamVector::new(omega, coeffs[..p].to_vec(), coeffs[p..].to_vec()).unwrap()
}

/// A sample generated at one random parameter with random fixed initial
/// conditions, to be evaluated at a different one.
pub fn random_instance(rng: &mut impl Rng, p: usize, q: usize) -> (ParamVector, SeriesSample) {
    let truth = random_theta(rng, p, q);
    let theta = random_theta(rng, p, q);
    let n = rng.random_range(30..300);
    let noise: Vec<f64> = (0..n)
        .map(|_| {
            // Sum of uniforms: unit variance, no extreme draws.
            (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0
        })
        .collect();
    let init = InitialConditions::new(
        (0..p).map(|_| rng.random_range(0.1..3.0)).collect(),
        (0..q).map(|_| rng.random_range(0.1..3.0)).collect(),
    )
    .unwrap();
    (theta, simulate(&truth, &noise, &init, 0).unwrap())
}

/// Central differences of `neg_quasi_loglik` with step `h`.
pub fn fd_gradient(theta: &ParamVector, sample: &SeriesSample, h: f64) -> Vec<f64> {
    let base = theta.to_vec();
    (0..base.len())
        .map(|i| {
            let mut up = base.clone();
            let mut down = base.clone();
            up[i] += h;
            down[i] -= h;
            let f = |v: &[f64]| neg_quasi_loglik(&ParamVector::from_slice(theta.orders(), v).unwrap(), sample).unwrap();
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
