mod common;

use common::{fd_gradient, inf_dist, inf_norm, random_instance};
use garch_scope::qml::{score, score_with};
use garch_scope::scope::perturbed_score;
use garch_scope::{Initializer, ScopeConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ORDERS: [(usize, usize); 8] = [(0, 1), (0, 2), (1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2)];

#[test]
fn analytic_score_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let (p, q) = ORDERS[i % ORDERS.len()];
        let (theta, sample) = random_instance(&mut rng, p, q);
        let analytic = score(&theta, &sample).unwrap();
        let numeric = fd_gradient(&theta, &sample, 1e-6);
        let rel = inf_dist(&analytic, &numeric) / inf_norm(&analytic).max(1e-3);
        worst = worst.max(rel);
        assert!(rel <= 1e-5, "instance {i} ({p},{q}): {analytic:?} vs {numeric:?}");
    }
    assert!(worst.is_finite());
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[test]
fn identity_permutation_reproduces_the_score() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..100 {
        let (p, q) = ORDERS[i % ORDERS.len()];
        let (theta, sample) = random_instance(&mut rng, p, q);
        let identity: Vec<u32> = (0..sample.len() as u32).collect();
        for initializer in [Initializer::Fixed, Initializer::Unconditional, Initializer::Omega] {
            let config = ScopeConfig::new(10, 1, 0).unwrap().with_initializer(initializer);
            let b0 = perturbed_score(&theta, &sample, &identity, &config).unwrap();
            let g = score_with(&theta, &sample, initializer).unwrap();
            let rel = (sq(&b0) - sq(&g)).abs() / sq(&g);
            assert!(rel <= 1e-12, "instance {i}, {initializer:?}: {rel}");
        }
    }
}

#[test]
fn unit_residuals_zero_every_perturbed_score() {
    // ε̂² ≡ 1 when |X_t| = σ̂_t, i.e. simulated with noise ±1.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (theta, _) = random_instance(&mut rng, 1, 1);
    let noise: Vec<f64> = (0..40).map(|t| if t % 3 == 0 { -1.0 } else { 1.0 }).collect();
    let init = garch_scope::InitialConditions::new(vec![0.7], vec![1.3]).unwrap();
    let sample = garch_scope::garch::simulate(&theta, &noise, &init, 0).unwrap();
    let config = ScopeConfig::new(5, 1, 0).unwrap().with_initializer(Initializer::Fixed);
    assert!(inf_norm(&score(&theta, &sample).unwrap()) < 1e-15);
    let perms = config.permutations(sample.len()).unwrap();
    for perm in perms.perms() {
        let b = perturbed_score(&theta, &sample, perm, &config).unwrap();
        assert!(inf_norm(&b) < 1e-15, "{b:?}");
    }
}
