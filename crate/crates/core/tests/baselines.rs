mod common;

use common::{paper_theta, sample_from};
use garch_scope::baselines::{asymptotic_region, lr_bootstrap_pvalue, residual_bootstrap, BootstrapConfig, BootstrapRegion};
use garch_scope::harness::{generate_noise, NoiseSpec};
use garch_scope::qml::{asymptotic_covariance, qmle_fit};
use garch_scope::{ParamVector, QmlConfig, SeriesSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(seed: u64) -> SeriesSample {
    sample_from(&paper_theta(), &generate_noise(&NoiseSpec::Logistic, 100, seed).unwrap())
}

fn config(b: usize, seed: u64) -> BootstrapConfig {
    BootstrapConfig { b, seed, ..BootstrapConfig::default() }
}

#[test]
fn residual_bootstrap_is_deterministic_and_accounts_for_every_replication() {
    let sample = fixture(3);
    let fit = qmle_fit(&sample, paper_theta().orders(), &QmlConfig::default()).unwrap();
    let a = residual_bootstrap(&sample, &fit, &config(60, 42)).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let b = pool.install(|| residual_bootstrap(&sample, &fit, &config(60, 42))).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.estimates.len() + a.failed, 60);
    assert_eq!(a.center, fit.theta_hat);
    let c = residual_bootstrap(&sample, &fit, &config(60, 43)).unwrap();
    assert_ne!(a.estimates, c.estimates);
    let region = BootstrapRegion::new(&a, 0.9).unwrap();
    assert!(region.contains(&fit.theta_hat));
}

#[test]
fn lr_p_value_is_one_at_the_estimate() {
    for seed in 0..4 {
        let sample = fixture(seed);
        let fit = qmle_fit(&sample, paper_theta().orders(), &QmlConfig::default()).unwrap();
        let test = lr_bootstrap_pvalue(&fit.theta_hat, &sample, &fit, &config(19, seed)).unwrap();
        assert_eq!(test.lr, 0.0);
        assert_eq!(test.p_value, 1.0);
        assert_eq!(test.bootstrap_lrs.len() + test.failed, 19);
    }
}

#[test]
fn asymptotic_regions_are_nested_in_the_level() {
    let sample = fixture(8);
    let fit = qmle_fit(&sample, paper_theta().orders(), &QmlConfig::default()).unwrap();
    let resolved = QmlConfig::default().initializer.apply(&fit.theta_hat, &sample);
    let cov = asymptotic_covariance(&fit.theta_hat, &resolved).unwrap();
    let levels = [0.5, 0.8, 0.9, 0.95, 0.99];
    let regions: Vec<_> = levels
        .iter()
        .map(|l| asymptotic_region(&fit, &cov, *l, sample.len()).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..2000 {
        let a: f64 = rng.random_range(0.0..1.0);
        let b: f64 = rng.random_range(0.0..1.0 - a);
        let theta = ParamVector::garch11(rng.random_range(0.01..1.0), a, b).unwrap();
        let inside: Vec<bool> = regions.iter().map(|r| r.contains(&theta)).collect();
        for w in inside.windows(2) {
            assert!(!w[0] || w[1], "{theta:?}: {inside:?}");
        }
    }
    assert!(regions.iter().all(|r| r.contains(&fit.theta_hat)));
}
