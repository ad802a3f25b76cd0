mod common;

use garch_scope::baselines::{chi_square_quantile, lr_p_value, Ellipsoid};
use garch_scope::garch::{residuals, simulate, standardize, variance_path};
use garch_scope::scope::{rank, rank_field};
use garch_scope::{InitialConditions, ModelOrders, ParamVector, PermutationSet, ScopeConfig, SeriesSample};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn orders() -> impl Strategy<Value = (usize, usize)> {
    (0usize..=2, 0usize..=2).prop_filter("not GARCH(0,0)", |(p, q)| p + q > 0)
}

/// A parameter of the given orders with total persistence below `cap`.
fn theta_of(p: usize, q: usize, cap: f64) -> impl Strategy<Value = ParamVector> {
    (0.01f64..2.0, prop::collection::vec(0.0f64..1.0, p + q), 0.0f64..cap).prop_map(move |(omega, raw, total)| {
        let sum: f64 = raw.iter().sum::<f64>().max(1e-12);
        let c: Vec<f64> = raw.iter().map(|v| v / sum * total).collect();
        ParamVector::new(omega, c[..p].to_vec(), c[p..].to_vec()).unwrap()
    })
}

fn case() -> impl Strategy<Value = (ParamVector, Vec<f64>, InitialConditions)> {
    orders().prop_flat_map(|(p, q)| {
        (
            theta_of(p, q, 1.2),
            prop::collection::vec(-4.0f64..4.0, 1..400),
            prop::collection::vec(0.0f64..5.0, p),
            prop::collection::vec(0.01f64..5.0, q),
        )
            .prop_map(|(theta, noise, x2, s2)| (theta, noise, InitialConditions::new(x2, s2).unwrap()))
    })
}

fn small_sample() -> impl Strategy<Value = SeriesSample> {
    (prop::collection::vec(-3.0f64..3.0, 8..40), 0.1f64..2.0, 0.1f64..2.0).prop_map(|(noise, x2, s2)| {
        let theta = common::paper_theta();
        simulate(&theta, &noise, &InitialConditions::new(vec![x2], vec![s2]).unwrap(), 0).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn inversion_identity((theta, noise, init) in case()) {
        let sample = simulate(&theta, &noise, &init, 0).unwrap();
        let back = residuals(&theta, &sample).unwrap();
        for (a, b) in back.iter().zip(&noise) {
            prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-300) || a == b, "{a} vs {b}");
        }
    }

    #[test]
    fn variances_never_drop_below_omega((theta, noise, init) in case()) {
        let sample = simulate(&theta, &noise, &init, 0).unwrap();
        let path = variance_path(&theta, &sample).unwrap();
        prop_assert!(path.values.iter().all(|v| *v >= theta.omega()));
    }

    #[test]
    fn stationarity_is_strict(omega in 0.01f64..2.0, a in 0.0f64..1.0) {
        let theta = ParamVector::garch11(omega, a, 1.0 - a).unwrap();
        let persistence = theta.persistence();
        prop_assert_eq!(theta.is_stationary(), persistence < 1.0);
        let below = ParamVector::garch11(omega, a * 0.5, (1.0 - a) * 0.5).unwrap();
        prop_assert!(below.is_stationary());
    }

    #[test]
    fn standardized_values_have_unit_spread(x in prop::collection::vec(-100.0f64..100.0, 2..200)) {
        prop_assume!(x.iter().any(|v| (v - x[0]).abs() > 1e-6));
        let z = standardize(&x).unwrap();
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-12);
        prop_assert!((var - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rank_field_is_schedule_independent(sample in small_sample(), seed in any::<u64>(), cells in 2usize..8) {
        let config = ScopeConfig::new(12, 2, seed).unwrap();
        let perms = config.permutations(sample.len()).unwrap();
        let mut grid = Vec::new();
        for i in 0..cells {
            for j in 0..cells - i {
                let (a, b) = ((i as f64 + 0.5) / cells as f64, (j as f64 + 0.5) / cells as f64);
                if a + b < 1.0 {
                    grid.push(ParamVector::garch11(1.0 - a - b, a, b).unwrap());
                }
            }
        }
        let field = rank_field(&sample, &grid, &perms, &config).unwrap();
        let reversed: Vec<_> = grid.iter().rev().cloned().collect();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let back = pool.install(|| rank_field(&sample, &reversed, &perms, &config)).unwrap();
        for (p, q) in field.points.iter().zip(back.points.iter().rev()) {
            prop_assert_eq!(p, q);
        }
        for (p, theta) in field.points.iter().zip(&grid) {
            prop_assert_eq!(p.rank, rank(theta, &sample, &perms, &config).unwrap());
            prop_assert_eq!(p.in_region, p.rank <= 10);
        }
    }

    #[test]
    fn rank_ignores_relabeling_of_perturbations(sample in small_sample(), seed in any::<u64>(), shift in 1usize..11) {
        let config = ScopeConfig::new(12, 2, seed).unwrap();
        let perms = config.permutations(sample.len()).unwrap();
        // Rotate π_1..π_{m-1} together with their ν labels.
        let mut p = perms.perms().to_vec();
        let mut nu = perms.nu().to_vec();
        p.rotate_left(shift);
        nu[1..].rotate_left(shift);
        let relabeled = PermutationSet::from_parts(p, nu).unwrap();
        for theta in [common::paper_theta(), ParamVector::garch11(0.5, 0.2, 0.3).unwrap()] {
            prop_assert_eq!(
                rank(&theta, &sample, &perms, &config).unwrap(),
                rank(&theta, &sample, &relabeled, &config).unwrap()
            );
        }
    }

    #[test]
    fn ellipsoid_is_affine_invariant(
        center in prop::collection::vec(0.01f64..1.0, 3),
        point in prop::collection::vec(0.01f64..1.0, 3),
        l in prop::collection::vec(-1.0f64..1.0, 6),
        a in prop::collection::vec(0.01f64..1.0, 9),
        shift in prop::collection::vec(0.0f64..1.0, 3),
        radius in 0.001f64..1.0,
    ) {
        // Shape L·Lᵀ + I is positive definite; A has positive entries and is
        // made diagonally dominant, so it is invertible and keeps points feasible.
        let lower = DMatrix::from_fn(3, 3, |r, c| if c < r { l[r * (r - 1) / 2 + c] } else if r == c { 1.0 + l[3 + r].abs() } else { 0.0 });
        let shape = &lower * lower.transpose() + DMatrix::identity(3, 3);
        let mut amat = DMatrix::from_row_slice(3, 3, &a);
        for i in 0..3 {
            amat[(i, i)] += 3.0;
        }
        let orders = ModelOrders::new(1, 1).unwrap();
        let pv = |v: &[f64]| ParamVector::from_slice(orders, v).unwrap();
        let map = |v: &[f64]| {
            let y = &amat * nalgebra::DVector::from_column_slice(v) + nalgebra::DVector::from_column_slice(&shift);
            y.iter().copied().collect::<Vec<f64>>()
        };
        let inv = amat.clone().try_inverse().unwrap();
        let original = Ellipsoid { center: pv(&center), shape: shape.clone(), radius };
        let moved = Ellipsoid { center: pv(&map(&center)), shape: inv.transpose() * &shape * &inv, radius };
        let q0 = original.quadratic_form(&pv(&point));
        let q1 = moved.quadratic_form(&pv(&map(&point)));
        prop_assert!((q0 - q1).abs() <= 1e-9 * q0.max(1.0), "{q0} vs {q1}");
        if (q0 - radius).abs() > 1e-8 * radius.max(q0) {
            prop_assert_eq!(original.contains(&pv(&point)), moved.contains(&pv(&map(&point))));
        }
    }

    #[test]
    fn chi_square_quantile_is_monotone(l1 in 0.01f64..0.98, gap in 0.001f64..0.01, d in 1usize..6) {
        prop_assert!(chi_square_quantile(l1, d).unwrap() < chi_square_quantile(l1 + gap, d).unwrap());
    }

    #[test]
    fn lr_p_values_are_valid(lrs in prop::collection::vec(0.0f64..20.0, 0..60), observed in 0.0f64..20.0) {
        let p = lr_p_value(observed, &lrs);
        prop_assert!(p > 0.0 && p <= 1.0);
        prop_assert_eq!(lr_p_value(0.0, &lrs), 1.0);
    }
}
