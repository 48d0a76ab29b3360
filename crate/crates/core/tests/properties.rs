//! Property tests: randomized inputs against invariants that must hold
//! exactly or to a stated tolerance.

use hslab::bubble::{integral_identities, perturbed_quotient_excess, BubbleParams};
use hslab::geometry::{ModelManifold, RadialFunction, RadialGrid};
use hslab::potential::Potential;
use hslab::special::{aubin_integral, aubin_integral_quadrature, verify_aubin_pairs, AubinIntegralParams};
use hslab::subcritical::{gradient_check, SubcriticalProblem};
use hslab::test_functions::{evaluate_j, TestFamily};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aubin_recurrences_hold(p in 1.6f64..12.0, frac in 0.0f64..1.0) {
        // q ∈ (−1, p − 1.5]
        let q = -0.95 + frac * (p - 1.5 + 0.95);
        let report = verify_aubin_pairs([(p, q)]);
        prop_assert!(report.skipped.is_empty());
        prop_assert!(report.max_violation() <= 1e-10, "{:?}", report);
    }

    #[test]
    fn aubin_closed_form_matches_quadrature(p in 2.0f64..9.0, frac in 0.05f64..0.9) {
        let q = frac * (p - 1.2);
        let params = AubinIntegralParams::new(p, q).unwrap();
        let exact = aubin_integral(params).unwrap();
        let quad = aubin_integral_quadrature(params, 1e-12).unwrap();
        prop_assert!(((exact - quad) / exact).abs() <= 1e-10);
    }

    #[test]
    fn identities_hold_off_grid(n in 5u32..=10, s in 0.0f64..1.9) {
        let p = BubbleParams::new(n, s).unwrap();
        for cmp in integral_identities(&p).unwrap() {
            prop_assert!(cmp.rel_err <= 1e-8, "{:?}", cmp);
        }
    }

    #[test]
    fn grid_quotient_is_zero_homogeneous(c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0], k in 0usize..4) {
        let m = ModelManifold::sphere(3, 1.0).unwrap();
        let family = TestFamily::with_defaults(m, 1.0, Potential::constant(0.5)).unwrap();
        let grid = RadialGrid::new(&m, 128).unwrap();
        let u = RadialFunction::sample(&grid, |r| 1.5 + (k as f64 * r).cos());
        let cu = RadialFunction::sample(&grid, |r| c * (1.5 + (k as f64 * r).cos()));
        let a = evaluate_j(&family, &grid, &u).unwrap();
        let b = evaluate_j(&family, &grid, &cu).unwrap();
        prop_assert!(((a - b) / a).abs() <= 1e-12);
    }
}

/// Φ minimizes the Euclidean quotient: bumps added at random positions and
/// amplitudes never lower it.
#[test]
fn bubble_is_extremal_under_random_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for &(n, s) in &[(3u32, 0.0), (3, 1.0), (5, 0.5), (7, 1.5)] {
        let p = BubbleParams::new(n, s).unwrap();
        for _ in 0..24 {
            let center: f64 = rng.gen_range(0.2..4.0);
            let width: f64 = rng.gen_range(0.1..0.8);
            let delta: f64 = rng.gen_range(-0.05..0.05);
            let bump = |r: f64| {
                let x = (r - center) / width;
                if x.abs() < 1.0 {
                    (1.0 - x * x).powi(4)
                } else {
                    0.0
                }
            };
            let dbump = |r: f64| {
                let x = (r - center) / width;
                if x.abs() < 1.0 {
                    -8.0 * x * (1.0 - x * x).powi(3) / width
                } else {
                    0.0
                }
            };
            let lo = (center - width).max(1e-9);
            let excess = perturbed_quotient_excess(&p, bump, dbump, (lo, center + width), delta).unwrap();
            assert!(excess >= -1e-13, "n={n} s={s} c={center} w={width} δ={delta}: {excess}");
        }
    }
}

/// The analytic constrained gradient of the discrete J_q matches central
/// differences along smooth random directions at random points.
#[test]
fn constrained_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cases = [(3u32, 1.0, 0.5, 2.5), (3, 1.0, 0.5, 4.0), (5, 1.0, 0.1, 2.4), (5, 1.0, 0.1, 8.0 / 3.0)];
    for &(n, s, a, q) in &cases {
        let m = ModelManifold::sphere(n, 1.0).unwrap();
        let prob = SubcriticalProblem::new(m, s, Potential::constant(a), q, 256).unwrap();
        let len = prob.grid.length;
        for _ in 0..10 {
            let coef: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let eps: f64 = rng.gen_range(0.05..0.5);
            let u: Vec<f64> = prob
                .grid
                .nodes
                .iter()
                .map(|&r| 1.0 / (eps + r) + 0.3 * coef[0] * (r / len * 3.0).cos() + 1.0)
                .collect();
            let dirs: Vec<Vec<f64>> = (0..10)
                .map(|_| {
                    let c: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    prob.grid
                        .nodes
                        .iter()
                        .map(|&r| {
                            c.iter()
                                .enumerate()
                                .map(|(k, ck)| ck * (k as f64 * std::f64::consts::PI * r / len).cos())
                                .sum::<f64>()
                        })
                        .collect()
                })
                .collect();
            let worst = gradient_check(&prob, &u, &dirs).unwrap();
            assert!(worst <= 1e-5, "n={n} q={q}: relative gradient error {worst:.3e}");
        }
    }
}
