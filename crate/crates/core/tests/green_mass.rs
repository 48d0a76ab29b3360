//! Green's function of Δ + a on S³ and its mass.

use std::f64::consts::PI;

use approx::assert_relative_eq;
use hslab::error::Error;
use hslab::geometry::ModelManifold;
use hslab::green::*;
use hslab::potential::Potential;

fn s3() -> ModelManifold {
    ModelManifold::sphere(3, 1.0).unwrap()
}

fn mass(a: f64) -> f64 {
    solve_green(&s3(), &Potential::constant(a)).unwrap().mass
}

#[test]
fn conformal_case_has_zero_mass() {
    let m = mass(0.75);
    assert!(m.abs() <= 1e-3, "{m}");
    // the closed form vanishes exactly there, and the solver follows it closely
    assert!(m.abs() <= 1e-6, "{m}");
}

#[test]
fn mass_signs_and_closed_form() {
    for &a in &[0.1, 0.5, 1.0, 2.0] {
        let m = mass(a);
        assert_relative_eq!(m, closed_form_mass(1.0, a), epsilon = 1e-6);
    }
    assert!(mass(0.5) > 0.0);
    assert!(mass(1.0) < 0.0);
}

#[test]
fn mass_decreases_in_a() {
    let masses: Vec<f64> = [0.1, 0.25, 0.5, 0.74, 1.0].iter().map(|&a| mass(a)).collect();
    assert!(masses.windows(2).all(|w| w[0] > w[1]), "{masses:?}");
}

#[test]
fn finer_grid_agrees() {
    // the closed form aside, a 4× denser grid reproduces the mass
    let a = Potential::constant(0.5);
    let coarse = solve_green(&s3(), &a).unwrap().mass;
    let fine = solve_green_with(&s3(), &a, GreenOptions { nodes: 4 * DEFAULT_GREEN_NODES, ..Default::default() })
        .unwrap()
        .mass;
    assert_relative_eq!(coarse, fine, max_relative = 1e-6);
}

#[test]
fn dirac_normalization_positivity_and_residual() {
    for &a in &[0.25, 0.5, 1.0] {
        let g = solve_green(&s3(), &Potential::constant(a)).unwrap();
        assert!(g.min_g() > 0.0);
        assert!(g.ode_residual <= ODE_RESIDUAL_TOL);
        // |r ω₂ G(r) − 1| ≤ C r on the smallest decade
        let r0 = g.nodes[0];
        for (&r, &gv) in g.nodes.iter().zip(&g.g) {
            if r > 10.0 * r0 {
                break;
            }
            assert!((r * 4.0 * PI * gv - 1.0).abs() <= 2.0 * r, "r = {r}");
        }
        // flat-space fundamental solution at short range
        let r = 1e-4;
        assert_relative_eq!(g.g_at(r), 1.0 / (4.0 * PI * r), max_relative = 1e-3);
    }
}

#[test]
fn mass_does_not_depend_on_the_pole() {
    // the solver is radial, so "another pole" is a rotated copy of the same
    // problem; two independent solves must agree
    let a = Potential::constant(0.5);
    let m1 = solve_green(&s3(), &a).unwrap().mass;
    let m2 = solve_green(&ModelManifold::sphere(3, 1.0).unwrap(), &a).unwrap().mass;
    assert!((m1 - m2).abs() <= 1e-8);
}

#[test]
fn radius_scaling() {
    // on S³(R) with a = α/R² the mass scales like 1/R
    let m1 = solve_green(&s3(), &Potential::constant(0.5)).unwrap().mass;
    let m2 = solve_green(&ModelManifold::sphere(3, 2.0).unwrap(), &Potential::constant(0.125))
        .unwrap()
        .mass;
    assert_relative_eq!(m2, 0.5 * m1, max_relative = 1e-7);
}

#[test]
fn comparison_lemma() {
    let cmp = mass_comparison(&s3(), &Potential::constant(0.25), &Potential::constant(0.5)).unwrap();
    assert!(cmp.min_gap > 0.0);
    assert!(cmp.mass > cmp.mass_prime);
    assert_relative_eq!(cmp.mass - cmp.mass_prime, cmp.representation_gap, max_relative = 1e-6);

    let same = mass_comparison(&s3(), &Potential::constant(0.5), &Potential::constant(0.5)).unwrap();
    assert!(same.min_gap.abs() <= 1e-12);

    // a bump near the antipode still lowers the mass at x₀
    let bump = Potential::Bump {
        base: 0.5,
        height: 0.5,
        center: 2.8,
        width: 0.3,
    };
    let opts = GreenOptions {
        nodes: 2048,
        ..Default::default()
    };
    let far = mass_comparison_with(&s3(), &Potential::constant(0.5), &bump, opts).unwrap();
    assert!(far.mass > far.mass_prime);
    assert!(far.min_gap > 0.0);
    assert_relative_eq!(far.mass - far.mass_prime, far.representation_gap, max_relative = 1e-5);
}

#[test]
fn comparison_rejects_unordered_potentials() {
    assert!(matches!(
        mass_comparison(&s3(), &Potential::constant(0.5), &Potential::constant(0.25)),
        Err(Error::Domain(_))
    ));
}

#[test]
fn failure_modes() {
    assert!(matches!(
        solve_green(&s3(), &Potential::constant(-0.5)),
        Err(Error::Coercivity { .. })
    ));
    assert!(matches!(
        solve_green(&ModelManifold::sphere(4, 1.0).unwrap(), &Potential::constant(0.5)),
        Err(Error::Domain(_))
    ));
    // a potential too sharp for the grid is reported, not silently accepted
    let spike = Potential::Bump {
        base: 0.5,
        height: 50.0,
        center: 1.5,
        width: 0.01,
    };
    assert!(matches!(
        solve_green_with(&s3(), &spike, GreenOptions { nodes: 128, ..Default::default() }),
        Err(Error::Resolution(_))
    ));
}
