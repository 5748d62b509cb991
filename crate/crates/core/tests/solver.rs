use proptest::prelude::*;

use ruinopt::checks::{hjb_residual, j_state_error};
use ruinopt::exp_solver::{self, SolveOptions};
use ruinopt::operators::{alpha_vertex, curvature_inf, phi, xi_eta, PointState};
use ruinopt::{ClaimLaw, ModelParams, Regime, SolutionCurve};

fn solve(p: &ModelParams) -> SolutionCurve {
    exp_solver::solve(p, 1.0, &SolveOptions::default()).unwrap()
}

fn state(n: &ruinopt::CurveNode) -> PointState {
    PointState::new(n.x, n.v, n.vp, n.vpp, n.mv)
}

#[test]
fn example2_starts_short_and_example3_survival_is_monotone() {
    let c2 = solve(&ModelParams::example2());
    assert_eq!(c2.segments[0].regime, Regime::Short);
    let c3 = solve(&ModelParams::example3());
    assert_eq!(c3.segments[0].regime, Regime::Short);
    for c in [&c2, &c3] {
        let nodes = c.distinct_nodes();
        assert!(nodes.windows(2).all(|w| w[1].v >= w[0].v));
        assert!(nodes.iter().all(|n| n.vp > 0.0));
        assert!(c.survival(c.x_max()).unwrap() <= 1.0);
    }
}

#[test]
fn xi_eta_reproduce_curvature_and_vertex_on_constant_segments() {
    let p = ModelParams::example1();
    let c = solve(&p);
    let mut checked = 0;
    for n in c.distinct_nodes().iter().filter(|n| n.x > 1e-3) {
        let Some(gamma) = n.regime.gamma(&p) else { continue };
        let s = state(n);
        let (xi, eta) = xi_eta(gamma, &s, &p).unwrap();
        assert!((eta - n.vpp).abs() <= 1e-6 * (1.0 + n.vpp.abs()), "x = {}", n.x);
        let alpha = alpha_vertex(&s, &p).unwrap().unwrap();
        assert!((xi - alpha).abs() <= 1e-6 * (1.0 + xi.abs()), "x = {}", n.x);
        checked += 1;
    }
    assert!(checked > 100, "{checked}");
}

#[test]
fn vertex_equals_phi_on_interior_nodes() {
    for p in [ModelParams::example1(), ModelParams::example2(), ModelParams::example3()] {
        let c = solve(&p);
        for n in c.distinct_nodes().iter().filter(|n| n.regime == Regime::Interior) {
            let s = state(n);
            let Ok(a) = alpha_vertex(&s, &p).unwrap() else { continue };
            let f = phi(&s, &p).unwrap();
            assert!((a - f).abs() <= 1e-8 * (1.0 + f.abs()), "x = {}: {a} vs {f}", n.x);
        }
    }
}

#[test]
fn inf_form_curvature_matches_solution() {
    let p = ModelParams::example1();
    let c = solve(&p);
    let cutoff = 1e-6 * p.a.min(p.b);
    let nodes = c.distinct_nodes();
    let at_one = nodes[nodes.partition_point(|n| n.x < 1.0)];
    for n in nodes.iter().filter(|n| n.x > 1e-3).step_by(37).chain([&at_one]) {
        let got = curvature_inf(&PointState::first_order(n.x, n.v, n.vp, n.mv), &p, cutoff).unwrap();
        assert!((got - n.vpp).abs() <= 1e-6 * n.vpp.abs().max(1e-300), "x = {}: {got} vs {}", n.x, n.vpp);
    }
}

#[test]
fn convolution_state_matches_quadrature() {
    let p = ModelParams::example1();
    let c = solve(&p);
    let err = j_state_error(&c, &ClaimLaw::exponential(1.0), 8.0).unwrap();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn equal_rates_use_only_boundary_fractions_and_zero() {
    let p = ModelParams {
        mu: 0.015,
        ..ModelParams::example1()
    };
    let c = solve(&p);
    for n in &c.nodes {
        assert!(
            n.theta_star == 0.0 || n.theta_star == p.a || n.theta_star == -p.b,
            "x = {}: {}",
            n.x,
            n.theta_star
        );
    }
}

#[test]
fn tighter_tolerance_moves_switch_points_little() {
    let p = ModelParams::example1();
    let loose = solve(&p);
    let tight = exp_solver::solve(
        &p,
        1.0,
        &SolveOptions {
            rtol: 1e-12,
            atol: 1e-14,
            ..SolveOptions::default()
        },
    )
    .unwrap();
    for (a, b) in loose.switch_points.iter().zip(&tight.switch_points) {
        assert!((a.x - b.x).abs() / b.x < 1e-6, "{} vs {}", a.x, b.x);
    }
    assert!((loose.v_inf - tight.v_inf).abs() / tight.v_inf < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solved_curves_are_admissible_and_increasing(
        mu in 0.005f64..0.03,
        a in 0.5f64..3.0,
        b in 0.5f64..25.0,
        sigma in 0.08f64..0.3,
    ) {
        let p = ModelParams { mu, a, b, sigma, ..ModelParams::example1() };
        prop_assume!((mu - p.r).abs() > 1e-4);
        let c = exp_solver::solve(&p, 1.0, &SolveOptions { x_max: Some(30.0), ..SolveOptions::default() }).unwrap();
        let nodes = c.distinct_nodes();
        prop_assert!((nodes[0].v - 1.0).abs() < 1e-12);
        prop_assert!(nodes.windows(2).all(|w| w[1].v >= w[0].v));
        prop_assert!(nodes.iter().all(|n| p.admissible(n.theta_star)));
        prop_assert!(c.survival(30.0).unwrap() <= 1.0 + 1e-12);
        let r = hjb_residual(&c, &ClaimLaw::exponential(1.0), 16).unwrap();
        prop_assert!(r.passes(1e-6), "{:?}", r);
    }
}
