use proptest::prelude::*;

use ruinopt::exp_solver;
use ruinopt::simulator::{
    compare_policies, estimate_survival, FeedbackPolicy, Policy, Scheme, SimConfig,
};
use ruinopt::{ClaimLaw, ModelParams, SolutionCurve};

fn example1_curve() -> SolutionCurve {
    exp_solver::solve(&ModelParams::example1(), 1.0, &Default::default()).unwrap()
}

#[test]
fn halving_the_step_changes_estimates_by_less_than_one_half_width() {
    let p = ModelParams::example1();
    let curve = example1_curve();
    let pol = Policy::Feedback(FeedbackPolicy::from_curve(&curve));
    let law = ClaimLaw::exponential(1.0);
    let base = SimConfig {
        n_paths: 20_000,
        ..SimConfig::default()
    };
    let halved = SimConfig {
        euler_dt: Some(0.005 / p.lambda),
        max_step_variance: 0.005,
        ..base
    };
    let a = estimate_survival(&[1.0, 5.0], &pol, &p, &law, &base).unwrap();
    let b = estimate_survival(&[1.0, 5.0], &pol, &p, &law, &halved).unwrap();
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        assert!((ra.p_hat - rb.p_hat).abs() < ra.ci_half, "{ra:?} vs {rb:?}");
    }
}

#[test]
fn euler_and_log_euler_agree_within_noise() {
    let p = ModelParams::example1();
    let law = ClaimLaw::exponential(1.0);
    let pol = Policy::constant(1.0, "const(a)");
    let cfg = SimConfig {
        n_paths: 20_000,
        ..SimConfig::default()
    };
    let a = estimate_survival(&[3.0], &pol, &p, &law, &cfg).unwrap();
    let b = estimate_survival(&[3.0], &pol, &p, &law, &SimConfig { scheme: Scheme::Euler, ..cfg }).unwrap();
    let gate = 2.0 * (a.rows[0].ci_half.powi(2) + b.rows[0].ci_half.powi(2)).sqrt();
    assert!((a.rows[0].p_hat - b.rows[0].p_hat).abs() < gate);
}

#[test]
fn boundary_policies_never_ruin_between_claims() {
    let p = ModelParams::example1();
    let law = ClaimLaw::exponential(1.0);
    let cfg = SimConfig {
        n_paths: 2_000,
        ..SimConfig::default()
    };
    for pol in [Policy::constant(p.a, "a"), Policy::constant(-p.b, "-b")] {
        let r = estimate_survival(&[0.5], &pol, &p, &law, &cfg).unwrap();
        assert_eq!(r.rows[0].ruin_between_claims_frac, 0.0);
    }
}

#[test]
fn single_policy_comparison_is_degenerate() {
    let p = ModelParams::example1();
    let cmp = compare_policies(
        &[1.0],
        &[Policy::constant(0.0, "const(0)")],
        &p,
        &ClaimLaw::exponential(1.0),
        &SimConfig {
            n_paths: 100,
            ..SimConfig::default()
        },
    )
    .unwrap();
    assert_eq!(cmp.report.rows.len(), 1);
    assert!(cmp.dominance.is_empty());
}

#[test]
fn short_horizon_is_reported_as_censoring() {
    let p = ModelParams::example1();
    let cfg = SimConfig {
        n_paths: 1_000,
        horizon: Some(1.0),
        ..SimConfig::default()
    };
    let r = estimate_survival(&[5.0], &Policy::constant(0.0, "z"), &p, &ClaimLaw::exponential(1.0), &cfg).unwrap();
    assert!(r.rows[0].censored_frac > 0.5);
    assert_eq!(r.warnings.len(), 1);
}

#[test]
fn report_csv_schema() {
    let p = ModelParams::example1();
    let cfg = SimConfig {
        n_paths: 50,
        ..SimConfig::default()
    };
    let r = estimate_survival(&[1.0, 2.0], &Policy::constant(0.5, "half"), &p, &ClaimLaw::exponential(1.0), &cfg).unwrap();
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x0,policy,p_hat,ci_half,n,censored_frac");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,half,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn feedback_fractions_are_admissible(x in 0.0f64..200.0) {
        thread_local!(static F: (FeedbackPolicy, ModelParams) = {
            let c = example1_curve();
            (FeedbackPolicy::from_curve(&c), c.params)
        });
        F.with(|(f, p)| {
            let t = f.eval(x);
            prop_assert!(t >= -p.b && t <= p.a);
            Ok(())
        })?;
    }

    #[test]
    fn estimates_are_probabilities(seed in any::<u64>(), theta in -20.0f64..1.0, x0 in 0.0f64..10.0) {
        let p = ModelParams::example1();
        let cfg = SimConfig { n_paths: 40, seed, ..SimConfig::default() };
        let r = estimate_survival(&[x0], &Policy::constant(theta, "t"), &p, &ClaimLaw::exponential(1.0), &cfg).unwrap();
        let row = &r.rows[0];
        prop_assert!((0.0..=1.0).contains(&row.p_hat));
        prop_assert!((row.ci_half - 1.96 * (row.p_hat * (1.0 - row.p_hat) / 40.0).sqrt()).abs() < 1e-15);
    }
}
