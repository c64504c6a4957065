mod common;

use std::sync::Arc;

use common::{bisect, three_knot};
use elicit_core::mechanism::{
    conditional_expected_utility, dominance_witness, draw_genie, expected_utility, naive_expected_utility,
    naive_optimal_report, optimal_report, settle_reward, utility_curve, write_curve_csv, GenieStreams,
};
use elicit_core::streams::{substream, trial_stream, Purpose};
use elicit_core::{Belief, BetaBelief, Error, MechanismConfig, UniformBelief, Utility};
use proptest::prelude::*;
use rand::Rng;

// (1 − e^{−1/2}) / (1 − e^{−1}): the uniform quantile the naive variant
// targets under exponential utility with a = 1, α = 1/2, r = 1.
const NAIVE_UNIFORM_TARGET: f64 = 0.622_459_331_201_854_6;

fn cfg(alpha: f64, reward: f64) -> MechanismConfig {
    MechanismConfig::new(alpha, reward).unwrap()
}

#[test]
fn naive_target_oracle() {
    let u = |x: f64| 1.0 - (-x).exp();
    let root = bisect(|q| q - u(0.5) / u(1.0), 0.0, 1.0);
    assert!((root - NAIVE_UNIFORM_TARGET).abs() < 1e-15);
}

#[test]
fn naive_variant_is_biased_toward_the_utility_ratio() {
    let c = cfg(0.5, 1.0);
    let u = Utility::exponential(1.0).unwrap();
    let naive = naive_optimal_report(&c, &UniformBelief, &u).unwrap();
    assert!((naive.report - NAIVE_UNIFORM_TARGET).abs() < 1e-6);
    assert!((naive.bias - (NAIVE_UNIFORM_TARGET - 0.5)).abs() < 1e-6);
    assert!((UniformBelief.cdf(naive.report) - naive.target_probability).abs() < 1e-6);

    let genie = optimal_report(&c, &UniformBelief, &u, 1e-4).unwrap();
    assert!((genie.report - 0.5).abs() < 1e-4);
}

#[test]
fn naive_and_genie_coincide_for_linear_utility() {
    let c = cfg(0.3, 2.0);
    let b = BetaBelief::new(2.0, 5.0).unwrap();
    for i in 0..=50 {
        let q = i as f64 / 50.0;
        let g = expected_utility(&c, &b, &Utility::Linear, q).unwrap();
        let n = naive_expected_utility(&c, &b, &Utility::Linear, q).unwrap();
        assert!((g - n).abs() < 1e-14);
    }
}

#[test]
fn conditional_utilities_average_to_expected_utility() {
    let c = cfg(0.4, 1.0);
    let b = BetaBelief::new(2.0, 5.0).unwrap();
    let u = Utility::exponential(2.0).unwrap();
    let n = 10_000;
    for q in [0.1, 0.27, 0.5, 0.9] {
        let avg: f64 = (0..n)
            .map(|i| conditional_expected_utility(&c, &b, &u, q, (i as f64 + 0.5) / n as f64).unwrap())
            .sum::<f64>()
            / n as f64;
        let v = expected_utility(&c, &b, &u, q).unwrap();
        assert!((avg - v).abs() < 1e-3, "q={q}: {avg} vs {v}");
    }
}

#[test]
fn expected_utility_is_concave_in_the_report() {
    let u = Utility::power(0.5).unwrap();
    let beliefs: Vec<Arc<dyn Belief>> =
        vec![Arc::new(UniformBelief), Arc::new(BetaBelief::new(2.0, 5.0).unwrap()), Arc::new(three_knot())];
    let h = 1e-3;
    for b in &beliefs {
        for alpha in [0.1, 0.5, 0.9] {
            let c = cfg(alpha, 1.0);
            let v = |q: f64| expected_utility(&c, b.as_ref(), &u, q).unwrap();
            for i in 1..1000 {
                let q = i as f64 * h;
                let second = v(q + h) - 2.0 * v(q) + v(q - h);
                assert!(second <= 1e-9, "{} alpha={alpha} q={q}: {second}", b.label());
            }
        }
    }
}

#[test]
fn reward_scale_does_not_move_the_optimum() {
    let b = BetaBelief::new(5.0, 2.0).unwrap();
    let u = Utility::exponential(3.0).unwrap();
    let reports: Vec<f64> =
        [0.5, 1.0, 10.0].iter().map(|&r| optimal_report(&cfg(0.25, r), &b, &u, 1e-4).unwrap().report).collect();
    for r in &reports {
        assert!((r - reports[0]).abs() < 1e-6, "{reports:?}");
    }
}

#[test]
fn monte_carlo_marginalizes_to_expected_utility() {
    let b = three_knot();
    let u = Utility::exponential(1.0).unwrap();
    let c = cfg(0.6, 1.0);
    let mut pick = substream(99, 0);
    let n = 1_000_000u64;
    for k in 0..5u64 {
        let q: f64 = pick.random();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for i in 0..n {
            let theta = b.sample(&mut trial_stream(1000 + k, i, Purpose::Theta));
            let draw = draw_genie(&c, &mut GenieStreams::new(1000 + k, i));
            let x = u.evaluate(settle_reward(&c, q, draw, theta).unwrap().payoff).unwrap();
            sum += x;
            sum_sq += x * x;
        }
        let mean = sum / n as f64;
        let se = ((sum_sq / n as f64 - mean * mean) / (n - 1) as f64).sqrt();
        let v = expected_utility(&c, &b, &u, q).unwrap();
        assert!((mean - v).abs() <= 4.0 * se, "q={q}: {mean} vs {v} (se {se})");
    }
}

#[test]
fn untruthful_objective_reports_its_curve() {
    let err = optimal_report(&cfg(0.5, 1.0), &BetaBelief::new(2.0, 5.0).unwrap(), &Utility::Linear, 0.0);
    match err {
        Err(Error::Untruthful { curve, gap, .. }) => {
            assert_eq!(curve.len(), 1001);
            assert!(gap < 1e-4);
        }
        other => panic!("expected an untruthful error, got {other:?}"),
    }
}

#[test]
fn curve_csv_has_header_and_rows() {
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let pts = utility_curve(&cfg(0.5, 1.0), &UniformBelief, &Utility::exponential(1.0).unwrap(), &grid).unwrap();
    let mut out = Vec::new();
    write_curve_csv(&pts, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "q,v,naive_v");
    assert_eq!(lines.len(), 12);
}

#[test]
fn risk_loving_experts_stay_truthful_and_the_naive_variant_undershoots() {
    let beliefs: Vec<Arc<dyn Belief>> =
        vec![Arc::new(UniformBelief), Arc::new(BetaBelief::new(2.0, 5.0).unwrap()), Arc::new(three_knot())];
    for gamma in [1.5, 2.0, 3.0] {
        let u = Utility::power(gamma).unwrap();
        for b in &beliefs {
            for alpha in [0.1, 0.5, 0.9] {
                let c = cfg(alpha, 2.0);
                let r = optimal_report(&c, b.as_ref(), &u, 1e-4);
                assert!(r.is_ok(), "gamma={gamma} {} alpha={alpha}: {:?}", b.label(), r.err());
                // u(rα)/u(r) = α^γ < α, so the naive report falls below the quantile.
                let naive = naive_optimal_report(&c, b.as_ref(), &u).unwrap();
                assert!((b.cdf(naive.report) - alpha.powf(gamma)).abs() < 1e-6);
                assert!(naive.bias < -1e-3, "gamma={gamma} {} alpha={alpha}: {}", b.label(), naive.bias);
            }
        }
    }
}

#[test]
fn witness_is_empty_at_the_quantile() {
    let b = BetaBelief::new(2.0, 2.0).unwrap();
    let c = cfg(0.5, 1.0);
    let w = dominance_witness(&c, &b, 0.5).unwrap();
    assert!(w.is_empty());
    assert!(w.sample_certificates(&b, 10, &mut substream(1, 0)).is_empty());
}

fn utility_strategy() -> impl Strategy<Value = Utility> {
    prop_oneof![
        Just(Utility::Linear),
        (0.1f64..4.0).prop_map(|g| Utility::power(g).unwrap()),
        (0.1f64..5.0).prop_map(|a| Utility::exponential(a).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn optimum_is_the_quantile(
        a in 0.7f64..8.0,
        b in 0.7f64..8.0,
        alpha in 0.05f64..0.95,
        reward in 0.1f64..20.0,
        u in utility_strategy(),
    ) {
        let belief = BetaBelief::new(a, b).unwrap();
        let r = optimal_report(&cfg(alpha, reward), &belief, &u, 1e-4);
        prop_assert!(r.is_ok(), "{:?}", r.err());
    }

    #[test]
    fn derivative_matches_alpha_minus_cdf(
        a in 0.7f64..8.0,
        b in 0.7f64..8.0,
        alpha in 0.05f64..0.95,
        q in 0.01f64..0.99,
    ) {
        let belief = BetaBelief::new(a, b).unwrap();
        let u = Utility::exponential(1.0).unwrap();
        let c = cfg(alpha, 1.0);
        let h = 1e-5;
        let fd = (expected_utility(&c, &belief, &u, q + h).unwrap()
            - expected_utility(&c, &belief, &u, q - h).unwrap()) / (2.0 * h);
        let exact = u.evaluate(1.0).unwrap() * (alpha - belief.cdf(q));
        prop_assert!((fd - exact).abs() < 1e-6);
    }

    #[test]
    fn witness_certificates_hold(
        a in 0.7f64..8.0,
        b in 0.7f64..8.0,
        alpha in 0.05f64..0.95,
        q in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let belief = BetaBelief::new(a, b).unwrap();
        let c = cfg(alpha, 1.0);
        let w = dominance_witness(&c, &belief, q).unwrap();
        if (q - w.quantile).abs() > 1e-6 {
            prop_assert!(!w.is_empty());
            for cert in w.sample_certificates(&belief, 10, &mut substream(seed, 0)) {
                prop_assert!(cert.holds());
                if q > w.quantile {
                    prop_assert!(cert.cdf_at_xi > alpha);
                } else {
                    prop_assert!(cert.cdf_at_xi < alpha);
                }
            }
        }
    }
}
