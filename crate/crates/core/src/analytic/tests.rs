use proptest::prelude::*;

use super::*;
use crate::model::{PowerPolicy, Protocol, RatePolicy, Scenario};

fn nakagami(n: f64) -> FadingDistribution {
    FadingDistribution::nakagami(n, 1.0).unwrap()
}

fn cfg(protocol: Protocol, m: usize, scenario: Scenario, p_b: f64, fading: FadingDistribution) -> ArqConfig {
    ArqConfig::new(protocol, m, scenario, p_b, fading)
}

/// Composite Simpson quadrature of the gain pdf written out by hand.
fn cdf_oracle(n: f64, w: f64, g: f64) -> f64 {
    let ln_gamma_n = statrs::function::gamma::ln_gamma(n);
    let pdf = |x: f64| {
        if x == 0.0 {
            return 0.0;
        }
        (std::f64::consts::LN_2 + n * (n / w).ln() - ln_gamma_n + (2.0 * n - 1.0) * x.ln() - n * x * x / w).exp()
    };
    let k = 20_000;
    let h = g / k as f64;
    let mut s = pdf(0.0) + pdf(g);
    for i in 1..k {
        s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn opts() -> AnalyticOptions {
    AnalyticOptions::default()
}

#[test]
fn rtd_first_round_uses_empty_sum_convention() {
    let f = nakagami(2.0);
    let c = cfg(Protocol::Rtd, 2, Scenario::LongLc, 0.0, f);
    let r = 0.4_f64;
    let p = 2.0;
    let got = pr_m(&c, &PowerPolicy::uniform(p, 3), &RatePolicy::fixed_length(r, 3), 1, &opts()).unwrap();
    let expect = 1.0 - f.prob_below(r.exp_m1() / p);
    assert!((got - expect).abs() < 1e-15);
}

#[test]
fn variable_inr_uniform_matches_closed_form() {
    let f = nakagami(2.0);
    let c = cfg(Protocol::InrVariable, 2, Scenario::LongLc, 0.0, f);
    let rp = RatePolicy::variable(vec![1.1, 0.7, 0.3]);
    let pp = PowerPolicy::uniform(1.3, 3);
    let ladder = decode_ladder(&c, &pp, &rp, &opts()).unwrap();
    for m in 1..=3 {
        let hi = if m == 1 {
            1.0
        } else {
            f.prob_below(rp.rate(m - 1).exp_m1() / 1.3)
        };
        let lo = f.prob_below(rp.rate(m).exp_m1() / 1.3);
        assert!((ladder.per_round[m - 1] - (hi - lo)).abs() < 1e-10);
    }
}

#[test]
fn basic_short_two_rounds_product() {
    let c = cfg(Protocol::Basic, 1, Scenario::ShortLc, 0.0, nakagami(2.0));
    let got = pr_m(&c, &PowerPolicy::uniform(1.0, 2), &RatePolicy::fixed_length(0.4, 2), 2, &opts()).unwrap();
    let f = cdf_oracle(2.0, 1.0, 0.4_f64.exp_m1());
    assert!((got - f * (1.0 - f)).abs() < 1e-9);
}

#[test]
fn first_m_limits_and_rtd_uniform() {
    let f = nakagami(2.0);
    let c = cfg(Protocol::Rtd, 2, Scenario::LongLc, 0.0, f);
    let pp = PowerPolicy::uniform(0.5, 3);
    let tiny = pr_first_m(&c, &pp, &RatePolicy::fixed_length(1e-12, 3), 3, &opts()).unwrap();
    assert!(tiny > 1.0 - 1e-9);

    let r = 0.8_f64;
    for m in 1..=3 {
        let got = pr_first_m(&c, &pp, &RatePolicy::fixed_length(r, 3), m, &opts()).unwrap();
        let expect = 1.0 - f.prob_below(r.exp_m1() / (m as f64 * 0.5));
        assert!((got - expect).abs() < 1e-15);
    }
    assert!(pr_first_m(&c, &pp, &RatePolicy::fixed_length(r, 3), 4, &opts()).is_err());
}

#[test]
fn boundary_gain_decodes() {
    // log(1 + 0.5 * 2) = ln 2 exactly at the rate boundary
    let f = FadingDistribution::deterministic(0.5).unwrap();
    for protocol in [Protocol::Basic, Protocol::Rtd, Protocol::InrFixed] {
        for scenario in [Scenario::LongLc, Scenario::ShortLc] {
            let c = cfg(protocol, 2, scenario, 0.0, f);
            for m in 1..=3 {
                let v = pr_first_m(&c, &PowerPolicy::uniform(2.0, 3), &RatePolicy::fixed_length(2f64.ln(), 3), m, &opts()).unwrap();
                assert_eq!(v, 1.0, "{protocol:?} {scenario:?} m={m}");
            }
        }
    }
}

#[test]
fn half_flip_probability_stops_half_at_round_one() {
    for protocol in [Protocol::Basic, Protocol::Rtd, Protocol::InrFixed] {
        let c = cfg(protocol, 2, Scenario::LongLc, 0.5, nakagami(1.0));
        let sd = stop_distribution(&c, &PowerPolicy::uniform(1.0, 3), &RatePolicy::fixed_length(0.9, 3), &opts()).unwrap();
        assert!((sd.pr_a[0] - 0.5).abs() < 1e-15);
    }
}

#[test]
fn noise_free_rtd_outage_telescopes() {
    let f = nakagami(2.0);
    let c = cfg(Protocol::Rtd, 1, Scenario::LongLc, 0.0, f);
    let pp = PowerPolicy::new(vec![0.7, 1.9]);
    let r = 0.6_f64;
    let sd = stop_distribution(&c, &pp, &RatePolicy::fixed_length(r, 2), &opts()).unwrap();
    assert!((sd.outage - f.prob_below(r.exp_m1() / 2.6)).abs() < 1e-15);
}

#[test]
fn outage_forms_agree() {
    for p_b in [0.0, 0.1, 0.35, 0.8] {
        let c = cfg(Protocol::InrFixed, 3, Scenario::LongLc, p_b, nakagami(2.0));
        let sd = stop_distribution(&c, &PowerPolicy::new(vec![0.5, 1.0, 2.0, 0.7]), &RatePolicy::fixed_length(1.2, 4), &opts()).unwrap();
        let direct = 1.0
            - sd.pr_m
                .iter()
                .enumerate()
                .map(|(i, p)| (1.0 - p_b).powi(i as i32) * p)
                .sum::<f64>();
        assert!((sd.outage - direct).abs() < 1e-14);
        assert!(sd.identity_violations(p_b, 1e-9).is_empty());
    }
}

#[test]
fn uniform_power_average_is_exact() {
    for protocol in [Protocol::Basic, Protocol::Rtd, Protocol::InrFixed] {
        let c = cfg(protocol, 3, Scenario::LongLc, 0.2, nakagami(2.0));
        let pp = PowerPolicy::uniform(3.7, 4);
        let rp = RatePolicy::fixed_length(1.0, 4);
        let sd = stop_distribution(&c, &pp, &rp, &opts()).unwrap();
        assert!((avg_power(&sd, &pp, &rp) - 3.7).abs() < 1e-12);
    }
    let c = cfg(Protocol::InrVariable, 2, Scenario::LongLc, 0.2, nakagami(2.0));
    let pp = PowerPolicy::uniform(0.9, 3);
    let rp = RatePolicy::variable(vec![1.0, 0.7, 0.2]);
    let sd = stop_distribution(&c, &pp, &rp, &opts()).unwrap();
    assert!((avg_power(&sd, &pp, &rp) - 0.9).abs() < 1e-12);
}

#[test]
fn open_loop_collapse() {
    let f = nakagami(2.0);
    let c = cfg(Protocol::Rtd, 0, Scenario::LongLc, 0.0, f);
    let r = 0.9_f64;
    let p = 2.0;
    let rep = performance_report(&c, &PowerPolicy::uniform(p, 1), &RatePolicy::fixed_length(r, 1), &opts()).unwrap();
    assert!((rep.eta_lt - open_loop_throughput(&f, r, p)).abs() < 1e-15);
    assert!((rep.eta_lt - r * (1.0 - f.prob_below(r.exp_m1() / p))).abs() < 1e-15);
}

#[test]
fn open_loop_rayleigh_example() {
    let f = nakagami(1.0);
    let t = 1f64.exp_m1();
    let oracle = 1.0 - cdf_oracle(1.0, 1.0, t);
    assert!((open_loop_throughput(&f, 1.0, 1.0) - oracle).abs() < 1e-9);
    assert!((open_loop_throughput(&f, 1.0, 1.0) - (-t * t).exp()).abs() < 1e-14);
    assert!((open_loop_throughput(&f, 1.0, 1e12) - 1.0).abs() < 1e-9);
    assert!(open_loop_throughput(&f, 1e-12, 1.0) < 1e-11);
}

#[test]
fn single_retransmission_sends_one_feedback_bit() {
    for p_b in [0.0, 0.13, 0.5] {
        let c = cfg(Protocol::Rtd, 1, Scenario::ShortLc, p_b, nakagami(2.0));
        let sd = stop_distribution(&c, &PowerPolicy::new(vec![1.0, 2.0]), &RatePolicy::fixed_length(0.7, 2), &opts()).unwrap();
        assert!((feedback_load(&sd) - 1.0).abs() < 1e-15);
        assert!((expected_rounds(&sd) - feedback_load(&sd) - sd.pr_a[1]).abs() < 1e-15);
    }
}

#[test]
fn c_metric_matches_expected_rounds() {
    for protocol in [Protocol::Rtd, Protocol::InrFixed] {
        for p_b in [0.0, 0.07, 0.3, 0.5] {
            let c = cfg(protocol, 3, Scenario::ShortLc, p_b, nakagami(2.0));
            let pp = PowerPolicy::uniform(1.0, 4);
            let rp = RatePolicy::fixed_length(1.0, 4);
            let o = AnalyticOptions {
                integration: ShortLcIntegration {
                    points: 1 << 14,
                    ..Default::default()
                },
                ..Default::default()
            };
            let ladder = decode_ladder(&c, &pp, &rp, &o).unwrap();
            let sd = stop_distribution_from_ladder(&ladder, p_b).unwrap();
            let cm = c_metric_from_ladder(&ladder, p_b);
            assert!((cm - expected_rounds(&sd)).abs() < 1e-9, "{protocol:?} p_b={p_b}");
            if p_b == 0.5 {
                assert!((cm - (1.0 + 0.5 + 0.25 + 0.125)).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn noise_free_delay_limited_closed_forms() {
    let f = nakagami(2.0);
    let pp = PowerPolicy::new(vec![0.4, 1.1, 2.5]);
    let r = 1.3_f64;
    let rp = RatePolicy::fixed_length(r, 3);
    let c = cfg(Protocol::Rtd, 2, Scenario::LongLc, 0.0, f);
    let sd = stop_distribution(&c, &pp, &rp, &opts()).unwrap();
    assert!((delay_limited_throughput(&sd, &rp) - noise_free_delay_limited_rtd(&f, r, &pp)).abs() < 1e-12);

    let rp = RatePolicy::variable(vec![1.3, 0.8, 0.5]);
    let c = cfg(Protocol::InrVariable, 2, Scenario::LongLc, 0.0, f);
    let sd = stop_distribution(&c, &pp, &rp, &opts()).unwrap();
    let closed = noise_free_delay_limited_inr(&f, &rp, &pp, &DeltaSolverSettings::default()).unwrap();
    assert!((delay_limited_throughput(&sd, &rp) - closed).abs() < 1e-12);
}

#[test]
fn fixed_length_paths_agree() {
    let f = nakagami(2.0);
    let pp = PowerPolicy::new(vec![0.4, 1.1, 2.5]);
    let r = 0.9_f64;
    let fixed = RatePolicy::fixed_length(r, 3);
    let general = RatePolicy::variable(fixed.equiv_rates().to_vec());
    for p_b in [0.0, 0.2] {
        let cf = cfg(Protocol::InrFixed, 2, Scenario::LongLc, p_b, f);
        let cv = cfg(Protocol::InrVariable, 2, Scenario::LongLc, p_b, f);
        let sf = stop_distribution(&cf, &pp, &fixed, &opts()).unwrap();
        let sv = stop_distribution(&cv, &pp, &general, &opts()).unwrap();
        for (a, b) in sf.pr_a.iter().zip(&sv.pr_a) {
            assert!((a - b).abs() < 1e-12);
        }
        let a = long_term_throughput(&sf, &fixed);
        let b = fixed_length_long_term_throughput(&sf, r);
        assert!((a - b).abs() <= 1e-13 * a);
        let a = avg_power(&sf, &pp, &fixed);
        let b = fixed_length_avg_power(&sf, &pp);
        assert!((a - b).abs() <= 1e-13 * a);
    }
}

#[test]
fn inr_dominates_rtd_fixed_length() {
    for scenario in [Scenario::LongLc, Scenario::ShortLc] {
        for p_b in [0.0, 0.05, 0.2] {
            let pp = PowerPolicy::new(vec![1.0, 0.6, 2.0]);
            let rp = RatePolicy::fixed_length(1.5, 3);
            let rtd = performance_report(&cfg(Protocol::Rtd, 2, scenario, p_b, nakagami(2.0)), &pp, &rp, &opts()).unwrap();
            let inr = performance_report(&cfg(Protocol::InrFixed, 2, scenario, p_b, nakagami(2.0)), &pp, &rp, &opts()).unwrap();
            assert!(inr.outage <= rtd.outage + 1e-12);
            assert!(inr.eta_lt >= rtd.eta_lt - 1e-12);
        }
    }
}

#[test]
fn basic_ladder_ignores_weaker_later_rounds() {
    let f = nakagami(2.0);
    let c = cfg(Protocol::Basic, 2, Scenario::LongLc, 0.0, f);
    let ladder = decode_ladder(&c, &PowerPolicy::new(vec![2.0, 1.0, 3.0]), &RatePolicy::fixed_length(1.0, 3), &opts()).unwrap();
    assert_eq!(ladder.per_round[1], 0.0);
    assert!(ladder.per_round[2] > 0.0);
}

#[test]
fn invalid_inputs_are_rejected() {
    let c = cfg(Protocol::InrVariable, 1, Scenario::ShortLc, 0.0, nakagami(2.0));
    let err = stop_distribution(&c, &PowerPolicy::uniform(1.0, 2), &RatePolicy::variable(vec![0.4, 0.2]), &opts()).unwrap_err();
    assert!(matches!(err, AnalyticError::Invalid(_)));
}

#[test]
fn short_lc_doubling_is_stable() {
    let pp = PowerPolicy::new(vec![1.0, 0.5, 2.0]);
    let rp = RatePolicy::fixed_length(1.2, 3);
    for protocol in [Protocol::Rtd, Protocol::InrFixed] {
        let c = cfg(protocol, 2, Scenario::ShortLc, 0.0, nakagami(2.0));
        let at = |points| {
            let o = AnalyticOptions {
                integration: ShortLcIntegration {
                    points,
                    ..Default::default()
                },
                ..Default::default()
            };
            decode_ladder(&c, &pp, &rp, &o).unwrap()
        };
        let a = at(1 << 15);
        let b = at(1 << 16);
        for m in 0..3 {
            let err = a.std_error[m].max(b.std_error[m]);
            assert!((a.not_decoded[m] - b.not_decoded[m]).abs() <= 3.0 * err + 1e-15, "m={m}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn log_sum_superadditive(a in 0.0..1e3f64, b in 0.0..1e3f64, x in 0.0..1e3f64, y in 0.0..1e3f64) {
        let lhs = (a * x).ln_1p() + (b * y).ln_1p();
        let rhs = (a * x + b * y).ln_1p();
        prop_assert!(lhs >= rhs - 1e-12 * rhs.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn delta_residual(
        powers in prop::collection::vec(0.01..100.0f64, 1..6),
        r1 in 0.05..5.0f64,
        lengths in prop::collection::vec(0.1..4.0f64, 5),
    ) {
        let k = powers.len();
        let rp = RatePolicy::from_relative_lengths(r1, &lengths[..k - 1]);
        let pp = PowerPolicy::new(powers);
        for m in 1..=k {
            let d = delta_m(&rp, &pp, m, &DeltaSolverSettings::default()).unwrap();
            prop_assert!((theta(&rp, &pp, m, d) - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn telescoping_under_uniform_power(
        p in 0.01..100.0f64,
        r in 0.05..4.0f64,
        p_b in 0.0..1.0f64,
        m_max in 0usize..4,
    ) {
        let c = cfg(Protocol::Rtd, m_max, Scenario::LongLc, p_b, nakagami(2.0));
        let pp = PowerPolicy::uniform(p, m_max + 1);
        let rp = RatePolicy::fixed_length(r, m_max + 1);
        let sd = stop_distribution(&c, &pp, &rp, &opts()).unwrap();
        let lhs = avg_power(&sd, &pp, &rp) * mean_inverse_rate(&sd, &rp);
        let rhs = p * mean_inverse_rate(&sd, &rp);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
    }
}
