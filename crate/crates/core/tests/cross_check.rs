//! Closed forms against the packet simulator for policies outside the
//! uniform fixed-length grid, and optimizer output replayed by simulation.

use noisy_arq::analytic::{self, AnalyticOptions, IntegrationMethod, ShortLcIntegration};
use noisy_arq::montecarlo::{estimate_report, Estimate};
use noisy_arq::optimizer::{solve, Objective, OptProblem};
use noisy_arq::{ArqConfig, FadingDistribution, PerformanceReport, PowerPolicy, Protocol, RatePolicy, Scenario};

const PACKETS: u64 = 400_000;

/// Proportions use the binomial error at the closed-form value as a floor,
/// so rare events with no simulated hits are judged fairly.
fn close(name: &str, analytic: f64, est: &Estimate, proportion: bool) {
    let mut se = est.std_error;
    if proportion {
        se = se.max((analytic * (1.0 - analytic) / PACKETS as f64).sqrt());
    }
    let tol = 4.0 * se + 1e-9 * analytic.abs().max(1.0);
    assert!(
        (analytic - est.mean).abs() <= tol,
        "{name}: analytic {analytic} vs simulated {} (tol {tol})",
        est.mean
    );
}

fn check(config: &ArqConfig, pp: &PowerPolicy, rp: &RatePolicy, opts: &AnalyticOptions, seed: u64) -> PerformanceReport {
    let ev = analytic::evaluate(config, pp, rp, opts).unwrap();
    let mc = estimate_report(config, pp, rp, PACKETS, seed).unwrap();
    close("outage", ev.report.outage, &mc.outage, true);
    close("eta_lt", ev.report.eta_lt, &mc.eta_lt, false);
    close("eta_dl", ev.report.eta_dl, &mc.eta_dl, false);
    close("avg_power", ev.report.avg_power, &mc.avg_power, false);
    close("fb_load", ev.report.feedback_load, &mc.feedback_load, false);
    for m in 0..config.rounds() {
        close("Pr(A_m)", ev.stop.pr_a[m], &mc.pr_a[m], true);
        close("Pr(S_m)", ev.stop.pr_s[m], &mc.pr_s[m], true);
    }
    ev.report
}

fn nested() -> AnalyticOptions {
    AnalyticOptions {
        integration: ShortLcIntegration {
            method: IntegrationMethod::NestedQuadrature,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn variable_length_inr_with_unequal_powers() {
    let f = FadingDistribution::nakagami(2.0, 1.0).unwrap();
    let c = ArqConfig::new(Protocol::InrVariable, 2, Scenario::LongLc, 0.1, f);
    let pp = PowerPolicy::new(vec![0.8, 1.5, 2.5]);
    let rp = RatePolicy::from_relative_lengths(1.2, &[0.5, 1.7]);
    check(&c, &pp, &rp, &AnalyticOptions::default(), 11);
}

#[test]
fn short_coherence_with_unequal_powers() {
    let f = FadingDistribution::nakagami(1.0, 2.0).unwrap();
    let pp = PowerPolicy::new(vec![0.5, 2.0, 1.0]);
    let rp = RatePolicy::fixed_length(0.9, 3);
    for protocol in [Protocol::Basic, Protocol::Rtd, Protocol::InrFixed] {
        let c = ArqConfig::new(protocol, 2, Scenario::ShortLc, 0.15, f);
        check(&c, &pp, &rp, &nested(), 12);
    }
}

#[test]
fn four_retransmissions_quasi_random() {
    let f = FadingDistribution::nakagami(2.0, 1.0).unwrap();
    let c = ArqConfig::new(Protocol::InrFixed, 4, Scenario::ShortLc, 0.05, f);
    let pp = PowerPolicy::uniform(0.5, 5);
    let rp = RatePolicy::fixed_length(1.5, 5);
    check(&c, &pp, &rp, &AnalyticOptions::default(), 13);
}

#[test]
fn optimized_policy_replays_in_simulation() {
    let f = FadingDistribution::nakagami(2.0, 1.0).unwrap();
    let c = ArqConfig::new(Protocol::Rtd, 1, Scenario::LongLc, 0.1, f);
    let r = solve(&OptProblem::new(Objective::MaxLongTerm, c, 2.0).with_grid(10, true)).unwrap();
    let replay = check(&c, &r.power, &r.rates, &AnalyticOptions::default(), 14);
    assert!((replay.eta_lt - r.objective).abs() < 1e-12);
    assert!(r.avg_power <= 2.0 * (1.0 + 1e-12));
}

#[test]
fn matched_ladder_gives_identical_stop_laws() {
    let f = FadingDistribution::nakagami(2.0, 1.0).unwrap();
    let pp = PowerPolicy::uniform(3.0, 4);
    let opts = AnalyticOptions::default();
    let rtd = ArqConfig::new(Protocol::Rtd, 3, Scenario::LongLc, 0.2, f);
    let inr = rtd.with_protocol(Protocol::InrVariable);
    let a = analytic::evaluate(&rtd, &pp, &RatePolicy::fixed_length(1.0, 4), &opts).unwrap();
    let b = analytic::evaluate(&inr, &pp, &RatePolicy::matched_incremental(1.0, 4), &opts).unwrap();
    for (x, y) in a.stop.pr_a.iter().zip(&b.stop.pr_a) {
        assert!((x - y).abs() <= 1e-9);
    }
    assert!((a.report.outage - b.report.outage).abs() <= 1e-9);
    assert!(b.report.eta_lt >= a.report.eta_lt);
}
