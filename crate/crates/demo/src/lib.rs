//! Browser bindings for the interactive demo page.
//!
//! The computations live in plain functions so they can be tested natively;
//! the `#[wasm_bindgen]` wrappers only convert errors.

use noisy_arq::analytic::{self, AnalyticOptions, IntegrationMethod, ShortLcIntegration};
use noisy_arq::montecarlo;
use noisy_arq::optimizer::{self, Objective, OptProblem, PowerSearch};
use noisy_arq::{db_to_linear, ArqConfig, FadingDistribution, PowerPolicy, Protocol, RatePolicy, Scenario};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn protocol(name: &str) -> Result<Protocol, String> {
    match name {
        "basic" => Ok(Protocol::Basic),
        "rtd" => Ok(Protocol::Rtd),
        "inr" => Ok(Protocol::InrFixed),
        "inr_variable" => Ok(Protocol::InrVariable),
        _ => Err(format!("unknown protocol {name:?}")),
    }
}

fn config(proto: &str, short: bool, n_shape: f64, max_retx: usize, p_b: f64) -> Result<ArqConfig, String> {
    if max_retx > optimizer::MAX_RETX_LIMIT {
        return Err("at most 4 retransmissions".into());
    }
    let fading = FadingDistribution::nakagami(n_shape, 1.0).map_err(|e| e.to_string())?;
    let scenario = if short { Scenario::ShortLc } else { Scenario::LongLc };
    Ok(ArqConfig::new(protocol(proto)?, max_retx, scenario, p_b, fading))
}

fn rates(c: &ArqConfig, rate: f64) -> RatePolicy {
    match c.protocol {
        Protocol::InrVariable => RatePolicy::matched_incremental(rate, c.rounds()),
        _ => RatePolicy::fixed_length(rate, c.rounds()),
    }
}

/// Nested quadrature is exact enough and fast for up to three rounds; beyond
/// that a small lattice keeps the page responsive.
fn options(rounds: usize) -> AnalyticOptions {
    let mut o = AnalyticOptions::default();
    o.integration = if rounds <= 3 {
        ShortLcIntegration {
            method: IntegrationMethod::NestedQuadrature,
            ..Default::default()
        }
    } else {
        ShortLcIntegration {
            points: 1 << 14,
            ..Default::default()
        }
    };
    o
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Rows of `[p_b, eta_lt, eta_dl, outage]` at uniform power, flattened.
#[allow(clippy::too_many_arguments)]
pub fn throughput_curve(
    proto: &str,
    short: bool,
    n_shape: f64,
    snr_db: f64,
    rate: f64,
    max_retx: usize,
    pb_max: f64,
    points: usize,
) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for p_b in linspace(0.0, pb_max, points) {
        let c = config(proto, short, n_shape, max_retx, p_b)?;
        let pp = PowerPolicy::uniform(db_to_linear(snr_db), c.rounds());
        let r = analytic::performance_report(&c, &pp, &rates(&c, rate), &options(c.rounds())).map_err(|e| e.to_string())?;
        out.extend([p_b, r.eta_lt, r.eta_dl, r.outage]);
    }
    Ok(out)
}

/// Rows of `[snr_db, uniform outage, optimized outage]` at fixed rate,
/// flattened. The optimized policy keeps the same average power.
#[allow(clippy::too_many_arguments)]
pub fn outage_curve(
    proto: &str,
    short: bool,
    n_shape: f64,
    rate: f64,
    max_retx: usize,
    p_b: f64,
    snr_lo: f64,
    snr_hi: f64,
    points: usize,
) -> Result<Vec<f64>, String> {
    let c = config(proto, short, n_shape, max_retx, p_b)?;
    let mut out = Vec::new();
    for snr in linspace(snr_lo, snr_hi, points) {
        let p = db_to_linear(snr);
        let rp = rates(&c, rate);
        let uniform = analytic::performance_report(&c, &PowerPolicy::uniform(p, c.rounds()), &rp, &options(c.rounds()))
            .map_err(|e| e.to_string())?
            .outage;
        let mut prob = OptProblem::new(Objective::MinOutage, c, p)
            .with_fixed_rate(rate)
            .with_power_search(PowerSearch::PerRound)
            .with_grid(8, true);
        if c.protocol == Protocol::InrVariable {
            prob.warm_start.push((PowerPolicy::uniform(p, c.rounds()), rp));
        }
        let opt = optimizer::solve(&prob).map_err(|e| e.to_string())?;
        out.extend([snr, uniform, opt.objective]);
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub quantity: &'static str,
    pub analytic: f64,
    pub simulated: f64,
    pub std_error: f64,
}

/// Closed form against a fresh simulation of `packets` packets.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    proto: &str,
    short: bool,
    n_shape: f64,
    snr_db: f64,
    rate: f64,
    max_retx: usize,
    p_b: f64,
    packets: u64,
    seed: u64,
) -> Result<Vec<Comparison>, String> {
    let c = config(proto, short, n_shape, max_retx, p_b)?;
    let pp = PowerPolicy::uniform(db_to_linear(snr_db), c.rounds());
    let rp = rates(&c, rate);
    let a = analytic::performance_report(&c, &pp, &rp, &options(c.rounds())).map_err(|e| e.to_string())?;
    let m = montecarlo::estimate_report(&c, &pp, &rp, packets, seed).map_err(|e| e.to_string())?;
    Ok(vec![
        Comparison { quantity: "eta_lt", analytic: a.eta_lt, simulated: m.eta_lt.mean, std_error: m.eta_lt.std_error },
        Comparison { quantity: "eta_dl", analytic: a.eta_dl, simulated: m.eta_dl.mean, std_error: m.eta_dl.std_error },
        Comparison { quantity: "outage", analytic: a.outage, simulated: m.outage.mean, std_error: m.outage.std_error },
        Comparison {
            quantity: "fb_load",
            analytic: a.feedback_load,
            simulated: m.feedback_load.mean,
            std_error: m.feedback_load.std_error,
        },
    ])
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn throughput_vs_pb(
    proto: &str,
    short: bool,
    n_shape: f64,
    snr_db: f64,
    rate: f64,
    max_retx: usize,
    pb_max: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    throughput_curve(proto, short, n_shape, snr_db, rate, max_retx, pb_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn outage_vs_snr(
    proto: &str,
    short: bool,
    n_shape: f64,
    rate: f64,
    max_retx: usize,
    p_b: f64,
    snr_lo: f64,
    snr_hi: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    outage_curve(proto, short, n_shape, rate, max_retx, p_b, snr_lo, snr_hi, points).map_err(|e| JsError::new(&e))
}

/// JSON array of `{quantity, analytic, simulated, std_error}`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn mc_check(
    proto: &str,
    short: bool,
    n_shape: f64,
    snr_db: f64,
    rate: f64,
    max_retx: usize,
    p_b: f64,
    packets: u32,
    seed: u32,
) -> Result<String, JsError> {
    let rows = simulate(proto, short, n_shape, snr_db, rate, max_retx, p_b, u64::from(packets), u64::from(seed))
        .map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&rows).map_err(|e| JsError::new(&e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn throughput_falls_with_feedback_noise() {
        let v = throughput_curve("rtd", false, 2.0, 5.0, 0.8, 1, 0.3, 4).unwrap();
        assert_eq!(v.len(), 16);
        let eta: Vec<f64> = v.chunks(4).map(|r| r[1]).collect();
        assert!(eta.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn optimized_outage_not_worse() {
        let v = outage_curve("inr", false, 2.0, 1.0, 1, 0.05, 0.0, 10.0, 3).unwrap();
        for r in v.chunks(3) {
            assert!(r[2] <= r[1], "{r:?}");
        }
    }

    #[test]
    fn simulation_matches() {
        for r in simulate("inr", true, 2.0, 3.0, 0.7, 2, 0.1, 50_000, 3).unwrap() {
            let mut se = r.std_error;
            if r.quantity == "outage" {
                se = se.max((r.analytic * (1.0 - r.analytic) / 50_000.0).sqrt());
            }
            let tol = 4.0 * se + 1e-9;
            assert!((r.analytic - r.simulated).abs() <= tol, "{r:?}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(throughput_curve("arq", false, 2.0, 0.0, 1.0, 1, 0.3, 3).is_err());
        assert!(simulate("rtd", false, 2.0, 0.0, 1.0, 1, 0.1, 10, 1).is_err());
    }
}
