//! Monte Carlo against closed form on a fixed grid of small systems.

use noisy_arq::analytic;
use noisy_arq::montecarlo::{self, Estimate, McReport};
use noisy_arq::{ArqConfig, FadingDistribution, PowerPolicy, Protocol, RatePolicy, Scenario, StopDistribution};

use crate::cell::analytic_options;
use crate::CliError;

pub const Z_LIMIT: f64 = 4.0;
const REL_FLOOR: f64 = 1e-9;

/// Simulated standard error, floored for proportions by the binomial error
/// at the closed-form value so that a lucky all-or-nothing sample is not
/// treated as exact.
pub fn tolerance(analytic: f64, est: &Estimate, n: u64, proportion: bool) -> f64 {
    let mut se = est.std_error;
    if proportion {
        se = se.max((analytic * (1.0 - analytic)).max(0.0).sqrt() / (n as f64).sqrt());
    }
    Z_LIMIT * se + REL_FLOOR * analytic.abs().max(1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub quantity: String,
    pub analytic: f64,
    pub simulated: f64,
    /// Tolerance divided by `Z_LIMIT`.
    pub std_error: f64,
}

impl Mismatch {
    pub fn z(&self) -> f64 {
        (self.simulated - self.analytic).abs() / self.std_error.max(f64::MIN_POSITIVE)
    }
}

/// Every closed-form quantity against its estimate; returns the mismatches
/// and the largest standardized error seen.
pub fn compare(sd: &StopDistribution, report: &noisy_arq::PerformanceReport, mc: &McReport) -> (Vec<Mismatch>, f64) {
    let n = mc.n_packets;
    let mut pairs: Vec<(String, f64, &Estimate, bool)> = vec![
        ("outage".into(), report.outage, &mc.outage, true),
        ("eta_lt".into(), report.eta_lt, &mc.eta_lt, false),
        ("eta_dl".into(), report.eta_dl, &mc.eta_dl, false),
        ("avg_power".into(), report.avg_power, &mc.avg_power, false),
        ("fb_load".into(), report.feedback_load, &mc.feedback_load, false),
        ("exp_rounds".into(), report.expected_rounds, &mc.expected_rounds, false),
    ];
    for m in 0..sd.rounds() {
        pairs.push((format!("Pr(A_{})", m + 1), sd.pr_a[m], &mc.pr_a[m], true));
        pairs.push((format!("Pr(S_{})", m + 1), sd.pr_s[m], &mc.pr_s[m], true));
    }
    let mut bad = Vec::new();
    let mut worst: f64 = 0.0;
    for (q, a, est, prop) in pairs {
        let tol = tolerance(a, est, n, prop);
        let m = Mismatch {
            quantity: q,
            analytic: a,
            simulated: est.mean,
            std_error: tol / Z_LIMIT,
        };
        worst = worst.max(m.z());
        if (est.mean - a).abs() > tol {
            bad.push(m);
        }
    }
    (bad, worst)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyCell {
    pub config: ArqConfig,
    pub snr_db: f64,
    pub mismatches: Vec<Mismatch>,
    pub worst_z: f64,
    pub evaluation: analytic::Evaluation,
    pub mc: McReport,
}

pub const RATE: f64 = 0.4;

/// Basic, RTD and fixed-length INR over both coherence regimes, `M` in
/// {1, 2}, `p_b` in {0, 0.05, 0.2}, 0/5/10 dB and Nakagami N in {1, 2}.
pub fn grid() -> Vec<(ArqConfig, f64)> {
    let mut out = Vec::new();
    for protocol in [Protocol::Basic, Protocol::Rtd, Protocol::InrFixed] {
        for scenario in [Scenario::LongLc, Scenario::ShortLc] {
            for m in [1, 2] {
                for p_b in [0.0, 0.05, 0.2] {
                    for snr_db in [0.0, 5.0, 10.0] {
                        for n in [1.0, 2.0] {
                            let f = FadingDistribution::nakagami(n, 1.0).expect("valid shape");
                            out.push((ArqConfig::new(protocol, m, scenario, p_b, f), snr_db));
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn verify_cell(config: &ArqConfig, snr_db: f64, packets: u64, seed: u64) -> Result<VerifyCell, CliError> {
    let err = |e: String| CliError::Cell {
        cell: format!("{config:?} snr_db={snr_db}"),
        message: e,
    };
    let rounds = config.rounds();
    let pp = PowerPolicy::uniform(noisy_arq::db_to_linear(snr_db), rounds);
    let rp = RatePolicy::fixed_length(RATE, rounds);
    let ev = analytic::evaluate(config, &pp, &rp, &analytic_options(rounds, seed)).map_err(|e| err(e.to_string()))?;
    let mc = montecarlo::estimate_report(config, &pp, &rp, packets, seed).map_err(|e| err(e.to_string()))?;
    let (mismatches, worst_z) = compare(&ev.stop, &ev.report, &mc);
    Ok(VerifyCell {
        config: *config,
        snr_db,
        mismatches,
        worst_z,
        evaluation: ev,
        mc,
    })
}

/// Runs the whole grid. Cell seeds are derived from `seed` and the index.
pub fn verify(packets: u64, seed: u64) -> Result<Vec<VerifyCell>, CliError> {
    grid()
        .iter()
        .enumerate()
        .map(|(i, (c, snr))| verify_cell(c, *snr, packets, seed.wrapping_add((i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))))
        .collect()
}
