//! Closed-form performance of ARQ with noisy feedback.
//!
//! Everything is built from the noise-free non-decoding ladder
//! `alpha_m = Pr(not decodable by round m)`, which depends on the protocol,
//! the fading scenario and the power and rate policies but not on `p_b`.
//! Feedback noise enters only when the ladder is turned into a stop
//! distribution.

mod integration;
mod threshold;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use integration::{non_decoding, Combining, IntegrationMethod, NonDecoding, ShortLcIntegration, MIN_QMC_POINTS, QMC_SHIFTS};
pub use threshold::{delta_m, fixed_length_threshold, theta, DeltaSolverSettings};

use crate::fading::FadingDistribution;
use crate::model::{self, ArqConfig, PerformanceReport, PowerPolicy, Protocol, RatePolicy, Scenario, StopDistribution, Violation};

/// Largest deviation of `sum Pr(A_m)` from one that is treated as rounding.
pub const MASS_RENORMALIZE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("invalid configuration: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("round {m} outside 1..={rounds}")]
    RoundOutOfRange { m: usize, rounds: usize },
    #[error("threshold solver failed after {iterations} iterations: bracket [{lo}, {hi}], residual {residual}")]
    NoConvergence {
        iterations: usize,
        lo: f64,
        hi: f64,
        residual: f64,
    },
    #[error("stop probabilities sum to {0}")]
    MassMismatch(f64),
    #[error("integration: {0}")]
    Integration(String),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalyticOptions {
    pub delta: DeltaSolverSettings,
    pub integration: ShortLcIntegration,
}

/// Noise-free decoding ladder. Index `m - 1` holds round `m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeLadder {
    /// `Pr(m)`: decodable at round `m` and not before.
    pub per_round: Vec<f64>,
    /// `alpha_m = 1 - Pr(1..m)`.
    pub not_decoded: Vec<f64>,
    /// Standard error of `not_decoded`, nonzero only for quasi-random integration.
    pub std_error: Vec<f64>,
}

impl DecodeLadder {
    pub fn rounds(&self) -> usize {
        self.per_round.len()
    }

    /// `Pr(1..m)`.
    pub fn first(&self, m: usize) -> f64 {
        1.0 - self.not_decoded[m - 1]
    }

    fn from_alpha(alpha: Vec<f64>, std_error: Vec<f64>) -> Self {
        let per_round = alpha
            .iter()
            .enumerate()
            .map(|(i, a)| if i == 0 { 1.0 - a } else { alpha[i - 1] - a })
            .collect();
        Self {
            per_round,
            not_decoded: alpha,
            std_error,
        }
    }
}

fn check(config: &ArqConfig, pp: &PowerPolicy, rp: &RatePolicy) -> Result<(), AnalyticError> {
    if let Err(v) = model::validate(config, pp, rp) {
        let structural: Vec<_> = v.into_iter().filter(|x| x.code.is_structural()).collect();
        if !structural.is_empty() {
            return Err(AnalyticError::Invalid(structural));
        }
    }
    Ok(())
}

/// Decoding thresholds on the gain for a channel that is fixed over the packet:
/// decodable by round `m` iff `g >= t_m`.
pub fn long_lc_thresholds(
    protocol: Protocol,
    pp: &PowerPolicy,
    rp: &RatePolicy,
    settings: &DeltaSolverSettings,
) -> Result<Vec<f64>, AnalyticError> {
    let rounds = pp.len();
    let c = rp.initial_rate().exp_m1();
    match protocol {
        Protocol::Basic => {
            // a fresh copy each round: only the strongest one so far matters
            let mut best = 0.0_f64;
            Ok(pp
                .powers()
                .iter()
                .map(|&p| {
                    best = best.max(p);
                    c / best
                })
                .collect())
        }
        Protocol::Rtd => {
            let mut total = 0.0;
            Ok(pp
                .powers()
                .iter()
                .map(|&p| {
                    total += p;
                    c / total
                })
                .collect())
        }
        Protocol::InrFixed => (1..=rounds)
            .map(|m| fixed_length_threshold(&pp.powers()[..m], rp.initial_rate(), settings))
            .collect(),
        Protocol::InrVariable => (1..=rounds).map(|m| delta_m(rp, pp, m, settings)).collect(),
    }
}

/// The noise-free ladder for a validated configuration.
pub fn decode_ladder(
    config: &ArqConfig,
    pp: &PowerPolicy,
    rp: &RatePolicy,
    opts: &AnalyticOptions,
) -> Result<DecodeLadder, AnalyticError> {
    check(config, pp, rp)?;
    let fading = &config.fading;
    let rounds = config.rounds();
    match config.scenario {
        Scenario::LongLc => {
            let t = long_lc_thresholds(config.protocol, pp, rp, &opts.delta)?;
            let alpha = t.iter().map(|&x| fading.prob_below(x)).collect();
            Ok(DecodeLadder::from_alpha(alpha, vec![0.0; rounds]))
        }
        Scenario::ShortLc => {
            let rate = rp.initial_rate();
            let combining = match config.protocol {
                Protocol::Basic => {
                    let c = rate.exp_m1();
                    let mut alpha = Vec::with_capacity(rounds);
                    let mut prod = 1.0;
                    for &p in pp.powers() {
                        prod *= fading.prob_below(c / p);
                        alpha.push(prod);
                    }
                    return Ok(DecodeLadder::from_alpha(alpha, vec![0.0; rounds]));
                }
                Protocol::Rtd => Combining::Repetition,
                Protocol::InrFixed => Combining::Incremental,
                Protocol::InrVariable => unreachable!("rejected by validation"),
            };
            let nd = non_decoding(combining, fading, pp.powers(), rate, &opts.integration)?;
            Ok(DecodeLadder::from_alpha(nd.alpha, nd.std_error))
        }
    }
}

/// `Pr(m)`, noise-free probability of first becoming decodable at round `m`.
pub fn pr_m(config: &ArqConfig, pp: &PowerPolicy, rp: &RatePolicy, m: usize, opts: &AnalyticOptions) -> Result<f64, AnalyticError> {
    in_range(m, config.rounds())?;
    Ok(decode_ladder(config, pp, rp, opts)?.per_round[m - 1])
}

/// `Pr(1..m)`.
pub fn pr_first_m(
    config: &ArqConfig,
    pp: &PowerPolicy,
    rp: &RatePolicy,
    m: usize,
    opts: &AnalyticOptions,
) -> Result<f64, AnalyticError> {
    in_range(m, config.rounds())?;
    Ok(decode_ladder(config, pp, rp, opts)?.first(m))
}

fn in_range(m: usize, rounds: usize) -> Result<(), AnalyticError> {
    if m == 0 || m > rounds {
        Err(AnalyticError::RoundOutOfRange { m, rounds })
    } else {
        Ok(())
    }
}

/// Stop distribution under feedback flips with probability `p_b`.
///
/// A packet stops at round `m <= M` either when it is decodable and the ACK
/// survives, or when it is not decodable and a NACK is flipped into an ACK.
/// The last round always stops.
pub fn stop_distribution_from_ladder(ladder: &DecodeLadder, p_b: f64) -> Result<StopDistribution, AnalyticError> {
    let k = ladder.rounds();
    let m_max = k - 1;
    let p = p_b;
    let q = 1.0 - p;
    let pr = &ladder.per_round;
    let alpha = &ladder.not_decoded;

    let mut pr_a = Vec::with_capacity(k);
    let mut pr_s = Vec::with_capacity(k);
    for m in 1..=k {
        let last = m == k;
        let mut s = 0.0;
        for n in 1..=m {
            // decodable at n, then every ACK at rounds n..m-1 flips, and round m ends it
            let q_pow = if last { n - 1 } else { n };
            s += pr[n - 1] * q.powi(q_pow as i32) * p.powi((m - n) as i32);
        }
        let false_ack = if last {
            alpha[m - 1] * q.powi(m_max as i32)
        } else {
            alpha[m - 1] * q.powi(m as i32 - 1) * p
        };
        pr_s.push(s);
        pr_a.push(s + false_ack);
    }

    let total: f64 = pr_a.iter().sum();
    if (total - 1.0).abs() > MASS_RENORMALIZE_TOL || !total.is_finite() {
        return Err(AnalyticError::MassMismatch(total));
    }
    for a in &mut pr_a {
        *a /= total;
    }

    // equivalent to 1 - sum (1-p)^(m-1) Pr(m), summed without cancellation
    let mut outage = q.powi(m_max as i32) * alpha[k - 1];
    for m in 1..=m_max {
        outage += p * q.powi(m as i32 - 1) * alpha[m - 1];
    }

    Ok(StopDistribution {
        pr_m: pr.clone(),
        pr_a,
        pr_s,
        outage,
    })
}

pub fn stop_distribution(
    config: &ArqConfig,
    pp: &PowerPolicy,
    rp: &RatePolicy,
    opts: &AnalyticOptions,
) -> Result<StopDistribution, AnalyticError> {
    let ladder = decode_ladder(config, pp, rp, opts)?;
    stop_distribution_from_ladder(&ladder, config.p_b)
}

/// Channel uses per information nat, up to the common factor.
fn mean_inverse_rate(sd: &StopDistribution, rp: &RatePolicy) -> f64 {
    sd.pr_a.iter().enumerate().map(|(i, a)| a * rp.inv_rate(i + 1)).sum()
}

/// Long-term throughput in nats per channel use.
pub fn long_term_throughput(sd: &StopDistribution, rp: &RatePolicy) -> f64 {
    (1.0 - sd.outage) / mean_inverse_rate(sd, rp)
}

/// Long-term throughput for equal-length rounds at rate `rate`.
pub fn fixed_length_long_term_throughput(sd: &StopDistribution, rate: f64) -> f64 {
    let rounds: f64 = sd.pr_a.iter().enumerate().map(|(i, a)| (i + 1) as f64 * a).sum();
    rate * (1.0 - sd.outage) / rounds
}

/// Average transmit power per channel use.
pub fn avg_power(sd: &StopDistribution, pp: &PowerPolicy, rp: &RatePolicy) -> f64 {
    let k = sd.rounds();
    let mut tail = 0.0;
    let mut energy = 0.0;
    for m in (1..=k).rev() {
        tail += sd.pr_a[m - 1];
        energy += pp.power(m) * rp.inv_increment(m) * tail;
    }
    energy / mean_inverse_rate(sd, rp)
}

pub fn fixed_length_avg_power(sd: &StopDistribution, pp: &PowerPolicy) -> f64 {
    let k = sd.rounds();
    let mut tail = 0.0;
    let mut energy = 0.0;
    for m in (1..=k).rev() {
        tail += sd.pr_a[m - 1];
        energy += pp.power(m) * tail;
    }
    energy / expected_rounds(sd)
}

/// Expected information delivered per packet, normalized by the first-round length.
pub fn delay_limited_throughput(sd: &StopDistribution, rp: &RatePolicy) -> f64 {
    sd.pr_s.iter().enumerate().map(|(i, s)| rp.rate(i + 1) * s).sum()
}

fn head_rounds(sd: &StopDistribution) -> f64 {
    let k = sd.rounds();
    sd.pr_a[..k - 1].iter().enumerate().map(|(i, a)| (i + 1) as f64 * a).sum()
}

/// Expected feedback bits per packet; the last round sends none.
pub fn feedback_load(sd: &StopDistribution) -> f64 {
    let k = sd.rounds();
    head_rounds(sd) + (k - 1) as f64 * sd.pr_a[k - 1]
}

pub fn expected_rounds(sd: &StopDistribution) -> f64 {
    let k = sd.rounds();
    head_rounds(sd) + k as f64 * sd.pr_a[k - 1]
}

/// `sum_{j=0}^{n} p^j`.
fn geometric(p: f64, n: usize) -> f64 {
    (0..=n).map(|j| p.powi(j as i32)).sum()
}

/// The sum of `Pr(A_m) / R^(m)` for fixed-length rounds in units of `1/R`,
/// written in terms of the ladder: the expected rounds per packet.
pub fn c_metric_from_ladder(ladder: &DecodeLadder, p_b: f64) -> f64 {
    let k = ladder.rounds();
    let m_max = k - 1;
    let p = p_b;
    let q = 1.0 - p;
    let tail: f64 = (1..=m_max)
        .map(|m| q.powi(m as i32 - 1) * geometric(p, m_max - m) * ladder.not_decoded[m - 1])
        .sum();
    geometric(p, m_max) + (1.0 - 2.0 * p) * tail
}

pub fn c_metric(config: &ArqConfig, pp: &PowerPolicy, rp: &RatePolicy, opts: &AnalyticOptions) -> Result<f64, AnalyticError> {
    Ok(c_metric_from_ladder(&decode_ladder(config, pp, rp, opts)?, config.p_b))
}

/// Single-shot transmission at rate `rate` and power `power`.
pub fn open_loop_throughput(fading: &FadingDistribution, rate: f64, power: f64) -> f64 {
    rate * fading.prob_at_least(rate.exp_m1() / power)
}

/// Noise-free delay-limited throughput of repetition combining with a fixed
/// channel: `R sum_m (1/m) Pr(m)`.
pub fn noise_free_delay_limited_rtd(fading: &FadingDistribution, rate: f64, pp: &PowerPolicy) -> f64 {
    let c = rate.exp_m1();
    let mut prev = f64::INFINITY;
    let mut total = 0.0;
    let mut out = 0.0;
    for (i, &p) in pp.powers().iter().enumerate() {
        total += p;
        let t = c / total;
        out += rate / (i + 1) as f64 * (fading.prob_below(prev) - fading.prob_below(t));
        prev = t;
    }
    out
}

/// Noise-free delay-limited throughput of incremental redundancy with a fixed
/// channel: `sum_m R^(m) (F(Δ_{m-1}) - F(Δ_m))`.
pub fn noise_free_delay_limited_inr(
    fading: &FadingDistribution,
    rp: &RatePolicy,
    pp: &PowerPolicy,
    settings: &DeltaSolverSettings,
) -> Result<f64, AnalyticError> {
    let mut prev = f64::INFINITY;
    let mut out = 0.0;
    for m in 1..=pp.len() {
        let d = delta_m(rp, pp, m, settings)?;
        out += rp.rate(m) * (fading.prob_below(prev) - fading.prob_below(d));
        prev = d;
    }
    Ok(out)
}

/// Closed-form evaluation with every intermediate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub ladder: DecodeLadder,
    pub stop: StopDistribution,
    pub report: PerformanceReport,
}

pub fn report_from_stop(sd: &StopDistribution, pp: &PowerPolicy, rp: &RatePolicy) -> PerformanceReport {
    PerformanceReport {
        eta_lt: long_term_throughput(sd, rp),
        eta_dl: delay_limited_throughput(sd, rp),
        avg_power: avg_power(sd, pp, rp),
        feedback_load: feedback_load(sd),
        expected_rounds: expected_rounds(sd),
        outage: sd.outage,
        std_errors: None,
    }
}

pub fn evaluate(config: &ArqConfig, pp: &PowerPolicy, rp: &RatePolicy, opts: &AnalyticOptions) -> Result<Evaluation, AnalyticError> {
    let ladder = decode_ladder(config, pp, rp, opts)?;
    let stop = stop_distribution_from_ladder(&ladder, config.p_b)?;
    let report = report_from_stop(&stop, pp, rp);
    Ok(Evaluation { ladder, stop, report })
}

pub fn performance_report(
    config: &ArqConfig,
    pp: &PowerPolicy,
    rp: &RatePolicy,
    opts: &AnalyticOptions,
) -> Result<PerformanceReport, AnalyticError> {
    Ok(evaluate(config, pp, rp, opts)?.report)
}

#[cfg(test)]
mod tests;
