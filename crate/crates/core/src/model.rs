//! Configuration, policy and result types shared by every engine.
//!
//! Conventions: rates are in nats per channel use, powers are linear SNRs
//! (noise variance 1), rounds are numbered from 1, a packet has at most
//! `M + 1` rounds, and the virtual rate before round 1 is `R^(0) = +inf`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fading::FadingDistribution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Receiver decodes only the most recent copy.
    Basic,
    /// Repetition time diversity (Chase combining): received SNRs add.
    Rtd,
    /// Incremental redundancy with equal-length rounds, `R^(m) = R / m`.
    InrFixed,
    /// Incremental redundancy with a free, decreasing rate ladder.
    InrVariable,
}

impl Protocol {
    pub fn is_fixed_length(self) -> bool {
        !matches!(self, Protocol::InrVariable)
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Basic => "basic",
            Protocol::Rtd => "rtd",
            Protocol::InrFixed => "inr_fixed",
            Protocol::InrVariable => "inr_variable",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// One gain per packet: every round sees the same fading block.
    LongLc,
    /// One independent gain per round.
    ShortLc,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::LongLc => "long",
            Scenario::ShortLc => "short",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArqConfig {
    pub protocol: Protocol,
    /// Maximum number of retransmissions `M`; a packet uses at most `M + 1` rounds.
    pub max_retx: usize,
    pub scenario: Scenario,
    /// Probability that a feedback bit is flipped.
    pub p_b: f64,
    pub fading: FadingDistribution,
}

impl ArqConfig {
    pub fn new(
        protocol: Protocol,
        max_retx: usize,
        scenario: Scenario,
        p_b: f64,
        fading: FadingDistribution,
    ) -> Self {
        Self {
            protocol,
            max_retx,
            scenario,
            p_b,
            fading,
        }
    }

    /// `M + 1`.
    pub fn rounds(&self) -> usize {
        self.max_retx + 1
    }

    pub fn with_p_b(mut self, p_b: f64) -> Self {
        self.p_b = p_b;
        self
    }

    pub fn with_protocol(mut self, protocol: Protocol) -> Self {
        self.protocol = protocol;
        self
    }

    pub fn with_scenario(mut self, scenario: Scenario) -> Self {
        self.scenario = scenario;
        self
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(p: f64) -> f64 {
    10.0 * p.log10()
}

/// Per-round transmit powers `P_1..P_{M+1}` (per channel use).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerPolicy {
    powers: Vec<f64>,
}

impl PowerPolicy {
    pub fn new(powers: Vec<f64>) -> Self {
        Self { powers }
    }

    pub fn uniform(power: f64, rounds: usize) -> Self {
        Self {
            powers: vec![power; rounds],
        }
    }

    pub fn from_db(db: &[f64]) -> Self {
        Self {
            powers: db.iter().map(|&d| db_to_linear(d)).collect(),
        }
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    /// Power of round `m` (1-based).
    pub fn power(&self, m: usize) -> f64 {
        self.powers[m - 1]
    }

    pub fn len(&self) -> usize {
        self.powers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.powers.windows(2).all(|w| w[0] == w[1])
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.powers.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Initial rate and equivalent-rate ladder `R^(1) > R^(2) > ... > R^(M+1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePolicy {
    initial_rate: f64,
    equiv_rates: Vec<f64>,
}

impl RatePolicy {
    /// Equal-length rounds: `R^(m) = R / m`.
    pub fn fixed_length(rate: f64, rounds: usize) -> Self {
        Self {
            initial_rate: rate,
            equiv_rates: (1..=rounds).map(|m| rate / m as f64).collect(),
        }
    }

    /// Arbitrary ladder; the initial rate is `R^(1)`.
    pub fn variable(equiv_rates: Vec<f64>) -> Self {
        Self {
            initial_rate: equiv_rates.first().copied().unwrap_or(f64::NAN),
            equiv_rates,
        }
    }

    /// Ladder built from the first-round rate and the lengths of rounds
    /// `2..` relative to round 1: `1/R^(m) = (1 + t_2 + ... + t_m) / R`.
    pub fn from_relative_lengths(rate: f64, relative: &[f64]) -> Self {
        let mut rates = Vec::with_capacity(relative.len() + 1);
        rates.push(rate);
        let mut total = 1.0;
        for t in relative {
            total += t;
            rates.push(rate / total);
        }
        Self {
            initial_rate: rate,
            equiv_rates: rates,
        }
    }

    /// Incremental-redundancy ladder whose uniform-power decoding thresholds
    /// coincide with those of repetition at rate `r_hat`:
    /// `R^(m) = ln(1 + (e^r_hat - 1) / m)`.
    pub fn matched_incremental(r_hat: f64, rounds: usize) -> Self {
        let c = r_hat.exp_m1();
        Self::variable((1..=rounds).map(|m| (c / m as f64).ln_1p()).collect())
    }

    pub fn initial_rate(&self) -> f64 {
        self.initial_rate
    }

    pub fn equiv_rates(&self) -> &[f64] {
        &self.equiv_rates
    }

    /// `R^(m)`, with `R^(0) = +inf`.
    pub fn rate(&self, m: usize) -> f64 {
        if m == 0 {
            f64::INFINITY
        } else {
            self.equiv_rates[m - 1]
        }
    }

    /// `1 / R^(m)`, with `1 / R^(0) = 0`. Proportional to the channel uses
    /// spent by the end of round `m`.
    pub fn inv_rate(&self, m: usize) -> f64 {
        if m == 0 {
            0.0
        } else {
            1.0 / self.equiv_rates[m - 1]
        }
    }

    /// `1/R^(m) - 1/R^(m-1)`: length of round `m` per information nat.
    pub fn inv_increment(&self, m: usize) -> f64 {
        self.inv_rate(m) - self.inv_rate(m - 1)
    }

    pub fn len(&self) -> usize {
        self.equiv_rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equiv_rates.is_empty()
    }

    pub fn is_fixed_length(&self) -> bool {
        self.equiv_rates
            .iter()
            .enumerate()
            .all(|(i, &r)| r == self.initial_rate / (i + 1) as f64)
    }
}

/// Where a packet stops, with and without successful decoding.
///
/// Index `m - 1` holds the round-`m` value. `pr_m` is the noise-free
/// "decoded at round m and not before" probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopDistribution {
    pub pr_m: Vec<f64>,
    pub pr_a: Vec<f64>,
    pub pr_s: Vec<f64>,
    pub outage: f64,
}

impl StopDistribution {
    pub fn rounds(&self) -> usize {
        self.pr_a.len()
    }

    /// Checks the structural identities of a stop distribution.
    pub fn identity_violations(&self, p_b: f64, tol: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        let sum_a: f64 = self.pr_a.iter().sum();
        if (sum_a - 1.0).abs() > tol {
            out.push(Violation::new(
                ViolationCode::StopMassNotUnit,
                format!("sum Pr(A_m) = {sum_a}"),
            ));
        }
        let sum_s: f64 = self.pr_s.iter().sum();
        if (sum_s - (1.0 - self.outage)).abs() > tol {
            out.push(Violation::new(
                ViolationCode::SuccessMassMismatch,
                format!("sum Pr(S_m) = {sum_s}, 1 - outage = {}", 1.0 - self.outage),
            ));
        }
        for (m, (s, a)) in self.pr_s.iter().zip(&self.pr_a).enumerate() {
            if *s > a + tol {
                out.push(Violation::new(
                    ViolationCode::SuccessExceedsStop,
                    format!("Pr(S_{}) = {s} > Pr(A_{}) = {a}", m + 1, m + 1),
                ));
            }
        }
        if p_b == 0.0 {
            let rounds = self.rounds();
            for m in 0..rounds.saturating_sub(1) {
                if (self.pr_a[m] - self.pr_m[m]).abs() > tol {
                    out.push(Violation::new(
                        ViolationCode::NoiseFreeLadder,
                        format!("p_b = 0 but Pr(A_{}) != Pr({})", m + 1, m + 1),
                    ));
                }
            }
            let head: f64 = self.pr_m[..rounds - 1].iter().sum();
            if (self.pr_a[rounds - 1] - (1.0 - head)).abs() > tol {
                out.push(Violation::new(
                    ViolationCode::NoiseFreeLadder,
                    "p_b = 0 but the last-round stop mass is not the residual".to_string(),
                ));
            }
        }
        out
    }
}

/// Packet-level performance figures. Monte Carlo reports carry standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub eta_lt: f64,
    pub eta_dl: f64,
    pub avg_power: f64,
    pub feedback_load: f64,
    pub expected_rounds: f64,
    pub outage: f64,
    pub std_errors: Option<ReportStdErrors>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportStdErrors {
    pub eta_lt: f64,
    pub eta_dl: f64,
    pub avg_power: f64,
    pub feedback_load: f64,
    pub expected_rounds: f64,
    pub outage: f64,
}

impl PerformanceReport {
    /// Report-level identities: `eta_dl >= (1 - outage) eta_lt` and
    /// `expected_rounds = feedback_load + Pr(A_{M+1})`.
    pub fn identity_violations(&self, sd: &StopDistribution, rates: &RatePolicy, tol: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.eta_dl < (1.0 - self.outage) * self.eta_lt - tol {
            out.push(Violation::new(
                ViolationCode::DelayLimitedBound,
                format!(
                    "eta_dl = {} < (1 - outage) eta_lt = {}",
                    self.eta_dl,
                    (1.0 - self.outage) * self.eta_lt
                ),
            ));
        }
        let upper: f64 = sd
            .pr_a
            .iter()
            .enumerate()
            .map(|(i, a)| rates.rate(i + 1) * a)
            .sum();
        if self.eta_lt > upper + tol {
            out.push(Violation::new(
                ViolationCode::LongTermBound,
                format!("eta_lt = {} exceeds sum R^(m) Pr(A_m) = {upper}", self.eta_lt),
            ));
        }
        let last = sd.pr_a[sd.rounds() - 1];
        if (self.expected_rounds - self.feedback_load - last).abs() > tol {
            out.push(Violation::new(
                ViolationCode::RoundsFeedbackIdentity,
                format!(
                    "r = {} but B + Pr(A_M+1) = {}",
                    self.expected_rounds,
                    self.feedback_load + last
                ),
            ));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    PowersLength,
    NonPositivePower,
    RatesLength,
    NonPositiveRate,
    RatesNotDecreasing,
    InitialRateMismatch,
    FixedLengthLadder,
    VariableShortLcUnsupported,
    FeedbackProbabilityOutOfRange,
    BasicPowersDecreasing,
    StopMassNotUnit,
    SuccessMassMismatch,
    SuccessExceedsStop,
    NoiseFreeLadder,
    DelayLimitedBound,
    LongTermBound,
    RoundsFeedbackIdentity,
}

impl ViolationCode {
    /// Violations that make the closed forms meaningless. The others are
    /// advisory: they flag wasteful or inconsistent results, not bad input.
    pub fn is_structural(self) -> bool {
        !matches!(self, ViolationCode::BasicPowersDecreasing)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

impl Violation {
    pub fn new(code: ViolationCode, message: String) -> Self {
        Self { code, message }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.code, self.message)
    }
}

/// Returns every violated configuration/policy invariant.
pub fn validate(config: &ArqConfig, pp: &PowerPolicy, rp: &RatePolicy) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let rounds = config.rounds();

    if !(0.0..=1.0).contains(&config.p_b) {
        out.push(Violation::new(
            ViolationCode::FeedbackProbabilityOutOfRange,
            format!("p_b = {} outside [0, 1]", config.p_b),
        ));
    }
    if config.protocol == Protocol::InrVariable && config.scenario == Scenario::ShortLc {
        out.push(Violation::new(
            ViolationCode::VariableShortLcUnsupported,
            "variable-length short-Lc unsupported".to_string(),
        ));
    }

    if pp.len() != rounds {
        out.push(Violation::new(
            ViolationCode::PowersLength,
            format!("{} powers for {rounds} rounds", pp.len()),
        ));
    }
    if let Some(p) = pp.powers().iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        out.push(Violation::new(
            ViolationCode::NonPositivePower,
            format!("power {p} is not positive and finite"),
        ));
    }
    if config.protocol == Protocol::Basic && config.scenario == Scenario::LongLc && !pp.is_nondecreasing() {
        out.push(Violation::new(
            ViolationCode::BasicPowersDecreasing,
            "basic ARQ with a fixed channel needs nondecreasing powers".to_string(),
        ));
    }

    if rp.len() != rounds {
        out.push(Violation::new(
            ViolationCode::RatesLength,
            format!("{} equivalent rates for {rounds} rounds", rp.len()),
        ));
    }
    if !(rp.initial_rate().is_finite() && rp.initial_rate() > 0.0)
        || rp.equiv_rates().iter().any(|r| !(r.is_finite() && *r > 0.0))
    {
        out.push(Violation::new(
            ViolationCode::NonPositiveRate,
            "rates must be positive and finite".to_string(),
        ));
    }
    if rp.equiv_rates().windows(2).any(|w| w[1] >= w[0]) {
        out.push(Violation::new(
            ViolationCode::RatesNotDecreasing,
            "equiv rates not decreasing".to_string(),
        ));
    }
    if rp.equiv_rates().first().is_some_and(|&r| r != rp.initial_rate()) {
        out.push(Violation::new(
            ViolationCode::InitialRateMismatch,
            "R^(1) differs from the initial rate".to_string(),
        ));
    }
    if config.protocol.is_fixed_length() && !rp.is_fixed_length() {
        out.push(Violation::new(
            ViolationCode::FixedLengthLadder,
            "fixed-length protocol needs R^(m) = R/m".to_string(),
        ));
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rtd(m: usize) -> ArqConfig {
        ArqConfig::new(Protocol::Rtd, m, Scenario::LongLc, 0.0, FadingDistribution::default())
    }

    fn codes(r: Result<(), Vec<Violation>>) -> Vec<ViolationCode> {
        r.err().unwrap_or_default().into_iter().map(|v| v.code).collect()
    }

    #[test]
    fn accepts_plain_rtd() {
        let pp = PowerPolicy::uniform(1.0, 2);
        let rp = RatePolicy::fixed_length(0.4, 2);
        assert_eq!(rp.equiv_rates(), &[0.4, 0.2]);
        assert!(validate(&rtd(1), &pp, &rp).is_ok());
    }

    #[test]
    fn rejects_variable_short() {
        let cfg = ArqConfig::new(Protocol::InrVariable, 1, Scenario::ShortLc, 0.0, FadingDistribution::default());
        let errs = validate(&cfg, &PowerPolicy::uniform(1.0, 2), &RatePolicy::variable(vec![0.4, 0.3])).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].code, ViolationCode::VariableShortLcUnsupported);
        assert_eq!(errs[0].message, "variable-length short-Lc unsupported");
    }

    #[test]
    fn rejects_increasing_ladder() {
        let cfg = rtd(1).with_protocol(Protocol::InrVariable);
        let errs = validate(&cfg, &PowerPolicy::uniform(1.0, 2), &RatePolicy::variable(vec![0.4, 0.5])).unwrap_err();
        assert!(errs.iter().any(|v| v.code == ViolationCode::RatesNotDecreasing && v.message == "equiv rates not decreasing"));
    }

    #[test]
    fn reports_every_violation() {
        let cfg = ArqConfig { p_b: 1.5, ..rtd(2) };
        let found = codes(validate(&cfg, &PowerPolicy::new(vec![1.0, -1.0]), &RatePolicy::variable(vec![0.4, 0.5])));
        for code in [
            ViolationCode::FeedbackProbabilityOutOfRange,
            ViolationCode::PowersLength,
            ViolationCode::NonPositivePower,
            ViolationCode::RatesLength,
            ViolationCode::RatesNotDecreasing,
            ViolationCode::FixedLengthLadder,
        ] {
            assert!(found.contains(&code), "{code:?} missing from {found:?}");
        }
    }

    #[test]
    fn basic_monotonicity_is_advisory() {
        let cfg = rtd(1).with_protocol(Protocol::Basic);
        let errs = validate(&cfg, &PowerPolicy::new(vec![2.0, 1.0]), &RatePolicy::fixed_length(0.4, 2)).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(!errs[0].code.is_structural());
        assert!(validate(&cfg.with_scenario(Scenario::ShortLc), &PowerPolicy::new(vec![2.0, 1.0]), &RatePolicy::fixed_length(0.4, 2)).is_ok());
    }

    #[test]
    fn ladder_helpers() {
        let rp = RatePolicy::fixed_length(0.6, 3);
        assert_eq!(rp.rate(0), f64::INFINITY);
        assert_eq!(rp.inv_rate(0), 0.0);
        assert!((rp.inv_increment(3) - 1.0 / 0.6).abs() < 1e-12);
        assert!(rp.is_fixed_length());

        let same = RatePolicy::from_relative_lengths(0.6, &[1.0, 1.0]);
        for m in 1..=3 {
            assert!((same.rate(m) - rp.rate(m)).abs() < 1e-15);
        }

        let matched = RatePolicy::matched_incremental(0.8, 3);
        for m in 1..=3 {
            assert!(matched.rate(m) >= 0.8 / m as f64);
        }
        assert!((db_to_linear(linear_to_db(3.3)) - 3.3).abs() < 1e-12);
    }
}
