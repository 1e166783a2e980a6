//! Packet-level simulation with explicit feedback bit flips.
//!
//! Each packet carries one information unit. A round-`m` stop costs
//! `1/R^(m)` channel uses and `sum_n P_n (1/R^(n) - 1/R^(n-1))` energy in the
//! same units, so ratio estimators match the closed forms directly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fading::{FadingDistribution, BOUNDARY_RTOL};
use crate::model::{self, ArqConfig, PerformanceReport, PowerPolicy, Protocol, RatePolicy, ReportStdErrors, Scenario, StopDistribution, Violation};
use crate::par;

pub const MIN_PACKETS: u64 = 1_000;
/// Packets per independently seeded batch.
pub const BATCH_SIZE: u64 = 1 << 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("invalid configuration: {0:?}")]
    Invalid(Vec<Violation>),
    #[error("need at least {MIN_PACKETS} packets, got {0}")]
    TooFewPackets(u64),
    #[error("{0}")]
    Unsupported(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacketOutcome {
    pub stop_round: usize,
    /// First round after which the receiver could decode; 0 if never.
    pub decoded_round: usize,
    pub success: bool,
    pub channel_uses: f64,
    pub energy: f64,
    /// `R^(stop)` on success, else 0.
    pub achieved_rate: f64,
    pub feedback_bits: usize,
}

/// Receiver-side decodability state.
#[derive(Clone, Copy, Debug)]
struct Decoder {
    protocol: Protocol,
    rate: f64,
    acc: f64,
    decoded: bool,
}

impl Decoder {
    fn new(protocol: Protocol, rate: f64) -> Self {
        Self {
            protocol,
            rate,
            acc: 0.0,
            decoded: false,
        }
    }

    fn receive(&mut self, snr: f64, inv_increment: f64) {
        let floor = self.rate * (1.0 - BOUNDARY_RTOL);
        let now = match self.protocol {
            Protocol::Basic => snr.ln_1p() >= floor,
            Protocol::Rtd => {
                self.acc += snr;
                self.acc.ln_1p() >= floor
            }
            Protocol::InrFixed => {
                self.acc += snr.ln_1p();
                self.acc >= floor
            }
            Protocol::InrVariable => {
                self.acc += inv_increment * snr.ln_1p();
                self.acc >= 1.0 - BOUNDARY_RTOL
            }
        };
        self.decoded |= now;
    }
}

/// One packet's protocol run. `channel(m, rng)` yields the round-`m` effective
/// SNR and the transmit power charged for that round.
fn play<R, C>(protocol: Protocol, p_b: f64, rp: &RatePolicy, rounds: usize, rng: &mut R, mut channel: C) -> PacketOutcome
where
    R: Rng,
    C: FnMut(usize, &mut R) -> (f64, f64),
{
    let mut dec = Decoder::new(protocol, rp.initial_rate());
    let mut energy = 0.0;
    let mut decoded_round = 0;
    let mut feedback_bits = 0;
    let mut stop_round = rounds;
    for m in 1..=rounds {
        let (snr, power) = channel(m, rng);
        let inc = rp.inv_increment(m);
        energy += power * inc;
        dec.receive(snr, inc);
        if dec.decoded && decoded_round == 0 {
            decoded_round = m;
        }
        if m == rounds {
            break;
        }
        feedback_bits += 1;
        let flipped = rng.gen::<f64>() < p_b;
        if dec.decoded != flipped {
            stop_round = m;
            break;
        }
    }
    let success = decoded_round != 0;
    PacketOutcome {
        stop_round,
        decoded_round,
        success,
        channel_uses: rp.inv_rate(stop_round),
        energy,
        achieved_rate: if success { rp.rate(stop_round) } else { 0.0 },
        feedback_bits,
    }
}

/// Simulates one packet. The caller is responsible for validating inputs.
pub fn simulate_packet<R: Rng>(config: &ArqConfig, pp: &PowerPolicy, rp: &RatePolicy, rng: &mut R) -> PacketOutcome {
    let fading = config.fading;
    match config.scenario {
        Scenario::LongLc => {
            let g = fading.sample(rng);
            play(config.protocol, config.p_b, rp, config.rounds(), rng, |m, _| {
                (g * pp.power(m), pp.power(m))
            })
        }
        Scenario::ShortLc => play(config.protocol, config.p_b, rp, config.rounds(), rng, |m, r| {
            (fading.sample(r) * pp.power(m), pp.power(m))
        }),
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Sum {
    hi: f64,
    lo: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.hi + x;
        if self.hi.abs() >= x.abs() {
            self.lo += (self.hi - t) + x;
        } else {
            self.lo += (x - t) + self.hi;
        }
        self.hi = t;
    }

    fn merge(&mut self, o: &Sum) {
        self.add(o.hi);
        self.add(o.lo);
    }

    fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

/// Sufficient statistics of a set of packets.
#[derive(Clone, Debug, Default, PartialEq)]
struct Tally {
    n: u64,
    stop: Vec<u64>,
    stop_success: Vec<u64>,
    decoded_at: Vec<u64>,
    success: u64,
    tau: Sum,
    tau2: Sum,
    success_tau: Sum,
    energy: Sum,
    energy2: Sum,
    energy_tau: Sum,
    rate: Sum,
    rate2: Sum,
    fb: Sum,
    fb2: Sum,
    rounds: Sum,
    rounds2: Sum,
}

impl Tally {
    fn new(rounds: usize) -> Self {
        Self {
            stop: vec![0; rounds],
            stop_success: vec![0; rounds],
            decoded_at: vec![0; rounds],
            ..Default::default()
        }
    }

    fn add(&mut self, o: &PacketOutcome) {
        self.n += 1;
        self.stop[o.stop_round - 1] += 1;
        if o.decoded_round > 0 {
            self.decoded_at[o.decoded_round - 1] += 1;
        }
        let s = f64::from(u8::from(o.success));
        if o.success {
            self.success += 1;
            self.stop_success[o.stop_round - 1] += 1;
        }
        self.tau.add(o.channel_uses);
        self.tau2.add(o.channel_uses * o.channel_uses);
        self.success_tau.add(s * o.channel_uses);
        self.energy.add(o.energy);
        self.energy2.add(o.energy * o.energy);
        self.energy_tau.add(o.energy * o.channel_uses);
        self.rate.add(o.achieved_rate);
        self.rate2.add(o.achieved_rate * o.achieved_rate);
        let fb = o.feedback_bits as f64;
        self.fb.add(fb);
        self.fb2.add(fb * fb);
        let r = o.stop_round as f64;
        self.rounds.add(r);
        self.rounds2.add(r * r);
    }

    fn merge(&mut self, o: &Tally) {
        self.n += o.n;
        for (a, b) in self.stop.iter_mut().zip(&o.stop) {
            *a += b;
        }
        for (a, b) in self.stop_success.iter_mut().zip(&o.stop_success) {
            *a += b;
        }
        for (a, b) in self.decoded_at.iter_mut().zip(&o.decoded_at) {
            *a += b;
        }
        self.success += o.success;
        self.tau.merge(&o.tau);
        self.tau2.merge(&o.tau2);
        self.success_tau.merge(&o.success_tau);
        self.energy.merge(&o.energy);
        self.energy2.merge(&o.energy2);
        self.energy_tau.merge(&o.energy_tau);
        self.rate.merge(&o.rate);
        self.rate2.merge(&o.rate2);
        self.fb.merge(&o.fb);
        self.fb2.merge(&o.fb2);
        self.rounds.merge(&o.rounds);
        self.rounds2.merge(&o.rounds2);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Variances below this fraction of the raw second moment are round-off.
const VARIANCE_FLOOR: f64 = 16.0 * f64::EPSILON;

fn floored(var: f64, scale: f64) -> f64 {
    if var <= VARIANCE_FLOOR * scale {
        0.0
    } else {
        var
    }
}

fn mean_estimate(n: f64, sum: Sum, sum2: Sum) -> Estimate {
    let (sum, sum2) = (sum.value(), sum2.value());
    let mean = sum / n;
    let var = floored((sum2 - n * mean * mean) / (n - 1.0), sum2 / (n - 1.0));
    Estimate {
        mean,
        std_error: (var / n).sqrt(),
    }
}

fn proportion(n: u64, k: u64) -> Estimate {
    let p = k as f64 / n as f64;
    Estimate {
        mean: p,
        std_error: (p * (1.0 - p) / n as f64).sqrt(),
    }
}

/// Ratio of means `sum a / sum b` with a delta-method standard error.
fn ratio_estimate(n: f64, a: f64, a2: f64, ab: f64, b: f64, b2: f64) -> Estimate {
    let r = a / b;
    let mean_b = b / n;
    let resid2 = a2 - 2.0 * r * ab + r * r * b2;
    let var = floored(resid2 / (n - 1.0), (a2 + r * r * b2) / (n - 1.0));
    Estimate {
        mean: r,
        std_error: (var / n).sqrt() / mean_b,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub report: PerformanceReport,
    pub pr_m: Vec<Estimate>,
    pub pr_a: Vec<Estimate>,
    pub pr_s: Vec<Estimate>,
    pub eta_lt: Estimate,
    pub eta_dl: Estimate,
    pub avg_power: Estimate,
    pub feedback_load: Estimate,
    pub expected_rounds: Estimate,
    pub outage: Estimate,
    pub n_packets: u64,
}

impl McReport {
    fn from_tally(t: &Tally) -> Self {
        let n = t.n as f64;
        let s = t.success as f64;
        let eta_lt = ratio_estimate(n, s, s, t.success_tau.value(), t.tau.value(), t.tau2.value());
        let avg_power = ratio_estimate(
            n,
            t.energy.value(),
            t.energy2.value(),
            t.energy_tau.value(),
            t.tau.value(),
            t.tau2.value(),
        );
        let eta_dl = mean_estimate(n, t.rate, t.rate2);
        let feedback_load = mean_estimate(n, t.fb, t.fb2);
        let expected_rounds = mean_estimate(n, t.rounds, t.rounds2);
        let outage = proportion(t.n, t.n - t.success);
        let report = PerformanceReport {
            eta_lt: eta_lt.mean,
            eta_dl: eta_dl.mean,
            avg_power: avg_power.mean,
            feedback_load: feedback_load.mean,
            expected_rounds: expected_rounds.mean,
            outage: outage.mean,
            std_errors: Some(ReportStdErrors {
                eta_lt: eta_lt.std_error,
                eta_dl: eta_dl.std_error,
                avg_power: avg_power.std_error,
                feedback_load: feedback_load.std_error,
                expected_rounds: expected_rounds.std_error,
                outage: outage.std_error,
            }),
        };
        Self {
            report,
            pr_m: t.decoded_at.iter().map(|&k| proportion(t.n, k)).collect(),
            pr_a: t.stop.iter().map(|&k| proportion(t.n, k)).collect(),
            pr_s: t.stop_success.iter().map(|&k| proportion(t.n, k)).collect(),
            eta_lt,
            eta_dl,
            avg_power,
            feedback_load,
            expected_rounds,
            outage,
            n_packets: t.n,
        }
    }

    /// Point estimates in closed-form layout, for invariant checks.
    pub fn stop_distribution(&self) -> StopDistribution {
        StopDistribution {
            pr_m: self.pr_m.iter().map(|e| e.mean).collect(),
            pr_a: self.pr_a.iter().map(|e| e.mean).collect(),
            pr_s: self.pr_s.iter().map(|e| e.mean).collect(),
            outage: self.outage.mean,
        }
    }
}

fn check(config: &ArqConfig, pp: &PowerPolicy, rp: &RatePolicy, n_packets: u64) -> Result<(), McError> {
    if n_packets < MIN_PACKETS {
        return Err(McError::TooFewPackets(n_packets));
    }
    if let Err(v) = model::validate(config, pp, rp) {
        let structural: Vec<_> = v.into_iter().filter(|x| x.code.is_structural()).collect();
        if !structural.is_empty() {
            return Err(McError::Invalid(structural));
        }
    }
    Ok(())
}

/// Runs `n_packets` packets split into fixed-size batches. Batch `b` draws from
/// stream `b` of a generator seeded by `seed`, and batches are reduced in
/// index order, so results do not depend on the thread count.
fn run_batches<F>(rounds: usize, n_packets: u64, seed: u64, packet: F) -> Tally
where
    F: Fn(&mut ChaCha8Rng, &mut Tally) + Sync,
{
    let batches: Vec<u64> = (0..n_packets.div_ceil(BATCH_SIZE)).collect();
    let tallies = par::map_ordered(&batches, |&b| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b);
        let count = BATCH_SIZE.min(n_packets - b * BATCH_SIZE);
        let mut t = Tally::new(rounds);
        for _ in 0..count {
            packet(&mut rng, &mut t);
        }
        t
    });
    let mut total = Tally::new(rounds);
    for t in &tallies {
        total.merge(t);
    }
    total
}

pub fn estimate_report(
    config: &ArqConfig,
    pp: &PowerPolicy,
    rp: &RatePolicy,
    n_packets: u64,
    seed: u64,
) -> Result<McReport, McError> {
    check(config, pp, rp, n_packets)?;
    let tally = run_batches(config.rounds(), n_packets, seed, |rng, t| {
        t.add(&simulate_packet(config, pp, rp, rng));
    });
    Ok(McReport::from_tally(&tally))
}

/// Fixed-length system with independent per-round gains at uniform power,
/// to be compared with its fixed-gain, random-power counterpart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MappingSetup {
    pub protocol: Protocol,
    pub max_retx: usize,
    pub p_b: f64,
    pub fading: FadingDistribution,
    pub power: f64,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MappingReport {
    pub native: McReport,
    pub mapped: McReport,
    /// Two-sample KS statistic of accumulated information after each round.
    pub ks: Vec<f64>,
    /// 1% critical value of the two-sample KS test at the sample size used.
    pub ks_critical: f64,
    pub ks_samples: usize,
    /// Average power of the mapped system from mean per-round powers and its
    /// stop distribution.
    pub phi_expected: f64,
    /// Energy over channel uses in the mapped system.
    pub phi_renewal: f64,
}

const KS_MAX_SAMPLES: usize = 100_000;

/// A gain draw conditioned on being positive.
fn positive_gain<R: Rng>(fading: &FadingDistribution, rng: &mut R) -> f64 {
    loop {
        let g = fading.sample(rng);
        if g > 0.0 {
            return g;
        }
    }
}

fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Simulates a short-coherence system at uniform power next to a fixed-gain
/// system whose round-`n` power is `(g_n / g) P`, so both see the same law of
/// per-round SNR.
pub fn map_short_to_long(setup: &MappingSetup, n_packets: u64, seed: u64) -> Result<MappingReport, McError> {
    if !setup.protocol.is_fixed_length() {
        return Err(McError::Unsupported("mapping needs a fixed-length protocol".into()));
    }
    let rounds = setup.max_retx + 1;
    let rp = RatePolicy::fixed_length(setup.rate, rounds);
    let pp = PowerPolicy::uniform(setup.power, rounds);
    let config = ArqConfig::new(setup.protocol, setup.max_retx, Scenario::ShortLc, setup.p_b, setup.fading);
    check(&config, &pp, &rp, n_packets)?;
    let fading = setup.fading;
    let p = setup.power;

    let native = run_batches(rounds, n_packets, seed, |rng, t| {
        t.add(&simulate_packet(&config, &pp, &rp, rng));
    });
    let mapped_seed = seed ^ 0x9e37_79b9_7f4a_7c15;
    let mapped = run_batches(rounds, n_packets, mapped_seed, |rng, t| {
        let g = positive_gain(&fading, rng);
        t.add(&play(setup.protocol, setup.p_b, &rp, rounds, rng, |_, r| {
            let p_tilde = fading.sample(r) / g * p;
            (g * p_tilde, p_tilde)
        }));
    });

    let native_report = McReport::from_tally(&native);
    let mapped_report = McReport::from_tally(&mapped);

    let ks_samples = (n_packets as usize).min(KS_MAX_SAMPLES);
    let mut rng_a = ChaCha8Rng::seed_from_u64(seed);
    rng_a.set_stream(u64::MAX);
    let mut rng_b = ChaCha8Rng::seed_from_u64(mapped_seed);
    rng_b.set_stream(u64::MAX);
    let mut acc_a = vec![Vec::with_capacity(ks_samples); rounds];
    let mut acc_b = vec![Vec::with_capacity(ks_samples); rounds];
    // unconditional mean of each round's random power
    let mut power_sum = vec![0.0; rounds];
    for _ in 0..ks_samples {
        let (mut sa, mut sb) = (0.0, 0.0);
        let g = positive_gain(&fading, &mut rng_b);
        for m in 0..rounds {
            let p_tilde = fading.sample(&mut rng_b) / g * p;
            power_sum[m] += p_tilde;
            sa += (fading.sample(&mut rng_a) * p).ln_1p();
            sb += (g * p_tilde).ln_1p();
            acc_a[m].push(sa);
            acc_b[m].push(sb);
        }
    }
    let ks = acc_a.into_iter().zip(acc_b).map(|(a, b)| ks_two_sample(a, b)).collect();
    let ks_critical = 1.628 * (2.0 / ks_samples as f64).sqrt();

    let mut tail = 1.0;
    let mut num = 0.0;
    let mut den = 0.0;
    for (m, (e, s)) in mapped_report.pr_a.iter().zip(&power_sum).enumerate() {
        num += s / ks_samples as f64 * tail;
        den += (m + 1) as f64 * e.mean;
        tail -= e.mean;
    }

    Ok(MappingReport {
        native: native_report,
        phi_renewal: mapped_report.avg_power.mean,
        mapped: mapped_report,
        ks,
        ks_critical,
        ks_samples,
        phi_expected: num / den,
    })
}
