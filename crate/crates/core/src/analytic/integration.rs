//! Non-decoding probabilities for accumulating protocols with independent
//! per-round gains.
//!
//! `alpha[m - 1] = Pr(not decodable by round m)`. Round 1 is one-dimensional;
//! later rounds integrate over the first `m - 1` gains with the last one
//! handled in closed form through the fading cdf.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AnalyticError;
use crate::fading::{FadingDistribution, FadingKind, BOUNDARY_RTOL};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationMethod {
    /// Randomly shifted Kronecker lattice. Any number of rounds.
    QuasiRandom,
    /// Tensor Gauss-Legendre. At most three rounds.
    NestedQuadrature,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortLcIntegration {
    pub method: IntegrationMethod,
    /// Total lattice points across all random shifts.
    pub points: usize,
    pub seed: u64,
}

impl Default for ShortLcIntegration {
    fn default() -> Self {
        Self {
            method: IntegrationMethod::QuasiRandom,
            points: 1 << 20,
            seed: 0x5eed,
        }
    }
}

pub const QMC_SHIFTS: usize = 16;
pub const MIN_QMC_POINTS: usize = 1 << 10;
const NESTED_MAX_ROUNDS: usize = 3;

/// How the receiver combines rounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Combining {
    /// SNR addition (Chase / maximal-ratio combining).
    Repetition,
    /// Mutual-information addition.
    Incremental,
}

#[derive(Clone, Copy, Debug)]
struct Accumulator {
    combining: Combining,
    rate: f64,
    c: f64,
    state: f64,
}

impl Accumulator {
    fn new(combining: Combining, rate: f64) -> Self {
        Self {
            combining,
            rate,
            c: rate.exp_m1(),
            state: 0.0,
        }
    }

    fn add(&mut self, snr: f64) {
        match self.combining {
            Combining::Repetition => self.state += snr,
            Combining::Incremental => self.state += snr.ln_1p(),
        }
    }

    fn decoded(&self) -> bool {
        match self.combining {
            Combining::Repetition => self.state >= self.c * (1.0 - BOUNDARY_RTOL),
            Combining::Incremental => self.state >= self.rate * (1.0 - BOUNDARY_RTOL),
        }
    }

    /// Gain needed in the next round, at power `p`, to decode.
    fn next_threshold(&self, p: f64) -> f64 {
        if self.decoded() {
            return 0.0;
        }
        match self.combining {
            Combining::Repetition => (self.c - self.state) / p,
            Combining::Incremental => (self.rate - self.state).exp_m1() / p,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NonDecoding {
    pub alpha: Vec<f64>,
    /// Standard error per round; zero where the value is exact.
    pub std_error: Vec<f64>,
}

pub fn non_decoding(
    combining: Combining,
    fading: &FadingDistribution,
    powers: &[f64],
    rate: f64,
    settings: &ShortLcIntegration,
) -> Result<NonDecoding, AnalyticError> {
    let rounds = powers.len();
    if rounds == 0 {
        return Ok(NonDecoding {
            alpha: Vec::new(),
            std_error: Vec::new(),
        });
    }
    if fading.kind() == FadingKind::Deterministic {
        return Ok(deterministic(combining, fading.fixed_gain(), powers, rate));
    }
    let first = fading.prob_below(rate.exp_m1() / powers[0]);
    if rounds == 1 {
        return Ok(NonDecoding {
            alpha: vec![first],
            std_error: vec![0.0],
        });
    }
    let mut out = match settings.method {
        IntegrationMethod::QuasiRandom => quasi_random(combining, fading, powers, rate, settings)?,
        IntegrationMethod::NestedQuadrature => nested(combining, fading, powers, rate)?,
    };
    out.alpha[0] = first;
    out.std_error[0] = 0.0;
    // more rounds never hurt; remove sampling noise that says otherwise
    for m in 1..rounds {
        out.alpha[m] = out.alpha[m].min(out.alpha[m - 1]).max(0.0);
    }
    Ok(out)
}

fn deterministic(combining: Combining, g0: f64, powers: &[f64], rate: f64) -> NonDecoding {
    let mut acc = Accumulator::new(combining, rate);
    let alpha = powers
        .iter()
        .map(|p| {
            acc.add(g0 * p);
            if acc.decoded() {
                0.0
            } else {
                1.0
            }
        })
        .collect::<Vec<_>>();
    NonDecoding {
        std_error: vec![0.0; alpha.len()],
        alpha,
    }
}

/// Generator of the `d`-dimensional Kronecker sequence built on the unique
/// positive root of `x^(d+1) = x + 1`.
fn kronecker_generator(d: usize) -> Vec<f64> {
    let mut phi = 2.0_f64;
    for _ in 0..64 {
        let f = phi.powi(d as i32 + 1) - phi - 1.0;
        let df = (d as f64 + 1.0) * phi.powi(d as i32) - 1.0;
        phi -= f / df;
    }
    (1..=d).map(|j| (1.0 / phi.powi(j as i32)).fract()).collect()
}

fn lattice_seed(seed: u64, fading: &FadingDistribution, dims: usize) -> u64 {
    // FNV-1a over the inputs that fix the integrand's sampling measure
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for word in [
        seed,
        fading.n_shape().to_bits(),
        fading.w_scale().to_bits(),
        dims as u64,
    ] {
        for b in word.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn quasi_random(
    combining: Combining,
    fading: &FadingDistribution,
    powers: &[f64],
    rate: f64,
    settings: &ShortLcIntegration,
) -> Result<NonDecoding, AnalyticError> {
    let rounds = powers.len();
    let dims = rounds - 1;
    if settings.points < MIN_QMC_POINTS {
        return Err(AnalyticError::Integration(format!(
            "need at least {MIN_QMC_POINTS} points, got {}",
            settings.points
        )));
    }
    let per_shift = settings.points / QMC_SHIFTS;
    let gen = kronecker_generator(dims);
    let mut rng = ChaCha8Rng::seed_from_u64(lattice_seed(settings.seed, fading, dims));
    let shifts: Vec<Vec<f64>> = (0..QMC_SHIFTS)
        .map(|_| (0..dims).map(|_| rng.gen::<f64>()).collect())
        .collect();

    let estimates = par::map_ordered(&shifts, |shift| {
        let mut sums = vec![0.0; rounds];
        let mut gains = vec![0.0; dims];
        for i in 0..per_shift {
            for j in 0..dims {
                let u = (shift[j] + i as f64 * gen[j]).fract();
                gains[j] = fading.quantile_unchecked(u);
            }
            let mut acc = Accumulator::new(combining, rate);
            for m in 1..rounds {
                acc.add(gains[m - 1] * powers[m - 1]);
                if acc.decoded() {
                    break;
                }
                sums[m] += fading.prob_below(acc.next_threshold(powers[m]));
            }
        }
        sums.iter().map(|s| s / per_shift as f64).collect::<Vec<_>>()
    });

    let k = QMC_SHIFTS as f64;
    let mut alpha = vec![0.0; rounds];
    let mut std_error = vec![0.0; rounds];
    for m in 1..rounds {
        let mean = estimates.iter().map(|e| e[m]).sum::<f64>() / k;
        let var = estimates.iter().map(|e| (e[m] - mean).powi(2)).sum::<f64>() / (k - 1.0);
        alpha[m] = mean;
        std_error[m] = (var / k).sqrt();
    }
    Ok(NonDecoding { alpha, std_error })
}

const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];
const BREAK_PROBS: [f64; 11] = [
    0.02,
    0.1,
    0.25,
    0.5,
    0.75,
    0.9,
    0.98,
    0.999,
    1.0 - 1e-5,
    1.0 - 1e-9,
    1.0 - 1e-15,
];

/// Composite 8-point Gauss-Legendre rule on `[0, upper]` with segments at
/// fixed quantiles of the fading law.
fn rule(breaks: &[f64], upper: f64) -> Vec<(f64, f64)> {
    let mut pts = Vec::with_capacity(8 * BREAK_PROBS.len());
    let mut a = 0.0;
    for &b in breaks {
        let hi = b.min(upper);
        if hi > a {
            let mid = 0.5 * (a + hi);
            let half = 0.5 * (hi - a);
            for (x, w) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
                pts.push((mid - half * x, half * w));
                pts.push((mid + half * x, half * w));
            }
        }
        if b >= upper {
            break;
        }
        a = b;
    }
    pts
}

fn nested(
    combining: Combining,
    fading: &FadingDistribution,
    powers: &[f64],
    rate: f64,
) -> Result<NonDecoding, AnalyticError> {
    let rounds = powers.len();
    if rounds > NESTED_MAX_ROUNDS {
        return Err(AnalyticError::Integration(format!(
            "nested quadrature handles at most {NESTED_MAX_ROUNDS} rounds, got {rounds}"
        )));
    }
    let breaks: Vec<f64> = BREAK_PROBS.iter().map(|&p| fading.quantile_unchecked(p)).collect();
    let mut alpha = vec![0.0; rounds];
    let start = Accumulator::new(combining, rate);
    for (m, slot) in alpha.iter_mut().enumerate().skip(1) {
        *slot = integrate(fading, &breaks, powers, start, 0, m);
    }
    Ok(NonDecoding {
        alpha,
        std_error: vec![0.0; rounds],
    })
}

/// Integral over the gain of round `depth + 1` (0-based `depth`) restricted to
/// "still not decoded", ending with the closed-form tail for round `target + 1`.
fn integrate(
    fading: &FadingDistribution,
    breaks: &[f64],
    powers: &[f64],
    acc: Accumulator,
    depth: usize,
    target: usize,
) -> f64 {
    let upper = acc.next_threshold(powers[depth]);
    rule(breaks, upper)
        .into_iter()
        .map(|(g, w)| {
            let mut next = acc;
            next.add(g * powers[depth]);
            if next.decoded() {
                return 0.0;
            }
            let inner = if depth + 1 == target {
                fading.prob_below(next.next_threshold(powers[target]))
            } else {
                integrate(fading, breaks, powers, next, depth + 1, target)
            };
            w * fading.pdf(g) * inner
        })
        .sum()
}
