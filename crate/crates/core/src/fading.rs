//! Channel-gain laws for the block-fading channel.
//!
//! The gain `g = |h|^2` follows a Nakagami-N law applied directly to `g`:
//! `f(g) = 2 N^N / (Γ(N) w^N) g^(2N-1) exp(-N g^2 / w)`, which for `N = 2`
//! reads `(8 / w^2) g^3 exp(-2 g^2 / w)`. Its cdf is `P(N, N g^2 / w)`, the
//! regularized lower incomplete gamma function. A deterministic law is
//! provided for tests and degenerate experiments.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special;

/// Relative slack applied when a gain is compared against a decoding threshold.
///
/// Decodability uses `>=`; recomputing a threshold as `expm1(ln_1p(x))` can land
/// a few ulps away from `x`, so a point mass sitting exactly on the boundary is
/// still treated as decodable.
pub(crate) const BOUNDARY_RTOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FadingError {
    #[error("gain argument must be nonnegative, got {0}")]
    NegativeGain(f64),
    #[error("probability must lie in [0, 1], got {0}")]
    ProbabilityOutOfRange(f64),
    #[error("invalid fading parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingKind {
    NakagamiN,
    Deterministic,
}

/// Serialized form of [`FadingDistribution`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FadingParams {
    pub kind: FadingKind,
    #[serde(default = "one")]
    pub n_shape: f64,
    #[serde(default = "one")]
    pub w_scale: f64,
    #[serde(default)]
    pub fixed_gain: f64,
}

fn one() -> f64 {
    1.0
}

/// Gain distribution. Immutable once built; share it freely across threads.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FadingParams", into = "FadingParams")]
pub struct FadingDistribution {
    kind: FadingKind,
    n_shape: f64,
    w_scale: f64,
    fixed_gain: f64,
    ln_gamma_n: f64,
}

impl FadingDistribution {
    pub fn nakagami(n_shape: f64, w_scale: f64) -> Result<Self, FadingError> {
        if !(n_shape.is_finite() && n_shape > 0.0) {
            return Err(FadingError::InvalidParameter(format!(
                "Nakagami order must be positive and finite, got {n_shape}"
            )));
        }
        if !(w_scale.is_finite() && w_scale > 0.0) {
            return Err(FadingError::InvalidParameter(format!(
                "Nakagami scale must be positive and finite, got {w_scale}"
            )));
        }
        Ok(Self {
            kind: FadingKind::NakagamiN,
            n_shape,
            w_scale,
            fixed_gain: 0.0,
            ln_gamma_n: special::ln_gamma(n_shape),
        })
    }

    /// Nakagami-1, the Rayleigh-type gain law with unit scale.
    pub fn rayleigh() -> Self {
        Self::nakagami(1.0, 1.0).expect("valid parameters")
    }

    pub fn deterministic(fixed_gain: f64) -> Result<Self, FadingError> {
        if !(fixed_gain.is_finite() && fixed_gain >= 0.0) {
            return Err(FadingError::InvalidParameter(format!(
                "fixed gain must be nonnegative and finite, got {fixed_gain}"
            )));
        }
        Ok(Self {
            kind: FadingKind::Deterministic,
            n_shape: 1.0,
            w_scale: 1.0,
            fixed_gain,
            ln_gamma_n: 0.0,
        })
    }

    pub fn kind(&self) -> FadingKind {
        self.kind
    }

    pub fn n_shape(&self) -> f64 {
        self.n_shape
    }

    pub fn w_scale(&self) -> f64 {
        self.w_scale
    }

    pub fn fixed_gain(&self) -> f64 {
        self.fixed_gain
    }

    pub fn is_deterministic(&self) -> bool {
        self.kind == FadingKind::Deterministic
    }

    /// Density of the gain. The deterministic law has none; it reports zero
    /// everywhere except an infinite spike at the fixed gain.
    pub fn pdf(&self, g: f64) -> f64 {
        match self.kind {
            FadingKind::Deterministic => {
                if g == self.fixed_gain {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            FadingKind::NakagamiN => {
                if g <= 0.0 {
                    // g^(2N-1) vanishes at the origin for N > 1/2
                    return if self.n_shape < 0.5 { f64::INFINITY } else if self.n_shape == 0.5 {
                        (2.0 / (std::f64::consts::PI * self.w_scale)).sqrt()
                    } else {
                        0.0
                    };
                }
                let n = self.n_shape;
                let y = n * g * g / self.w_scale;
                // dy/dg = 2 n g / w
                2.0 * n * g / self.w_scale * special::gamma_density(n, y, self.ln_gamma_n)
            }
        }
    }

    /// `F_G(g) = Pr(G <= g)`. `g = +inf` is legal and returns exactly 1.
    pub fn cdf(&self, g: f64) -> Result<f64, FadingError> {
        if g.is_nan() || g < 0.0 {
            return Err(FadingError::NegativeGain(g));
        }
        Ok(match self.kind {
            FadingKind::Deterministic => {
                if g >= self.fixed_gain {
                    1.0
                } else {
                    0.0
                }
            }
            FadingKind::NakagamiN => self.nakagami_lower(g),
        })
    }

    /// `Pr(G < t)`, the left limit of the cdf, for any threshold `t` in `[-inf, +inf]`.
    ///
    /// Every closed form downstream decodes on `>=`, so the probability of *not*
    /// decoding at threshold `t` is `Pr(G < t)`. For continuous laws this is
    /// just the cdf.
    pub fn prob_below(&self, t: f64) -> f64 {
        if t.is_nan() {
            return f64::NAN;
        }
        if t <= 0.0 {
            return 0.0;
        }
        match self.kind {
            FadingKind::Deterministic => {
                if reaches(self.fixed_gain, t) {
                    0.0
                } else {
                    1.0
                }
            }
            FadingKind::NakagamiN => self.nakagami_lower(t),
        }
    }

    /// `Pr(G >= t)`, computed from the upper tail so it keeps relative accuracy
    /// when small.
    pub fn prob_at_least(&self, t: f64) -> f64 {
        if t.is_nan() {
            return f64::NAN;
        }
        if t <= 0.0 {
            return 1.0;
        }
        match self.kind {
            FadingKind::Deterministic => {
                if reaches(self.fixed_gain, t) {
                    1.0
                } else {
                    0.0
                }
            }
            FadingKind::NakagamiN => {
                if t.is_infinite() {
                    return 0.0;
                }
                let y = self.n_shape * t * t / self.w_scale;
                special::gamma_q(self.n_shape, y, self.ln_gamma_n)
            }
        }
    }

    /// Smallest `g` with `cdf(g) >= p`. `p = 1` maps to `+inf` for Nakagami laws.
    pub fn quantile(&self, p: f64) -> Result<f64, FadingError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(FadingError::ProbabilityOutOfRange(p));
        }
        Ok(self.quantile_unchecked(p))
    }

    pub(crate) fn quantile_unchecked(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        match self.kind {
            FadingKind::Deterministic => self.fixed_gain,
            FadingKind::NakagamiN => {
                if p >= 1.0 {
                    return f64::INFINITY;
                }
                let y = if self.n_shape == 1.0 {
                    -(-p).ln_1p()
                } else {
                    special::gamma_p_inverse(self.n_shape, p, self.ln_gamma_n)
                };
                (self.w_scale * y / self.n_shape).sqrt()
            }
        }
    }

    /// One draw by inverse-cdf sampling. The rng stream is owned by the caller.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            FadingKind::Deterministic => self.fixed_gain,
            FadingKind::NakagamiN => self.quantile_unchecked(rng.gen::<f64>()),
        }
    }

    fn nakagami_lower(&self, g: f64) -> f64 {
        if g.is_infinite() {
            return 1.0;
        }
        let y = self.n_shape * g * g / self.w_scale;
        special::gamma_p(self.n_shape, y, self.ln_gamma_n)
    }
}

impl Default for FadingDistribution {
    /// Nakagami-2 with `w = 1`.
    fn default() -> Self {
        Self::nakagami(2.0, 1.0).expect("valid parameters")
    }
}

/// `g >= t` up to [`BOUNDARY_RTOL`].
pub(crate) fn reaches(g: f64, t: f64) -> bool {
    g >= t * (1.0 - BOUNDARY_RTOL)
}

impl TryFrom<FadingParams> for FadingDistribution {
    type Error = FadingError;

    fn try_from(p: FadingParams) -> Result<Self, Self::Error> {
        match p.kind {
            FadingKind::NakagamiN => Self::nakagami(p.n_shape, p.w_scale),
            FadingKind::Deterministic => Self::deterministic(p.fixed_gain),
        }
    }
}

impl From<FadingDistribution> for FadingParams {
    fn from(d: FadingDistribution) -> Self {
        FadingParams {
            kind: d.kind,
            n_shape: d.n_shape,
            w_scale: d.w_scale,
            fixed_gain: d.fixed_gain,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Adaptive Simpson quadrature, independent of the incomplete-gamma path.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    fn nakagami2_pdf(g: f64) -> f64 {
        8.0 * g.powi(3) * (-2.0 * g * g).exp()
    }

    #[test]
    fn cdf_at_origin_is_zero() {
        let d = FadingDistribution::default();
        assert_eq!(d.cdf(0.0).unwrap(), 0.0);
    }

    #[test]
    fn cdf_matches_quadrature_of_density() {
        let oracle = simpson(&nakagami2_pdf, 0.0, 1.0, 1e-13);
        assert!((oracle - (1.0 - 3.0 * (-2.0_f64).exp())).abs() < 1e-11);
        let d = FadingDistribution::default();
        assert!((d.cdf(1.0).unwrap() - oracle).abs() < 1e-10);
        assert!((d.cdf(1.0).unwrap() - 0.593994).abs() < 1e-6);

        let rayleigh = FadingDistribution::rayleigh();
        let g = 2.0_f64.ln().sqrt();
        let oracle = simpson(&|x: f64| 2.0 * x * (-x * x).exp(), 0.0, g, 1e-13);
        assert!((oracle - 0.5).abs() < 1e-10);
        assert!((rayleigh.cdf(g).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn general_order_density_matches_literal_form() {
        let d = FadingDistribution::nakagami(2.0, 1.0).unwrap();
        for &g in &[0.1, 0.5, 1.0, 1.7] {
            assert!((d.pdf(g) - nakagami2_pdf(g)).abs() < 1e-13);
        }
        for &(n, w) in &[(1.0, 1.0), (2.0, 1.0), (3.5, 0.7), (4.0, 2.0)] {
            let d = FadingDistribution::nakagami(n, w).unwrap();
            let total = simpson(&|g| d.pdf(g), 0.0, 12.0 * w.sqrt(), 1e-12);
            assert!((total - 1.0).abs() < 1e-6, "N={n} w={w}: {total}");
        }
    }

    #[test]
    fn cdf_rejects_negative_and_accepts_infinity() {
        let d = FadingDistribution::default();
        assert_eq!(d.cdf(-0.1), Err(FadingError::NegativeGain(-0.1)));
        assert_eq!(d.cdf(f64::INFINITY).unwrap(), 1.0);
        assert_eq!(d.prob_below(f64::INFINITY), 1.0);
    }

    #[test]
    fn quantile_examples() {
        let d = FadingDistribution::default();
        assert_eq!(d.quantile(0.0).unwrap(), 0.0);
        // bisection oracle on the closed-form N = 2 cdf
        let cdf = |g: f64| 1.0 - (-2.0 * g * g).exp() * (1.0 + 2.0 * g * g);
        let (mut lo, mut hi) = (0.0_f64, 10.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < 0.593994 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let q = d.quantile(0.593994).unwrap();
        assert!((q - hi).abs() < 1e-10);
        assert!((q - 1.0).abs() < 1e-5);

        let det = FadingDistribution::deterministic(0.7).unwrap();
        assert_eq!(det.quantile(0.3).unwrap(), 0.7);
        assert!(matches!(d.quantile(1.5), Err(FadingError::ProbabilityOutOfRange(_))));
        assert!(matches!(d.quantile(-0.1), Err(FadingError::ProbabilityOutOfRange(_))));
    }

    #[test]
    fn deterministic_law_is_a_unit_step() {
        let det = FadingDistribution::deterministic(0.7).unwrap();
        assert_eq!(det.cdf(0.69).unwrap(), 0.0);
        assert_eq!(det.cdf(0.7).unwrap(), 1.0);
        assert_eq!(det.prob_below(0.7), 0.0);
        assert_eq!(det.prob_below(0.71), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..100).all(|_| det.sample(&mut rng) == 0.7));
    }

    #[test]
    fn round_trip_in_the_bulk() {
        for d in [
            FadingDistribution::default(),
            FadingDistribution::rayleigh(),
            FadingDistribution::nakagami(4.0, 1.0).unwrap(),
            FadingDistribution::nakagami(1.5, 2.0).unwrap(),
        ] {
            for i in 1..1000 {
                let p = i as f64 / 1000.0;
                let g = d.quantile(p).unwrap();
                assert!((d.cdf(g).unwrap() - p).abs() < 1e-8);
                let g = 0.05 + 2.5 * i as f64 / 1000.0;
                let back = d.quantile(d.cdf(g).unwrap()).unwrap();
                assert!((back - g).abs() < 1e-9, "g={g} back={back}");
            }
        }
    }

    #[test]
    fn same_seed_same_sequence() {
        let d = FadingDistribution::default();
        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..64).map(|_| d.sample(&mut a)).collect();
        let ys: Vec<f64> = (0..64).map(|_| d.sample(&mut b)).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn empirical_law_converges() {
        let d = FadingDistribution::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 1_000_000;
        let mut xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();

        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
        let quad_mean = simpson(&|g| g * nakagami2_pdf(g), 0.0, 10.0, 1e-12);
        assert!((mean - quad_mean).abs() < 4.0 * (var / n as f64).sqrt());

        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = d.cdf(x).unwrap();
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.002, "KS statistic {ks}");
    }

    #[test]
    fn serde_round_trip_rebuilds_cached_state() {
        let d = FadingDistribution::nakagami(3.0, 0.5).unwrap();
        let json = serde_json::to_string(&d).unwrap();
        assert!(json.contains("nakagami_n"));
        let back: FadingDistribution = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<FadingDistribution>(r#"{"kind":"nakagami_n","n_shape":-1}"#).is_err());
    }
}
