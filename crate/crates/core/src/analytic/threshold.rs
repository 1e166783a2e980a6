//! Gain thresholds for incremental redundancy over a fixed channel.
//!
//! `Θ_m(g) = Σ_{n<=m} (1/R^(n) - 1/R^(n-1)) ln(1 + g P_n)` is increasing in `g`
//! whenever the rate ladder decreases, so `Θ_m(g) = 1` has a unique root `Δ_m`
//! and a packet is decodable by round `m` iff `g >= Δ_m`.

use serde::{Deserialize, Serialize};

use super::AnalyticError;
use crate::model::{PowerPolicy, RatePolicy};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaSolverSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Factor by which the upper end of the initial bracket `[0, 1]` grows.
    pub bracket_growth: f64,
    pub max_iter: usize,
}

impl Default for DeltaSolverSettings {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            bracket_growth: 2.0,
            max_iter: 200,
        }
    }
}

/// `Θ_m(g)`.
pub fn theta(rp: &RatePolicy, pp: &PowerPolicy, m: usize, g: f64) -> f64 {
    (1..=m).map(|n| rp.inv_increment(n) * (g * pp.power(n)).ln_1p()).sum()
}

/// `Δ_m`: the root of `Θ_m(g) = 1`.
pub fn delta_m(rp: &RatePolicy, pp: &PowerPolicy, m: usize, settings: &DeltaSolverSettings) -> Result<f64, AnalyticError> {
    if m == 0 || m > rp.len() || m > pp.len() {
        return Err(AnalyticError::RoundOutOfRange {
            m,
            rounds: rp.len().min(pp.len()),
        });
    }
    if m == 1 {
        // single-term closed form
        return Ok(rp.rate(1).exp_m1() / pp.power(1));
    }
    solve_increasing(|g| theta(rp, pp, m, g), 1.0, settings)
}

/// Root of `Σ_n ln(1 + g P_n) = rate`, the equal-length special case of `Δ_m`.
pub fn fixed_length_threshold(powers: &[f64], rate: f64, settings: &DeltaSolverSettings) -> Result<f64, AnalyticError> {
    match powers {
        [] => Ok(f64::INFINITY),
        [p] => Ok(rate.exp_m1() / p),
        _ => solve_increasing(|g| powers.iter().map(|p| (g * p).ln_1p()).sum(), rate, settings),
    }
}

/// Finds `g >= 0` with `f(g) = target` for a continuous increasing `f` with
/// `f(0) = 0 < target`, by bracketed bisection.
pub(crate) fn solve_increasing<F: Fn(f64) -> f64>(
    f: F,
    target: f64,
    settings: &DeltaSolverSettings,
) -> Result<f64, AnalyticError> {
    let residual = |v: f64| (v / target - 1.0).abs();
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    let mut grown = 0;
    while f(hi) < target {
        lo = hi;
        hi *= settings.bracket_growth;
        grown += 1;
        if !hi.is_finite() || grown > 2000 {
            return Err(AnalyticError::NoConvergence {
                iterations: grown,
                lo,
                hi,
                residual: residual(f(lo)),
            });
        }
    }

    let mut best = hi;
    let mut best_res = residual(f(hi));
    for _ in 0..settings.max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        let res = residual(v);
        if res < best_res {
            best = mid;
            best_res = res;
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= settings.abs_tol && best_res <= settings.rel_tol {
            break;
        }
    }
    if best_res <= settings.rel_tol {
        Ok(best)
    } else {
        Err(AnalyticError::NoConvergence {
            iterations: settings.max_iter,
            lo,
            hi,
            residual: best_res,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_round_is_closed_form() {
        let rp = RatePolicy::fixed_length(0.7, 3);
        let pp = PowerPolicy::new(vec![2.0, 1.0, 3.0]);
        let d = delta_m(&rp, &pp, 1, &DeltaSolverSettings::default()).unwrap();
        assert_eq!(d, 0.7_f64.exp_m1() / 2.0);
    }

    #[test]
    fn uniform_power_collapses() {
        let rp = RatePolicy::variable(vec![0.9, 0.5, 0.2]);
        let pp = PowerPolicy::uniform(1.7, 3);
        for m in 1..=3 {
            let d = delta_m(&rp, &pp, m, &DeltaSolverSettings::default()).unwrap();
            let closed = rp.rate(m).exp_m1() / 1.7;
            assert!((d - closed).abs() < 1e-11, "m={m}: {d} vs {closed}");
        }
    }

    #[test]
    fn two_round_root_agrees_with_grid_scan() {
        let rp = RatePolicy::variable(vec![0.6, 0.3]);
        let pp = PowerPolicy::new(vec![2.0, 1.0]);
        let d = delta_m(&rp, &pp, 2, &DeltaSolverSettings::default()).unwrap();
        assert!((theta(&rp, &pp, 2, d) - 1.0).abs() <= 1e-10);

        // independent oracle: scan for the sign change on a fine grid
        let step = 1e-6;
        let mut g = 0.0;
        while theta(&rp, &pp, 2, g) < 1.0 {
            g += step;
        }
        assert!((d - g).abs() <= step);
    }

    #[test]
    fn fixed_length_matches_theta_route() {
        let powers = [1.2, 0.4, 3.0];
        let rate = 0.9;
        let rp = RatePolicy::fixed_length(rate, 3);
        let pp = PowerPolicy::new(powers.to_vec());
        let s = DeltaSolverSettings::default();
        for m in 1..=3 {
            let a = fixed_length_threshold(&powers[..m], rate, &s).unwrap();
            let b = delta_m(&rp, &pp, m, &s).unwrap();
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn out_of_range_round() {
        let rp = RatePolicy::fixed_length(0.7, 2);
        let pp = PowerPolicy::uniform(1.0, 2);
        assert!(matches!(
            delta_m(&rp, &pp, 3, &DeltaSolverSettings::default()),
            Err(AnalyticError::RoundOutOfRange { m: 3, .. })
        ));
    }

    #[test]
    fn reports_non_convergence() {
        let s = DeltaSolverSettings {
            max_iter: 3,
            ..Default::default()
        };
        let err = solve_increasing(|g| g.ln_1p(), 0.37, &s).unwrap_err();
        assert!(matches!(err, AnalyticError::NoConvergence { .. }));
    }
}
