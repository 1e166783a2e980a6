//! Region searches over the feedback error probability.

use noisy_arq::analytic;
use noisy_arq::optimizer::{Objective, PowerSearch};
use serde::Serialize;

use crate::cell::{self, analytic_options, Policy};
use crate::spec::{Cell, ExperimentSpec, PowerAllocation};
use crate::CliError;

/// Upper end of every `p_b` search. Beyond one half the feedback bit is
/// more informative inverted.
pub const PB_CEILING: f64 = 0.5;
pub const PB_TOL: f64 = 1e-3;
pub const DEGENERATE_TOL: f64 = 1e-12;

fn cell_err(cell: &Cell, e: impl std::fmt::Display) -> CliError {
    CliError::Cell {
        cell: cell.key(),
        message: e.to_string(),
    }
}

/// One cell per grid point with the `p_b` axis removed.
fn base_cells(spec: &ExperimentSpec) -> Vec<Cell> {
    let mut s = spec.clone();
    s.grid.p_b = vec![0.0];
    s.cells().0
}

fn at(cell: &Cell, p_b: f64) -> Cell {
    Cell { p_b, ..*cell }
}

fn evaluate(spec: &ExperimentSpec, cell: &Cell, policy: &Policy) -> Result<noisy_arq::PerformanceReport, CliError> {
    let opts = analytic_options(cell.max_retx + 1, spec.seed);
    analytic::performance_report(&cell.config(), &policy.power, &policy.rates, &opts).map_err(|e| cell_err(cell, e))
}

/// Largest `p` in `[lo, hi]` (to `PB_TOL`) with `ok(p)`, given `ok(lo)` and
/// not `ok(hi)`.
fn bisect(mut lo: f64, mut hi: f64, mut ok: impl FnMut(f64) -> Result<bool, CliError>) -> Result<f64, CliError> {
    while hi - lo > PB_TOL {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

fn coords(c: &Cell) -> Vec<String> {
    vec![
        c.family.name().into(),
        c.scenario.name().into(),
        c.coding.name().into(),
        c.max_retx.to_string(),
        c.n_label(),
        c.w_scale.to_string(),
        c.snr_db.to_string(),
    ]
}

pub const BOUNDARY_HEADER: [&str; 11] =
    ["protocol", "scenario", "coding", "M", "N", "w", "snr_db", "R", "reference", "boundary_p_b", "flag"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryRow {
    pub cell: Cell,
    pub rate: f64,
    /// Outage at `p_b = 0` for the beta region, the open-loop throughput
    /// for the usefulness region.
    pub reference: f64,
    pub boundary: Option<f64>,
    pub flag: &'static str,
}

impl BoundaryRow {
    pub fn record(&self) -> Vec<String> {
        let mut r = coords(&self.cell);
        r.push(self.rate.to_string());
        r.push(self.reference.to_string());
        r.push(self.boundary.map(|b| b.to_string()).unwrap_or_default());
        r.push(self.flag.to_string());
        r
    }
}

/// Policy at `p_b` following the spec: uniform at `rate`, or re-optimized
/// for the spec objective.
fn spec_policy(spec: &ExperimentSpec, cell: &Cell) -> Result<Policy, CliError> {
    cell::policy(spec, cell)
}

/// For each SNR (and other coordinates), the largest `p_b` whose relative
/// outage inflation over `p_b = 0` stays within `beta` percent.
pub fn beta_region(spec: &ExperimentSpec, beta: f64) -> Result<Vec<BoundaryRow>, CliError> {
    base_cells(spec)
        .iter()
        .map(|base| {
            let p0 = spec_policy(spec, base)?;
            let out0 = evaluate(spec, base, &p0)?.outage;
            let rate = p0.rates.initial_rate();
            if out0 <= 0.0 {
                return Ok(BoundaryRow {
                    cell: *base,
                    rate,
                    reference: out0,
                    boundary: None,
                    flag: "undefined",
                });
            }
            let ok = |p: f64| -> Result<bool, CliError> {
                let c = at(base, p);
                let out = evaluate(spec, &c, &spec_policy(spec, &c)?)?.outage;
                Ok((out - out0) / out0 <= beta / 100.0)
            };
            let (boundary, flag) = if ok(PB_CEILING)? {
                (PB_CEILING, "cap")
            } else {
                (bisect(0.0, PB_CEILING, ok)?, "crossing")
            };
            Ok(BoundaryRow {
                cell: *base,
                rate,
                reference: out0,
                boundary: Some(boundary),
                flag,
            })
        })
        .collect()
}

/// Usefulness of ARQ over single-shot transmission at rate `rate` (default 1):
/// the largest `p_b` where the long-term throughput still beats the
/// open-loop throughput. With `power_allocation = optimal` the round powers
/// are re-optimized for long-term throughput at each `p_b`.
pub fn usefulness_region(spec: &ExperimentSpec) -> Result<Vec<BoundaryRow>, CliError> {
    let rate = spec.rate.unwrap_or(1.0);
    base_cells(spec)
        .iter()
        .map(|base| {
            let open = analytic::open_loop_throughput(&base.fading(), rate, base.power());
            let gap = |p: f64| -> Result<f64, CliError> {
                let c = at(base, p);
                let policy = match spec.power_allocation {
                    PowerAllocation::Uniform => cell::uniform_policy(&c, rate),
                    PowerAllocation::Optimal => {
                        let mut pr = cell::problem(spec, &c, Objective::MaxLongTerm, PowerSearch::PerRound);
                        pr.fixed_rate = Some(rate);
                        let u = cell::uniform_policy(&c, rate);
                        pr.warm_start.push((u.power, u.rates));
                        cell::solve_with_warm_start(pr, &c)?
                    }
                };
                Ok(evaluate(spec, &c, &policy)?.eta_lt - open)
            };
            let d0 = gap(0.0)?;
            let (boundary, flag) = if d0.abs() <= DEGENERATE_TOL * open.max(1.0) {
                (None, "degenerate")
            } else if d0 < 0.0 {
                (Some(0.0), "never_useful")
            } else if gap(PB_CEILING)? > 0.0 {
                (Some(PB_CEILING), "always_useful")
            } else {
                (Some(bisect(0.0, PB_CEILING, |p| Ok(gap(p)? > 0.0))?), "crossing")
            };
            Ok(BoundaryRow {
                cell: *base,
                rate,
                reference: open,
                boundary,
                flag,
            })
        })
        .collect()
}

pub const ZETA_HEADER: [&str; 17] = [
    "protocol", "scenario", "coding", "M", "N", "w", "snr_db", "p_b", "R", "P1", "P2", "P3", "P4", "P5", "eta_lt",
    "baseline_eta_lt", "zeta",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZetaRow {
    pub cell: Cell,
    pub policy: Policy,
    pub eta_lt: f64,
    pub baseline: f64,
    /// Percent change over the baseline.
    pub zeta: f64,
}

impl ZetaRow {
    pub fn record(&self) -> Vec<String> {
        let mut r = coords(&self.cell);
        r.push(self.cell.p_b.to_string());
        r.push(self.policy.rates.initial_rate().to_string());
        for i in 0..cell::MAX_POWER_COLUMNS {
            r.push(self.policy.power.powers().get(i).map(|p| p.to_string()).unwrap_or_default());
        }
        r.push(self.eta_lt.to_string());
        r.push(self.baseline.to_string());
        r.push(self.zeta.to_string());
        r
    }
}

pub const ZETA_BASELINE_NOTE: &str = "baseline: p_b = 0, uniform power, rate optimized once per cell (or the spec rate when given); numerator: re-optimized at each p_b with the spec power allocation";

/// Relative long-term throughput of the optimized noisy system over the
/// noise-free, uniform-power optimum at equal budget.
pub fn relative_throughput(spec: &ExperimentSpec) -> Result<Vec<ZetaRow>, CliError> {
    let (cells, _) = spec.cells();
    let mut rows = Vec::with_capacity(cells.len());
    let mut baseline: Option<(String, Policy, f64)> = None;
    for c in &cells {
        let base_cell = at(c, 0.0);
        let key = base_cell.key();
        if baseline.as_ref().map(|b| &b.0) != Some(&key) {
            let p = cell::problem(spec, &base_cell, Objective::MaxLongTerm, PowerSearch::Uniform);
            let pol = cell::solve_with_warm_start(p, &base_cell)?;
            let eta = evaluate(spec, &base_cell, &pol)?.eta_lt;
            baseline = Some((key, pol, eta));
        }
        let (_, base_pol, base_eta) = baseline.as_ref().expect("set above");
        let mut p = cell::problem(spec, c, Objective::MaxLongTerm, cell::power_search(spec));
        p.warm_start.push((base_pol.power.clone(), base_pol.rates.clone()));
        let pol = cell::solve_with_warm_start(p, c)?;
        let eta = evaluate(spec, c, &pol)?.eta_lt;
        rows.push(ZetaRow {
            cell: *c,
            policy: pol,
            eta_lt: eta,
            baseline: *base_eta,
            zeta: 100.0 * (eta - base_eta) / base_eta,
        });
    }
    Ok(rows)
}
