//! Evaluation of a single grid cell.

use noisy_arq::analytic::{self, AnalyticOptions, IntegrationMethod, ShortLcIntegration};
use noisy_arq::montecarlo::{self, McReport};
use noisy_arq::optimizer::{self, Objective, OptProblem, PowerSearch};
use noisy_arq::{PerformanceReport, PowerPolicy, Protocol, RatePolicy};
use serde::{Deserialize, Serialize};

use crate::spec::{Cell, Engine, ExperimentSpec, PowerAllocation};
use crate::CliError;

pub const MAX_POWER_COLUMNS: usize = 5;
pub const IDENTITY_TOL: f64 = 1e-9;

pub const HEADER: [&str; 26] = [
    "protocol", "scenario", "coding", "M", "N", "w", "snr_db", "p_b", "engine", "R", "P1", "P2", "P3", "P4", "P5",
    "eta_lt", "eta_dl", "outage", "avg_power", "fb_load", "exp_rounds", "se_eta_lt", "se_eta_dl", "se_outage",
    "n_packets", "seed",
];

/// Analytic settings used by the harness: nested quadrature where it
/// applies, otherwise a quasi-random lattice seeded from `seed`.
pub fn analytic_options(rounds: usize, seed: u64) -> AnalyticOptions {
    let mut opts = AnalyticOptions::default();
    opts.integration = if rounds <= 3 {
        ShortLcIntegration {
            method: IntegrationMethod::NestedQuadrature,
            ..Default::default()
        }
    } else {
        ShortLcIntegration {
            seed,
            ..Default::default()
        }
    };
    opts
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub power: PowerPolicy,
    pub rates: RatePolicy,
    pub optimized: bool,
    pub evaluations: usize,
}

fn cell_err(cell: &Cell, e: impl std::fmt::Display) -> CliError {
    CliError::Cell {
        cell: cell.key(),
        message: e.to_string(),
    }
}

/// Uniform power at rate `rate`. Variable-length INR gets the ladder whose
/// thresholds match repetition at that rate.
pub fn uniform_policy(cell: &Cell, rate: f64) -> Policy {
    let rounds = cell.max_retx + 1;
    let rates = match cell.protocol {
        Protocol::InrVariable => RatePolicy::matched_incremental(rate, rounds),
        _ => RatePolicy::fixed_length(rate, rounds),
    };
    Policy {
        power: PowerPolicy::uniform(cell.power(), rounds),
        rates,
        optimized: false,
        evaluations: 0,
    }
}

pub fn problem(spec: &ExperimentSpec, cell: &Cell, objective: Objective, search: PowerSearch) -> OptProblem {
    let mut p = OptProblem::new(objective, cell.config(), cell.power())
        .with_grid(spec.grid_resolution, spec.refine)
        .with_power_search(search);
    if let Some(r) = spec.rate {
        p = p.with_fixed_rate(r);
    }
    p
}

pub fn power_search(spec: &ExperimentSpec) -> PowerSearch {
    match spec.power_allocation {
        PowerAllocation::Uniform => PowerSearch::Uniform,
        PowerAllocation::Optimal => PowerSearch::PerRound,
    }
}

/// Solves `p`; variable-length INR is warm-started from the fixed-length
/// optimum so it never reports less than it.
pub fn solve_with_warm_start(p: OptProblem, cell: &Cell) -> Result<Policy, CliError> {
    let mut p = p;
    let mut extra = 0;
    if cell.protocol == Protocol::InrVariable {
        let mut fixed = p.clone();
        fixed.config = fixed.config.with_protocol(Protocol::InrFixed);
        let f = optimizer::solve(&fixed).map_err(|e| cell_err(cell, e))?;
        extra = f.evaluations;
        p.warm_start.push((f.power, f.rates));
    }
    let r = optimizer::solve(&p).map_err(|e| cell_err(cell, e))?;
    Ok(Policy {
        power: r.power,
        rates: r.rates,
        optimized: true,
        evaluations: r.evaluations + extra,
    })
}

pub fn policy(spec: &ExperimentSpec, cell: &Cell) -> Result<Policy, CliError> {
    match spec.objective {
        None => {
            let rate = spec
                .rate
                .ok_or_else(|| cell_err(cell, "objective = none needs `rate`"))?;
            Ok(uniform_policy(cell, rate))
        }
        Some(obj) => solve_with_warm_start(problem(spec, cell, obj, power_search(spec)), cell),
    }
}

/// One output row before formatting.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub engine: &'static str,
    pub report: PerformanceReport,
    pub n_packets: Option<u64>,
    pub seed: Option<u64>,
}

fn opt_field<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn format_row(cell: &Cell, policy: &Policy, row: &Row) -> Vec<String> {
    let mut out = vec![
        cell.family.name().to_string(),
        cell.scenario.name().to_string(),
        cell.coding.name().to_string(),
        cell.max_retx.to_string(),
        cell.n_label(),
        cell.w_scale.to_string(),
        cell.snr_db.to_string(),
        cell.p_b.to_string(),
        row.engine.to_string(),
        policy.rates.initial_rate().to_string(),
    ];
    for i in 0..MAX_POWER_COLUMNS {
        out.push(opt_field(policy.power.powers().get(i)));
    }
    let r = &row.report;
    for v in [r.eta_lt, r.eta_dl, r.outage, r.avg_power, r.feedback_load, r.expected_rounds] {
        out.push(v.to_string());
    }
    let se = r.std_errors.as_ref();
    out.push(opt_field(se.map(|s| s.eta_lt)));
    out.push(opt_field(se.map(|s| s.eta_dl)));
    out.push(opt_field(se.map(|s| s.outage)));
    out.push(opt_field(row.n_packets));
    out.push(opt_field(row.seed));
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMeta {
    pub key: String,
    pub policy: Policy,
    pub violations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub records: Vec<Vec<String>>,
    pub meta: CellMeta,
}

/// Analytic evaluation plus the harness-level identity checks.
pub fn analytic_row(cell: &Cell, policy: &Policy, seed: u64) -> Result<(Row, Vec<String>), CliError> {
    let config = cell.config();
    let opts = analytic_options(config.rounds(), seed);
    let ev = analytic::evaluate(&config, &policy.power, &policy.rates, &opts).map_err(|e| cell_err(cell, e))?;
    let mut bad: Vec<String> = ev
        .stop
        .identity_violations(cell.p_b, IDENTITY_TOL)
        .into_iter()
        .chain(ev.report.identity_violations(&ev.stop, &policy.rates, IDENTITY_TOL))
        .map(|v| format!("analytic: {v}"))
        .collect();
    if policy.power.is_uniform() {
        let p = policy.power.power(1);
        if (ev.report.avg_power - p).abs() > IDENTITY_TOL * p.max(1.0) {
            bad.push(format!("analytic: uniform power {p} but avg_power {}", ev.report.avg_power));
        }
    }
    let row = Row {
        engine: "analytic",
        report: ev.report,
        n_packets: None,
        seed: None,
    };
    Ok((row, bad))
}

pub fn mc_checks(mc: &McReport, p_b: f64) -> Vec<String> {
    let sd = mc.stop_distribution();
    let mut bad: Vec<String> = sd
        .identity_violations(p_b, IDENTITY_TOL)
        .into_iter()
        .map(|v| format!("montecarlo: {v}"))
        .collect();
    let r = &mc.report;
    let last = sd.pr_a[sd.rounds() - 1];
    if (r.expected_rounds - r.feedback_load - last).abs() > IDENTITY_TOL {
        bad.push(format!(
            "montecarlo: r = {} but B + Pr(A_M+1) = {}",
            r.expected_rounds,
            r.feedback_load + last
        ));
    }
    bad
}

pub fn mc_row(cell: &Cell, policy: &Policy, packets: u64, seed: u64) -> Result<(Row, McReport, Vec<String>), CliError> {
    let mc = montecarlo::estimate_report(&cell.config(), &policy.power, &policy.rates, packets, seed)
        .map_err(|e| cell_err(cell, e))?;
    let bad = mc_checks(&mc, cell.p_b);
    let row = Row {
        engine: "montecarlo",
        report: mc.report.clone(),
        n_packets: Some(mc.n_packets),
        seed: Some(seed),
    };
    Ok((row, mc, bad))
}

pub fn run_cell(spec: &ExperimentSpec, cell: &Cell) -> Result<CellResult, CliError> {
    let policy = policy(spec, cell)?;
    let mut records = Vec::new();
    let mut violations = Vec::new();
    if matches!(spec.engine, Engine::Analytic | Engine::Both) {
        let (row, bad) = analytic_row(cell, &policy, spec.seed)?;
        records.push(format_row(cell, &policy, &row));
        violations.extend(bad);
    }
    if matches!(spec.engine, Engine::MonteCarlo | Engine::Both) {
        let (row, _, bad) = mc_row(cell, &policy, spec.mc_packets, cell.seed(spec.seed))?;
        records.push(format_row(cell, &policy, &row));
        violations.extend(bad);
    }
    Ok(CellResult {
        records,
        meta: CellMeta {
            key: cell.key(),
            policy,
            violations,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_has_header_width() {
        let spec = ExperimentSpec::parse("engine = both\nrate = 0.4\nmc_packets = 2000\ngrid.M = [4]").unwrap();
        let (cells, _) = spec.cells();
        let r = run_cell(&spec, &cells[0]).unwrap();
        assert_eq!(r.records.len(), 2);
        for rec in &r.records {
            assert_eq!(rec.len(), HEADER.len());
        }
        assert!(r.meta.violations.is_empty(), "{:?}", r.meta.violations);
        // 5 rounds fill every power column; analytic SEs are blank
        assert!(!r.records[0][14].is_empty());
        assert!(r.records[0][21].is_empty());
        assert!(!r.records[1][21].is_empty());
    }

    #[test]
    fn missing_rate_is_an_error() {
        let spec = ExperimentSpec::parse("engine = analytic").unwrap();
        let (cells, _) = spec.cells();
        assert!(run_cell(&spec, &cells[0]).is_err());
    }
}
