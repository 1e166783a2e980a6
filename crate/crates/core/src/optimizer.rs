//! Power and rate allocation under an average-power budget.
//!
//! Exhaustive search over a product grid followed by a Nelder-Mead polish in
//! log coordinates from the best cells. Candidates whose average power exceeds
//! the budget are rejected outright; uniform allocation at the budget is always
//! on the grid, so the feasible set is never empty.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{self, AnalyticError, AnalyticOptions, IntegrationMethod, ShortLcIntegration};
use crate::model::{ArqConfig, PerformanceReport, PowerPolicy, Protocol, RatePolicy, Scenario};
use crate::par;

pub const MAX_RETX_LIMIT: usize = 4;
/// Relative slack on the power budget.
pub const BUDGET_RTOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    MaxLongTerm,
    MaxDelayLimited,
    MinOutage,
}

impl Objective {
    /// Larger is better.
    fn score(self, r: &PerformanceReport) -> f64 {
        match self {
            Objective::MaxLongTerm => r.eta_lt,
            Objective::MaxDelayLimited => r.eta_dl,
            Objective::MinOutage => -r.outage,
        }
    }

    pub fn value(self, r: &PerformanceReport) -> f64 {
        match self {
            Objective::MaxLongTerm => r.eta_lt,
            Objective::MaxDelayLimited => r.eta_dl,
            Objective::MinOutage => r.outage,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerSearch {
    /// Independent per-round powers.
    PerRound,
    /// One common power for every round.
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBounds {
    /// Power range as multiples of the budget.
    pub power_lo: f64,
    pub power_hi: f64,
    pub rate_lo: f64,
    pub rate_hi: f64,
    /// Range of round lengths relative to round 1 (variable-length coding).
    pub length_lo: f64,
    pub length_hi: f64,
}

impl Default for SearchBounds {
    fn default() -> Self {
        Self {
            power_lo: 1.0 / 16.0,
            power_hi: 8.0,
            rate_lo: 0.05,
            rate_hi: 4.0,
            length_lo: 0.25,
            length_hi: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptProblem {
    pub objective: Objective,
    pub config: ArqConfig,
    pub power_budget: f64,
    pub fixed_rate: Option<f64>,
    pub bounds: SearchBounds,
    pub grid_resolution: usize,
    /// Grid points for each relative round length.
    pub length_resolution: usize,
    pub refine: bool,
    pub polish_starts: usize,
    pub polish_max_evals: usize,
    pub power_search: PowerSearch,
    pub analytic: AnalyticOptions,
    /// Extra candidates evaluated alongside the grid.
    pub warm_start: Vec<(PowerPolicy, RatePolicy)>,
}

impl OptProblem {
    pub fn new(objective: Objective, config: ArqConfig, power_budget: f64) -> Self {
        let mut analytic = AnalyticOptions::default();
        analytic.integration = if config.rounds() <= 3 {
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
        Self {
            objective,
            config,
            power_budget,
            fixed_rate: None,
            bounds: SearchBounds::default(),
            grid_resolution: 16,
            length_resolution: 5,
            refine: true,
            polish_starts: 8,
            polish_max_evals: 200,
            power_search: PowerSearch::PerRound,
            analytic,
            warm_start: Vec::new(),
        }
    }

    pub fn with_fixed_rate(mut self, rate: f64) -> Self {
        self.fixed_rate = Some(rate);
        self
    }

    pub fn with_power_search(mut self, s: PowerSearch) -> Self {
        self.power_search = s;
        self
    }

    pub fn with_grid(mut self, resolution: usize, refine: bool) -> Self {
        self.grid_resolution = resolution;
        self.refine = refine;
        self
    }

    fn rounds(&self) -> usize {
        self.config.rounds()
    }

    fn nondecreasing_only(&self) -> bool {
        self.config.protocol == Protocol::Basic && self.config.scenario == Scenario::LongLc
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub power: PowerPolicy,
    pub rates: RatePolicy,
    /// Objective in its natural sense (outage for `MinOutage`).
    pub objective: f64,
    pub avg_power: f64,
    pub report: PerformanceReport,
    pub evaluations: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error("at most {MAX_RETX_LIMIT} retransmissions supported, got {0}")]
    TooManyRounds(usize),
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error("no feasible candidate")]
    Infeasible,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub avg_power: f64,
}

pub fn feasibility(pp: &PowerPolicy, rp: &RatePolicy, config: &ArqConfig, budget: f64, opts: &AnalyticOptions) -> Result<Feasibility, AnalyticError> {
    let report = analytic::performance_report(config, pp, rp, opts)?;
    Ok(Feasibility {
        feasible: within_budget(report.avg_power, budget),
        avg_power: report.avg_power,
    })
}

fn within_budget(phi: f64, budget: f64) -> bool {
    phi <= budget * (1.0 + BUDGET_RTOL)
}

/// Free variables of one candidate, kept in natural units.
#[derive(Clone, Debug, PartialEq)]
struct Point {
    powers: Vec<f64>,
    rate: f64,
    lengths: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Scored {
    point: Point,
    score: f64,
    report: PerformanceReport,
}

/// Better score first; ties go to the lexicographically smaller power vector.
fn rank(a: &Scored, b: &Scored) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| lex(&a.point.powers, &b.point.powers))
        .then_with(|| a.point.rate.total_cmp(&b.point.rate))
        .then_with(|| lex(&a.point.lengths, &b.point.lengths))
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

struct Evaluator<'a> {
    problem: &'a OptProblem,
}

impl Evaluator<'_> {
    fn policies(&self, p: &Point) -> (PowerPolicy, RatePolicy) {
        let k = self.problem.rounds();
        let pp = if p.powers.len() == 1 && k > 1 {
            PowerPolicy::uniform(p.powers[0], k)
        } else {
            PowerPolicy::new(p.powers.clone())
        };
        let rp = if self.problem.config.protocol == Protocol::InrVariable {
            RatePolicy::from_relative_lengths(p.rate, &p.lengths)
        } else {
            RatePolicy::fixed_length(p.rate, k)
        };
        (pp, rp)
    }

    /// `None` when the candidate is infeasible or outside the admissible set.
    fn eval(&self, p: &Point) -> Option<Scored> {
        if self.problem.nondecreasing_only() && p.powers.windows(2).any(|w| w[1] < w[0]) {
            return None;
        }
        let (pp, rp) = self.policies(p);
        let report = analytic::performance_report(&self.problem.config, &pp, &rp, &self.problem.analytic).ok()?;
        if !within_budget(report.avg_power, self.problem.power_budget) {
            return None;
        }
        let score = self.problem.objective.score(&report);
        if !score.is_finite() {
            return None;
        }
        Some(Scored {
            point: p.clone(),
            score,
            report,
        })
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![(lo * hi).sqrt()];
    }
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

fn lin_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn with_value(mut v: Vec<f64>, x: f64) -> Vec<f64> {
    if !v.contains(&x) {
        v.push(x);
        v.sort_by(f64::total_cmp);
    }
    v
}

/// Mixed-radix enumeration of the product of `axes`.
fn product_size(axes: &[Vec<f64>]) -> usize {
    axes.iter().map(Vec::len).product()
}

fn product_at(axes: &[Vec<f64>], mut idx: usize) -> Vec<f64> {
    let mut out = vec![0.0; axes.len()];
    for (slot, axis) in out.iter_mut().zip(axes).rev() {
        *slot = axis[idx % axis.len()];
        idx /= axis.len();
    }
    out
}

fn point_from(problem: &OptProblem, coords: &[f64]) -> Point {
    let n_pow = match problem.power_search {
        PowerSearch::PerRound => problem.rounds(),
        PowerSearch::Uniform => 1,
    };
    let powers = coords[..n_pow].to_vec();
    let (rate, rest) = match problem.fixed_rate {
        Some(r) => (r, &coords[n_pow..]),
        None => (coords[n_pow], &coords[n_pow + 1..]),
    };
    Point {
        powers,
        rate,
        lengths: rest.to_vec(),
    }
}

fn axes(problem: &OptProblem) -> Vec<Vec<f64>> {
    let b = &problem.bounds;
    let budget = problem.power_budget;
    let n = problem.grid_resolution;
    let power_axis = with_value(log_grid(b.power_lo * budget, b.power_hi * budget, n), budget);
    let mut axes = Vec::new();
    let n_pow = match problem.power_search {
        PowerSearch::PerRound => problem.rounds(),
        PowerSearch::Uniform => 1,
    };
    for _ in 0..n_pow {
        axes.push(power_axis.clone());
    }
    if problem.fixed_rate.is_none() {
        axes.push(lin_grid(b.rate_lo, b.rate_hi, n));
    }
    if problem.config.protocol == Protocol::InrVariable {
        let lengths = with_value(log_grid(b.length_lo, b.length_hi, problem.length_resolution), 1.0);
        for _ in 1..problem.rounds() {
            axes.push(lengths.clone());
        }
    }
    axes
}

fn check_problem(problem: &OptProblem) -> Result<(), OptError> {
    if problem.config.max_retx > MAX_RETX_LIMIT {
        return Err(OptError::TooManyRounds(problem.config.max_retx));
    }
    if !(problem.power_budget > 0.0 && problem.power_budget.is_finite()) {
        return Err(OptError::Invalid(format!("power budget {}", problem.power_budget)));
    }
    let b = &problem.bounds;
    let ok = [b.power_lo, b.power_hi, b.rate_lo, b.rate_hi, b.length_lo, b.length_hi]
        .iter()
        .all(|x| x.is_finite() && *x > 0.0)
        && b.power_lo <= 1.0
        && 1.0 <= b.power_hi
        && b.rate_lo <= b.rate_hi
        && b.length_lo <= 1.0
        && 1.0 <= b.length_hi;
    if !ok {
        return Err(OptError::Invalid(format!("bounds {b:?}")));
    }
    if problem.objective == Objective::MinOutage && problem.fixed_rate.is_none() {
        return Err(OptError::Invalid("minimizing outage needs a fixed rate".into()));
    }
    if problem.grid_resolution == 0 {
        return Err(OptError::Invalid("empty grid".into()));
    }
    if problem.config.protocol == Protocol::InrVariable && problem.config.scenario == Scenario::ShortLc {
        return Err(OptError::Invalid("variable-length coding needs a fixed channel".into()));
    }
    Ok(())
}

/// Translates a warm-start policy into the problem's search coordinates.
fn warm_point(problem: &OptProblem, pp: &PowerPolicy, rp: &RatePolicy) -> Option<Point> {
    let k = problem.rounds();
    if pp.len() != k || rp.len() != k {
        return None;
    }
    let powers = match problem.power_search {
        PowerSearch::PerRound => pp.powers().to_vec(),
        PowerSearch::Uniform if pp.is_uniform() => vec![pp.power(1)],
        PowerSearch::Uniform => return None,
    };
    let rate = problem.fixed_rate.unwrap_or(rp.initial_rate());
    let lengths = if problem.config.protocol == Protocol::InrVariable {
        (2..=k).map(|m| rp.inv_increment(m) * rp.initial_rate()).collect()
    } else {
        Vec::new()
    };
    Some(Point { powers, rate, lengths })
}

pub fn solve(problem: &OptProblem) -> Result<OptResult, OptError> {
    check_problem(problem)?;
    let eval = Evaluator { problem };
    let axes = axes(problem);
    let total = product_size(&axes);

    let mut candidates: Vec<Point> = Vec::with_capacity(total + problem.warm_start.len());
    for i in 0..total {
        candidates.push(point_from(problem, &product_at(&axes, i)));
    }
    candidates.extend(problem.warm_start.iter().filter_map(|(pp, rp)| warm_point(problem, pp, rp)));
    let mut evaluations = candidates.len();

    const CHUNK: usize = 256;
    let chunks: Vec<&[Point]> = candidates.chunks(CHUNK).collect();
    let keep = problem.polish_starts.max(1);
    let partial = par::map_ordered(&chunks, |chunk| {
        let mut best: Vec<Scored> = chunk.iter().filter_map(|p| eval.eval(p)).collect();
        best.sort_by(rank);
        best.truncate(keep);
        best
    });
    let mut top: Vec<Scored> = partial.into_iter().flatten().collect();
    top.sort_by(rank);
    top.truncate(keep);
    if top.is_empty() {
        return Err(OptError::Infeasible);
    }

    if problem.refine {
        let polished = par::map_ordered(&top, |start| polish(&eval, start));
        for (s, n) in polished {
            evaluations += n;
            top.push(s);
        }
        top.sort_by(rank);
    }

    let best = top.swap_remove(0);
    let (pp, rp) = eval.policies(&best.point);
    Ok(OptResult {
        objective: problem.objective.value(&best.report),
        avg_power: best.report.avg_power,
        report: best.report,
        power: pp,
        rates: rp,
        evaluations,
    })
}

/// Nelder-Mead on the log of every free variable, confined to the search box.
fn polish(eval: &Evaluator<'_>, start: &Scored) -> (Scored, usize) {
    let problem = eval.problem;
    let b = &problem.bounds;
    let budget = problem.power_budget;
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for _ in &start.point.powers {
        lo.push((b.power_lo * budget).ln());
        hi.push((b.power_hi * budget).ln());
    }
    if problem.fixed_rate.is_none() {
        lo.push(b.rate_lo.ln());
        hi.push(b.rate_hi.ln());
    }
    for _ in &start.point.lengths {
        lo.push(b.length_lo.ln());
        hi.push(b.length_hi.ln());
    }
    let encode = |p: &Point| -> Vec<f64> {
        let mut x: Vec<f64> = p.powers.iter().map(|v| v.ln()).collect();
        if problem.fixed_rate.is_none() {
            x.push(p.rate.ln());
        }
        x.extend(p.lengths.iter().map(|v| v.ln()));
        x
    };
    let decode = |x: &[f64]| -> Point {
        let coords: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        point_from(problem, &coords)
    };
    let dim = lo.len();
    let evals = std::cell::Cell::new(0usize);
    let f = |x: &[f64]| -> (f64, Option<Scored>) {
        evals.set(evals.get() + 1);
        // a little outside the box is tolerated so grid edges can be refined
        if x.iter().zip(lo.iter().zip(&hi)).any(|(v, (l, h))| *v < l - 1e-9 || *v > h + 1e-9) {
            return (f64::NEG_INFINITY, None);
        }
        match eval.eval(&decode(x)) {
            Some(s) => (s.score, Some(s)),
            None => (f64::NEG_INFINITY, None),
        }
    };

    let x0 = encode(&start.point);
    let mut best = start.clone();
    if dim == 0 {
        return (best, 0);
    }
    let step = 0.15;
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.clone(), start.score)];
    for i in 0..dim {
        let mut x = x0.clone();
        // step inward when at the upper edge
        x[i] += if x[i] + step > hi[i] { -step } else { step };
        let (v, s) = f(&x);
        if let Some(s) = s {
            if rank(&s, &best) == Ordering::Less {
                best = s;
            }
        }
        simplex.push((x, v));
    }

    let max_evals = problem.polish_max_evals;
    while evals.get() < max_evals {
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let spread = simplex[0].1 - simplex[dim].1;
        if spread.is_finite() && spread.abs() <= 1e-12 * simplex[0].1.abs().max(1e-12) {
            break;
        }
        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|(x, _)| x[j]).sum::<f64>() / dim as f64)
            .collect();
        let worst = simplex[dim].clone();
        let along = |t: f64| -> Vec<f64> { (0..dim).map(|j| centroid[j] + t * (worst.0[j] - centroid[j])).collect() };

        let try_point = |x: Vec<f64>, best: &mut Scored| -> (Vec<f64>, f64) {
            let (v, s) = f(&x);
            if let Some(s) = s {
                if rank(&s, best) == Ordering::Less {
                    *best = s;
                }
            }
            (x, v)
        };

        let reflected = try_point(along(-1.0), &mut best);
        if reflected.1 > simplex[0].1 {
            let expanded = try_point(along(-2.0), &mut best);
            simplex[dim] = if expanded.1 > reflected.1 { expanded } else { reflected };
        } else if reflected.1 > simplex[dim - 1].1 {
            simplex[dim] = reflected;
        } else {
            let contracted = if reflected.1 > worst.1 {
                try_point(along(-0.5), &mut best)
            } else {
                try_point(along(0.5), &mut best)
            };
            if contracted.1 > worst.1.max(reflected.1) {
                simplex[dim] = contracted;
            } else {
                let anchor = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = anchor.iter().zip(&v.0).map(|(a, b)| a + 0.5 * (b - a)).collect();
                    *v = try_point(x, &mut best);
                }
            }
        }
    }
    (best, evals.get())
}

/// One solve per budget, in ascending budget order, each warm-started from
/// the previous optimum. Results come back in the order of `budgets`.
pub fn pareto_sweep(problem: &OptProblem, budgets: &[f64]) -> Result<Vec<OptResult>, OptError> {
    pareto_sweep_cached(problem, budgets, &mut SweepCache::default())
}

/// Memoized solves keyed by the problem and budget.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepCache {
    entries: BTreeMap<String, OptResult>,
}

impl SweepCache {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn key(problem: &OptProblem) -> String {
        serde_json::to_string(problem).expect("problem serializes")
    }
}

pub fn pareto_sweep_cached(problem: &OptProblem, budgets: &[f64], cache: &mut SweepCache) -> Result<Vec<OptResult>, OptError> {
    let mut order: Vec<usize> = (0..budgets.len()).collect();
    order.sort_by(|&a, &b| budgets[a].total_cmp(&budgets[b]));
    let mut out: Vec<Option<OptResult>> = vec![None; budgets.len()];
    let mut previous: Option<OptResult> = None;
    for i in order {
        let mut p = problem.clone();
        p.power_budget = budgets[i];
        if let Some(prev) = &previous {
            p.warm_start.push((prev.power.clone(), prev.rates.clone()));
        }
        let key = SweepCache::key(&p);
        let result = match cache.entries.get(&key) {
            Some(r) => r.clone(),
            None => {
                let r = solve(&p)?;
                cache.entries.insert(key, r.clone());
                r
            }
        };
        previous = Some(result.clone());
        out[i] = Some(result);
    }
    Ok(out.into_iter().map(|r| r.expect("every budget solved")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fading::FadingDistribution;

    fn config(protocol: Protocol, m: usize, scenario: Scenario, p_b: f64) -> ArqConfig {
        ArqConfig::new(protocol, m, scenario, p_b, FadingDistribution::default())
    }

    fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn open_loop_rate_search_matches_golden_section() {
        let c = config(Protocol::Rtd, 0, Scenario::LongLc, 0.0);
        let p = 1.0;
        let res = solve(&OptProblem::new(Objective::MaxLongTerm, c, p)).unwrap();
        let f = c.fading;
        let r_star = golden_max(|r| r * f.prob_at_least(r.exp_m1() / p), 0.05, 4.0);
        let best = r_star * f.prob_at_least(r_star.exp_m1() / p);
        assert!((res.objective - best).abs() < 1e-4);
        assert!((res.rates.initial_rate() - r_star).abs() < 1e-2);
    }

    #[test]
    fn uniform_search_lands_on_the_budget() {
        let c = config(Protocol::Rtd, 1, Scenario::LongLc, 0.1);
        let res = solve(&OptProblem::new(Objective::MaxLongTerm, c, 2.0).with_power_search(PowerSearch::Uniform)).unwrap();
        assert!(res.power.is_uniform());
        assert!((res.power.power(1) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn optimized_dominates_uniform() {
        let c = config(Protocol::Rtd, 1, Scenario::LongLc, 0.0);
        let p = 1.0;
        let opt = solve(&OptProblem::new(Objective::MaxDelayLimited, c, p)).unwrap();
        let uni = solve(&OptProblem::new(Objective::MaxDelayLimited, c, p).with_power_search(PowerSearch::Uniform)).unwrap();
        assert!(opt.objective >= uni.objective - 1e-12);
        assert!(opt.avg_power <= p * (1.0 + 1e-9));
    }

    #[test]
    fn min_outage_beats_uniform() {
        let c = config(Protocol::Rtd, 1, Scenario::LongLc, 0.0);
        let p = 10.0;
        let opt = solve(&OptProblem::new(Objective::MinOutage, c, p).with_fixed_rate(0.4)).unwrap();
        let uni = analytic::performance_report(&c, &PowerPolicy::uniform(p, 2), &RatePolicy::fixed_length(0.4, 2), &AnalyticOptions::default()).unwrap();
        assert!(opt.objective <= uni.outage);
        assert!(opt.avg_power <= p * (1.0 + 1e-9));
    }

    #[test]
    fn basic_long_powers_are_nondecreasing() {
        let c = config(Protocol::Basic, 2, Scenario::LongLc, 0.05);
        let res = solve(&OptProblem::new(Objective::MaxLongTerm, c, 3.0).with_grid(6, true)).unwrap();
        assert!(res.power.is_nondecreasing());
    }

    #[test]
    fn short_lc_solve_is_feasible() {
        let c = config(Protocol::InrFixed, 1, Scenario::ShortLc, 0.05);
        let res = solve(&OptProblem::new(Objective::MaxDelayLimited, c, 1.0).with_grid(8, true)).unwrap();
        let check = feasibility(&res.power, &res.rates, &c, 1.0, &OptProblem::new(Objective::MaxDelayLimited, c, 1.0).analytic).unwrap();
        assert!(check.feasible);
    }

    #[test]
    fn variable_length_search_covers_fixed_ladder() {
        let c = config(Protocol::InrVariable, 1, Scenario::LongLc, 0.0);
        let fixed = solve(&OptProblem::new(Objective::MaxLongTerm, c.with_protocol(Protocol::InrFixed), 1.0).with_grid(8, false)).unwrap();
        let mut p = OptProblem::new(Objective::MaxLongTerm, c, 1.0).with_grid(8, false);
        p.warm_start.push((fixed.power.clone(), fixed.rates.clone()));
        let var = solve(&p).unwrap();
        assert!(var.objective >= fixed.objective - 1e-12);
    }

    #[test]
    fn deterministic_results() {
        let c = config(Protocol::InrFixed, 1, Scenario::LongLc, 0.1);
        let p = OptProblem::new(Objective::MaxLongTerm, c, 1.0).with_grid(8, true);
        assert_eq!(solve(&p).unwrap(), solve(&p).unwrap());
    }

    #[test]
    fn feasibility_of_uniform_and_scaled() {
        let c = config(Protocol::Rtd, 1, Scenario::LongLc, 0.1);
        let o = AnalyticOptions::default();
        let rp = RatePolicy::fixed_length(0.8, 2);
        let f = feasibility(&PowerPolicy::uniform(2.0, 2), &rp, &c, 2.0, &o).unwrap();
        assert!(f.feasible && (f.avg_power - 2.0).abs() < 1e-12);
        let f = feasibility(&PowerPolicy::uniform(2.0 * (1.0 + 1e-6), 2), &rp, &c, 2.0, &o).unwrap();
        assert!(!f.feasible);
    }

    #[test]
    fn single_retransmission_power_by_hand() {
        // phi = (P1 + P2 Pr(not stopped after round 1)) / (1 + Pr(A_2))
        let c = config(Protocol::Rtd, 1, Scenario::LongLc, 0.15);
        let pp = PowerPolicy::new(vec![0.7, 2.3]);
        let rp = RatePolicy::fixed_length(0.9, 2);
        let f = c.fading;
        let c0 = 0.9_f64.exp_m1();
        let a1 = f.prob_below(c0 / 0.7);
        let pr1 = 1.0 - a1;
        let p = 0.15;
        let pr_a1 = pr1 * (1.0 - p) + a1 * p;
        let pr_a2 = 1.0 - pr_a1;
        let phi = (0.7 + 2.3 * pr_a2) / (pr_a1 + 2.0 * pr_a2);
        let got = feasibility(&pp, &rp, &c, 10.0, &AnalyticOptions::default()).unwrap().avg_power;
        assert!((got - phi).abs() < 1e-12, "{got} vs {phi}");
    }

    #[test]
    fn sweep_is_monotone_and_cached() {
        let c = config(Protocol::Rtd, 1, Scenario::LongLc, 0.05);
        let p = OptProblem::new(Objective::MinOutage, c, 1.0).with_fixed_rate(0.4).with_grid(6, true);
        let budgets: Vec<f64> = [20.0, 0.0, 10.0, 5.0, 15.0].iter().map(|d: &f64| 10f64.powf(d / 10.0)).collect();
        let mut cache = SweepCache::default();
        let res = pareto_sweep_cached(&p, &budgets, &mut cache).unwrap();
        assert_eq!(cache.len(), 5);
        let mut idx: Vec<usize> = (0..5).collect();
        idx.sort_by(|&a, &b| budgets[a].total_cmp(&budgets[b]));
        for w in idx.windows(2) {
            assert!(res[w[1]].objective <= res[w[0]].objective);
        }
        let json = serde_json::to_string(&cache).unwrap();
        let mut back: SweepCache = serde_json::from_str(&json).unwrap();
        assert_eq!(pareto_sweep_cached(&p, &budgets, &mut back).unwrap(), res);
        assert_eq!(back.len(), 5);
    }

    #[test]
    fn guards() {
        let c = config(Protocol::Rtd, 5, Scenario::LongLc, 0.0);
        assert!(matches!(solve(&OptProblem::new(Objective::MaxLongTerm, c, 1.0)), Err(OptError::TooManyRounds(5))));
        let c = config(Protocol::Rtd, 1, Scenario::LongLc, 0.0);
        assert!(matches!(solve(&OptProblem::new(Objective::MinOutage, c, 1.0)), Err(OptError::Invalid(_))));
    }
}
