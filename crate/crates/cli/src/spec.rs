//! Experiment specification: a flat `key = value` file.
//!
//! ```text
//! name = fig1
//! engine = both
//! rate = 0.4
//! grid.protocol = [rtd, inr]
//! grid.snr_db = [0:5:20]
//! grid.p_b = [0, 0.05, 0.1]
//! ```
//!
//! Lists accept `a:step:b` ranges (inclusive). `#` starts a comment.

use std::fmt;
use std::path::{Path, PathBuf};

use noisy_arq::model::db_to_linear;
use noisy_arq::optimizer::Objective;
use noisy_arq::{FadingDistribution, Protocol, Scenario};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Analytic,
    MonteCarlo,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerAllocation {
    Uniform,
    Optimal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingFamily {
    Nakagami,
    Deterministic,
}

/// Protocol family as named in specs and output; INR splits by coding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Basic,
    Rtd,
    Inr,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Basic => "basic",
            Family::Rtd => "rtd",
            Family::Inr => "inr",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coding {
    Fixed,
    Variable,
}

impl Coding {
    pub fn name(self) -> &'static str {
        match self {
            Coding::Fixed => "fixed",
            Coding::Variable => "variable",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub protocol: Vec<Family>,
    pub scenario: Vec<Scenario>,
    pub coding: Vec<Coding>,
    pub max_retx: Vec<usize>,
    pub n_shape: Vec<f64>,
    pub w_scale: Vec<f64>,
    pub snr_db: Vec<f64>,
    pub p_b: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            protocol: vec![Family::Rtd],
            scenario: vec![Scenario::LongLc],
            coding: vec![Coding::Fixed],
            max_retx: vec![1],
            n_shape: vec![2.0],
            w_scale: vec![1.0],
            snr_db: vec![0.0],
            p_b: vec![0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub engine: Engine,
    /// `None` evaluates the uniform policy at `rate`.
    pub objective: Option<Objective>,
    pub power_allocation: PowerAllocation,
    pub rate: Option<f64>,
    pub mc_packets: u64,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub grid_resolution: usize,
    pub refine: bool,
    pub fading: FadingFamily,
    pub fixed_gain: f64,
    pub beta: f64,
    pub grid: Grid,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            engine: Engine::Analytic,
            objective: None,
            power_allocation: PowerAllocation::Uniform,
            rate: None,
            mc_packets: 1_000_000,
            seed: 1,
            output: None,
            grid_resolution: 16,
            refine: true,
            fading: FadingFamily::Nakagami,
            fixed_gain: 1.0,
            beta: 5.0,
            grid: Grid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecError {
    pub line: usize,
    pub field: String,
    pub message: String,
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}: {}", self.line, self.field, self.message)
    }
}

impl std::error::Error for SpecError {}

fn err(line: usize, field: &str, message: impl Into<String>) -> SpecError {
    SpecError {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn split_list(raw: &str) -> Vec<String> {
    let t = raw.trim();
    let inner = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')).unwrap_or(t);
    inner
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_f64(line: usize, field: &str, s: &str) -> Result<f64, SpecError> {
    let v = match s {
        "inf" | "+inf" => f64::INFINITY,
        _ => s.parse::<f64>().map_err(|_| err(line, field, format!("not a number: {s:?}")))?,
    };
    if v.is_nan() {
        return Err(err(line, field, "NaN"));
    }
    Ok(v)
}

/// Expands `a:step:b` (inclusive of `b` up to rounding) or parses a number.
fn parse_numbers(line: usize, field: &str, raw: &str) -> Result<Vec<f64>, SpecError> {
    let mut out = Vec::new();
    for item in split_list(raw) {
        let parts: Vec<&str> = item.split(':').map(str::trim).collect();
        match parts.as_slice() {
            [one] => out.push(parse_f64(line, field, one)?),
            [a, step, b] => {
                let (a, step, b) = (parse_f64(line, field, a)?, parse_f64(line, field, step)?, parse_f64(line, field, b)?);
                if !(step > 0.0) || b < a || !(a.is_finite() && b.is_finite()) {
                    return Err(err(line, field, format!("bad range {item:?}")));
                }
                let count = ((b - a) / step + 1e-9).floor() as usize;
                for i in 0..=count {
                    // round to kill drift such as 0.30000000000000004
                    let v = a + step * i as f64;
                    out.push((v * 1e12).round() / 1e12);
                }
            }
            _ => return Err(err(line, field, format!("bad list item {item:?}"))),
        }
    }
    if out.is_empty() {
        return Err(err(line, field, "empty list"));
    }
    Ok(out)
}

fn parse_words<T>(line: usize, field: &str, raw: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, SpecError> {
    let items = split_list(raw);
    if items.is_empty() {
        return Err(err(line, field, "empty list"));
    }
    items
        .iter()
        .map(|s| f(&s.to_ascii_lowercase()).ok_or_else(|| err(line, field, format!("unknown value {s:?}"))))
        .collect()
}

fn parse_bool(line: usize, field: &str, s: &str) -> Result<bool, SpecError> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(err(line, field, format!("not a boolean: {s:?}"))),
    }
}

pub fn parse_family(s: &str) -> Option<Family> {
    match s {
        "basic" => Some(Family::Basic),
        "rtd" => Some(Family::Rtd),
        "inr" => Some(Family::Inr),
        _ => None,
    }
}

pub fn parse_scenario(s: &str) -> Option<Scenario> {
    match s {
        "long" | "long_lc" => Some(Scenario::LongLc),
        "short" | "short_lc" => Some(Scenario::ShortLc),
        _ => None,
    }
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        let mut spec = ExperimentSpec::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(line, content, "expected key = value"))?;
            let key = key.trim();
            let value = value.trim();
            let lower = key.to_ascii_lowercase();
            let one = |f: &str| -> Result<f64, SpecError> { parse_f64(line, f, value) };
            match lower.as_str() {
                "name" => spec.name = value.to_string(),
                "engine" => {
                    spec.engine = match value.to_ascii_lowercase().as_str() {
                        "analytic" => Engine::Analytic,
                        "montecarlo" | "monte_carlo" | "mc" => Engine::MonteCarlo,
                        "both" => Engine::Both,
                        _ => return Err(err(line, key, format!("unknown engine {value:?}"))),
                    }
                }
                "objective" => {
                    spec.objective = match value.to_ascii_lowercase().as_str() {
                        "none" => None,
                        "max_long_term" => Some(Objective::MaxLongTerm),
                        "max_delay_limited" => Some(Objective::MaxDelayLimited),
                        "min_outage" => Some(Objective::MinOutage),
                        _ => return Err(err(line, key, format!("unknown objective {value:?}"))),
                    }
                }
                "power_allocation" => {
                    spec.power_allocation = match value.to_ascii_lowercase().as_str() {
                        "uniform" => PowerAllocation::Uniform,
                        "optimal" => PowerAllocation::Optimal,
                        _ => return Err(err(line, key, format!("unknown power allocation {value:?}"))),
                    }
                }
                "rate" => spec.rate = Some(one(key)?),
                "mc_packets" => {
                    spec.mc_packets = value.replace('_', "").parse().map_err(|_| err(line, key, "not an integer"))?;
                }
                "seed" => spec.seed = value.parse().map_err(|_| err(line, key, "not an integer"))?,
                "output" => spec.output = Some(PathBuf::from(value)),
                "grid_resolution" => {
                    spec.grid_resolution = value.parse().map_err(|_| err(line, key, "not an integer"))?;
                }
                "refine" => spec.refine = parse_bool(line, key, value)?,
                "fading" => {
                    spec.fading = match value.to_ascii_lowercase().as_str() {
                        "nakagami" => FadingFamily::Nakagami,
                        "deterministic" => FadingFamily::Deterministic,
                        _ => return Err(err(line, key, format!("unknown fading {value:?}"))),
                    }
                }
                "fixed_gain" => spec.fixed_gain = one(key)?,
                "beta" => spec.beta = one(key)?,
                "grid.protocol" => spec.grid.protocol = parse_words(line, key, value, parse_family)?,
                "grid.scenario" => spec.grid.scenario = parse_words(line, key, value, parse_scenario)?,
                "grid.coding" => {
                    spec.grid.coding = parse_words(line, key, value, |s| match s {
                        "fixed" => Some(Coding::Fixed),
                        "variable" => Some(Coding::Variable),
                        _ => None,
                    })?
                }
                "grid.m" => {
                    spec.grid.max_retx = parse_numbers(line, key, value)?
                        .into_iter()
                        .map(|v| {
                            if v >= 0.0 && v.fract() == 0.0 {
                                Ok(v as usize)
                            } else {
                                Err(err(line, key, format!("not a retransmission count: {v}")))
                            }
                        })
                        .collect::<Result<_, _>>()?
                }
                "grid.n" => spec.grid.n_shape = parse_numbers(line, key, value)?,
                "grid.w" => spec.grid.w_scale = parse_numbers(line, key, value)?,
                "grid.snr_db" => spec.grid.snr_db = parse_numbers(line, key, value)?,
                "grid.p_b" => spec.grid.p_b = parse_numbers(line, key, value)?,
                _ => return Err(err(line, key, "unknown key")),
            }
        }
        spec.check()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e.to_string()))?;
        Self::parse(&text).map_err(CliError::Spec)
    }

    fn check(&self) -> Result<(), SpecError> {
        let g = &self.grid;
        if g.p_b.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(err(0, "grid.p_b", "values must lie in [0, 1]"));
        }
        if g.n_shape.iter().chain(&g.w_scale).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(err(0, "grid.N/grid.w", "values must be positive"));
        }
        if g.max_retx.iter().any(|&m| m > noisy_arq::optimizer::MAX_RETX_LIMIT) {
            return Err(err(0, "grid.M", "at most 4 retransmissions"));
        }
        if self.engine != Engine::Analytic && self.mc_packets < noisy_arq::montecarlo::MIN_PACKETS {
            return Err(err(0, "mc_packets", "at least 1000 packets"));
        }
        if let Some(r) = self.rate {
            if !(r > 0.0 && r.is_finite()) {
                return Err(err(0, "rate", "must be positive"));
            }
        }
        if self.objective == Some(Objective::MinOutage) && self.rate.is_none() {
            return Err(err(0, "rate", "min_outage needs a fixed rate"));
        }
        if self.fading == FadingFamily::Deterministic && !(self.fixed_gain >= 0.0 && self.fixed_gain.is_finite()) {
            return Err(err(0, "fixed_gain", "must be nonnegative"));
        }
        if self.grid_resolution == 0 {
            return Err(err(0, "grid_resolution", "must be positive"));
        }
        if self.beta < 0.0 || self.beta.is_nan() {
            return Err(err(0, "beta", "must be nonnegative"));
        }
        Ok(())
    }

    /// Hash of every field that affects results.
    pub fn result_hash(&self) -> String {
        let mut s = self.clone();
        s.name = String::new();
        s.output = None;
        sha_hex(&serde_json::to_string(&s).expect("spec serializes"))
    }

    /// Cells in output order, and the number of grid combinations skipped as
    /// unsupported.
    pub fn cells(&self) -> (Vec<Cell>, usize) {
        let g = &self.grid;
        let mut cells = Vec::new();
        let mut skipped = 0;
        let fading_axis: Vec<(Option<f64>, f64)> = match self.fading {
            FadingFamily::Nakagami => g
                .n_shape
                .iter()
                .flat_map(|&n| g.w_scale.iter().map(move |&w| (Some(n), w)))
                .collect(),
            FadingFamily::Deterministic => vec![(None, self.fixed_gain)],
        };
        for &family in &g.protocol {
            for &scenario in &g.scenario {
                for &coding in &g.coding {
                    let protocol = match (family, coding) {
                        (Family::Basic, Coding::Fixed) => Protocol::Basic,
                        (Family::Rtd, Coding::Fixed) => Protocol::Rtd,
                        (Family::Inr, Coding::Fixed) => Protocol::InrFixed,
                        (Family::Inr, Coding::Variable) if scenario == Scenario::LongLc => Protocol::InrVariable,
                        _ => {
                            skipped += g.max_retx.len() * fading_axis.len() * g.snr_db.len() * g.p_b.len();
                            continue;
                        }
                    };
                    for &m in &g.max_retx {
                        for &(n, w) in &fading_axis {
                            for &snr_db in &g.snr_db {
                                for &p_b in &g.p_b {
                                    cells.push(Cell {
                                        index: cells.len(),
                                        family,
                                        protocol,
                                        scenario,
                                        coding,
                                        max_retx: m,
                                        n_shape: n,
                                        w_scale: w,
                                        snr_db,
                                        p_b,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        (cells, skipped)
    }
}

pub fn sha_hex(s: &str) -> String {
    Sha256::digest(s.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub family: Family,
    pub protocol: Protocol,
    pub scenario: Scenario,
    pub coding: Coding,
    pub max_retx: usize,
    /// `None` for the deterministic channel.
    pub n_shape: Option<f64>,
    /// Nakagami `w`, or the fixed gain of the deterministic channel.
    pub w_scale: f64,
    pub snr_db: f64,
    pub p_b: f64,
}

impl Cell {
    pub fn fading(&self) -> FadingDistribution {
        match self.n_shape {
            Some(n) => FadingDistribution::nakagami(n, self.w_scale).expect("checked by the spec"),
            None => FadingDistribution::deterministic(self.w_scale).expect("checked by the spec"),
        }
    }

    pub fn config(&self) -> noisy_arq::ArqConfig {
        noisy_arq::ArqConfig::new(self.protocol, self.max_retx, self.scenario, self.p_b, self.fading())
    }

    pub fn power(&self) -> f64 {
        db_to_linear(self.snr_db)
    }

    pub fn n_label(&self) -> String {
        match self.n_shape {
            Some(n) => n.to_string(),
            None => "det".into(),
        }
    }

    /// Canonical coordinates, independent of grid order.
    pub fn key(&self) -> String {
        format!(
            "protocol={};scenario={};coding={};M={};N={};w={};snr_db={};p_b={}",
            self.family.name(),
            self.scenario.name(),
            self.coding.name(),
            self.max_retx,
            self.n_label(),
            self.w_scale,
            self.snr_db,
            self.p_b
        )
    }

    /// Seed for this cell's random streams.
    pub fn seed(&self, master: u64) -> u64 {
        let digest = Sha256::digest(format!("{master}|{}", self.key()).as_bytes());
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }
}
