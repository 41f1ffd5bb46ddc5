//! Random instances and benchmark sweeps.
//!
//! Instances come from ChaCha8 seeded with `seed`. Stream 0 draws the routing
//! matrix link by link, user by user; stream 1 draws the capacities; stream 2
//! redraws any user column that came out empty. Uniform variates are
//! `(next_u64 >> 11) * 2^-53`, an entry is 1 when its variate is below `p`,
//! and `b_j = b_min + (b_max - b_min) u`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ellipsoid::{em_run, Direction, EmConfig};
use crate::error::{Error, Result};
use crate::mirror::{run_alg1, run_alg2, MdConfig, MdReport, Mode};
use crate::problem::{NumProblem, UtilitySpec};
use crate::report::{Algorithm, ResultFile};

pub const MAX_REDRAWS: usize = 1000;

const MATRIX_STREAM: u64 = 0;
const CAPACITY_STREAM: u64 = 1;
const REPAIR_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub n: usize,
    pub m: usize,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_b_min")]
    pub b_min: f64,
    #[serde(default = "default_b_max")]
    pub b_max: f64,
    #[serde(default)]
    pub utility: UtilitySpec,
    pub seed: u64,
}

fn default_p() -> f64 {
    0.5
}

fn default_b_min() -> f64 {
    0.1
}

fn default_b_max() -> f64 {
    0.4
}

impl InstanceSpec {
    /// The experiment distribution: `p = 0.5`, `b ~ U[0.1, 0.4]`, log utilities.
    pub fn new(n: usize, m: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            p: default_p(),
            b_min: default_b_min(),
            b_max: default_b_max(),
            utility: UtilitySpec::Log,
            seed,
        }
    }

    pub fn with_capacities(mut self, b_min: f64, b_max: f64) -> Self {
        self.b_min = b_min;
        self.b_max = b_max;
        self
    }

    pub fn with_density(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidConfig(format!(
                "instance needs n, m >= 1 (got n = {}, m = {})",
                self.n, self.m
            )));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "density p = {} must lie in (0, 1)",
                self.p
            )));
        }
        if !(self.b_min > 0.0 && self.b_min <= self.b_max && self.b_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "capacity range [{}, {}] must satisfy 0 < b_min <= b_max",
                self.b_min, self.b_max
            )));
        }
        self.utility.validate(self.n)
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn generate_instance(spec: &InstanceSpec) -> Result<NumProblem> {
    spec.validate()?;
    let (n, m) = (spec.n, spec.m);
    let stream = |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(s);
        rng
    };

    let mut rng = stream(MATRIX_STREAM);
    let mut dense = vec![vec![false; n]; m];
    for row in dense.iter_mut() {
        for entry in row.iter_mut() {
            *entry = uniform(&mut rng) < spec.p;
        }
    }

    let mut repair = stream(REPAIR_STREAM);
    for k in 0..n {
        let mut attempts = 0;
        while dense.iter().all(|row| !row[k]) {
            if attempts == MAX_REDRAWS {
                return Err(Error::GenerationFailed { user: k, attempts });
            }
            for row in dense.iter_mut() {
                row[k] = uniform(&mut repair) < spec.p;
            }
            attempts += 1;
        }
    }

    let mut rng = stream(CAPACITY_STREAM);
    let b = (0..m)
        .map(|_| spec.b_min + (spec.b_max - spec.b_min) * uniform(&mut rng))
        .collect();
    let rows = dense
        .iter()
        .map(|row| (0..n).filter(|&k| row[k]).collect())
        .collect();
    Ok(NumProblem::from_rows(n, rows, b, spec.utility.clone())?.with_seed(spec.seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub n: usize,
    pub m: usize,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdSettings {
    pub enabled: bool,
    pub theta0: Option<f64>,
    pub mode: Mode,
    pub max_iters: Option<u64>,
}

impl Default for MdSettings {
    fn default() -> Self {
        Self {
            enabled: false,
            theta0: None,
            mode: Mode::LogShift,
            max_iters: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EmSettings {
    pub enabled: bool,
    pub radius: Option<f64>,
    pub direction: Direction,
    pub max_iters: Option<u64>,
}

/// Sweep description. The instance for repetition `r` of a cell uses seed
/// `seed + r`, so cells with the same `(n, m)` share instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub grid: Vec<GridCell>,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_b_min")]
    pub b_min: f64,
    #[serde(default = "default_b_max")]
    pub b_max: f64,
    #[serde(default)]
    pub utility: UtilitySpec,
    #[serde(default)]
    pub md1: MdSettings,
    #[serde(default = "enabled_md")]
    pub md2: MdSettings,
    #[serde(default = "enabled_em")]
    pub em: EmSettings,
    #[serde(default)]
    pub format: Option<ReportFormat>,
}

fn one() -> usize {
    1
}

fn enabled_md() -> MdSettings {
    MdSettings {
        enabled: true,
        ..MdSettings::default()
    }
}

fn enabled_em() -> EmSettings {
    EmSettings {
        enabled: true,
        ..EmSettings::default()
    }
}

impl BenchConfig {
    /// Runs A2 and EM over `grid` once, on the experiment distribution.
    pub fn new(grid: Vec<GridCell>) -> Self {
        Self {
            grid,
            repetitions: 1,
            seed: 0,
            p: default_p(),
            b_min: default_b_min(),
            b_max: default_b_max(),
            utility: UtilitySpec::Log,
            md1: MdSettings::default(),
            md2: enabled_md(),
            em: enabled_em(),
            format: None,
        }
    }

    /// The full grid: `n in {50, 100, 200}`, `m in {100, 150}`, `eps in {6e-4, 3e-4, 2e-4}`.
    pub fn full_grid() -> Self {
        let mut grid = Vec::new();
        for eps in [6e-4, 3e-4, 2e-4] {
            for n in [50, 100, 200] {
                for m in [100, 150] {
                    grid.push(GridCell { n, m, eps });
                }
            }
        }
        Self::new(grid)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidConfig("benchmark grid is empty".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig(
                "repetitions must be at least 1".into(),
            ));
        }
        if !(self.md1.enabled || self.md2.enabled || self.em.enabled) {
            return Err(Error::InvalidConfig("no algorithm enabled".into()));
        }
        for cell in &self.grid {
            if !(cell.eps > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "grid eps = {} must be positive",
                    cell.eps
                )));
            }
            self.spec(cell, 0).validate()?;
        }
        Ok(())
    }

    pub fn spec(&self, cell: &GridCell, repetition: usize) -> InstanceSpec {
        InstanceSpec {
            n: cell.n,
            m: cell.m,
            p: self.p,
            b_min: self.b_min,
            b_max: self.b_max,
            utility: self.utility.clone(),
            seed: self.seed.wrapping_add(repetition as u64),
        }
    }

    pub fn algorithms(&self) -> Vec<Algorithm> {
        let mut out = Vec::new();
        if self.md1.enabled {
            out.push(Algorithm::Md1);
        }
        if self.md2.enabled {
            out.push(Algorithm::Md2);
        }
        if self.em.enabled {
            out.push(Algorithm::Em);
        }
        out
    }
}

/// One solver run of a sweep. Solver fields are empty when `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub n: usize,
    pub m: usize,
    pub p: f64,
    pub b_min: f64,
    pub b_max: f64,
    pub utility_kind: String,
    pub seed: u64,
    pub repetition: usize,
    pub algorithm: Algorithm,
    pub eps: f64,
    pub iterations: Option<u64>,
    pub productive: Option<u64>,
    pub wall_time_ms: Option<f64>,
    pub objective: Option<f64>,
    pub utility: Option<f64>,
    pub max_violation: Option<f64>,
    pub stop_reason: Option<String>,
    pub error: Option<String>,
}

impl ResultRecord {
    fn new(spec: &InstanceSpec, repetition: usize, algorithm: Algorithm, eps: f64) -> Self {
        Self {
            n: spec.n,
            m: spec.m,
            p: spec.p,
            b_min: spec.b_min,
            b_max: spec.b_max,
            utility_kind: spec.utility.kind().to_string(),
            seed: spec.seed,
            repetition,
            algorithm,
            eps,
            iterations: None,
            productive: None,
            wall_time_ms: None,
            objective: None,
            utility: None,
            max_violation: None,
            stop_reason: None,
            error: None,
        }
    }

    fn fill(mut self, r: &ResultFile) -> Self {
        self.iterations = Some(r.iters);
        self.productive = Some(r.productive);
        self.wall_time_ms = Some(r.wall_time_ms);
        self.objective = r.objective;
        self.utility = r.utility;
        self.max_violation = Some(r.max_violation);
        self.stop_reason = Some(r.stop_reason.as_str().to_string());
        self
    }

    fn failed(mut self, e: &Error) -> Self {
        self.error = Some(e.to_string());
        self
    }
}

/// Runs one solver on one instance, timing only the solver call.
pub fn run_solver(
    cfg: &BenchConfig,
    problem: &NumProblem,
    algorithm: Algorithm,
    eps: f64,
) -> Result<ResultFile> {
    match algorithm {
        Algorithm::Md1 | Algorithm::Md2 => {
            let s = if algorithm == Algorithm::Md1 {
                &cfg.md1
            } else {
                &cfg.md2
            };
            let mut md = MdConfig::new(problem, eps, s.mode);
            if let Some(t) = s.theta0 {
                md = md.with_theta0(t);
            }
            if let Some(c) = s.max_iters {
                md = md.with_cap(c);
            }
            if s.mode == Mode::LogShift && !md.shift_feasible(problem) {
                eprintln!(
                    "warning: shifted domain x >= {} misses the capacity set (n = {}, m = {}); running anyway",
                    md.floor(problem),
                    problem.n(),
                    problem.m()
                );
                md = md.allowing_empty_shift();
            }
            let report: MdReport = if algorithm == Algorithm::Md1 {
                run_alg1(problem, &md)?
            } else {
                run_alg2(problem, &md)?
            };
            Ok(ResultFile::from(&report))
        }
        Algorithm::Em => {
            let mut em = EmConfig::new(problem, eps).with_direction(cfg.em.direction);
            if let Some(r) = cfg.em.radius {
                em = em.with_radius(r);
            }
            if let Some(c) = cfg.em.max_iters {
                em = em.with_max_iters(c);
            }
            Ok(ResultFile::from(&em_run(problem, &em)?))
        }
    }
}

/// Runs the sweep on `parallel` worker threads. Records come back in grid
/// order, then repetition, then algorithm; failures are recorded, not raised.
pub fn run_bench(cfg: &BenchConfig, parallel: usize) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize, Algorithm)> = cfg
        .grid
        .iter()
        .enumerate()
        .flat_map(|(c, _)| {
            (0..cfg.repetitions)
                .flat_map(move |r| cfg.algorithms().into_iter().map(move |a| (c, r, a)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let records = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, r, alg)| {
                let cell = &cfg.grid[c];
                let spec = cfg.spec(cell, r);
                let record = ResultRecord::new(&spec, r, alg, cell.eps);
                let outcome = generate_instance(&spec).and_then(|p| {
                    let t = Instant::now();
                    let res = run_solver(cfg, &p, alg, cell.eps);
                    let elapsed = t.elapsed().as_secs_f64() * 1e3;
                    res.map(|mut f| {
                        f.wall_time_ms = f.wall_time_ms.min(elapsed);
                        f
                    })
                });
                match outcome {
                    Ok(f) => record.fill(&f),
                    Err(e) => record.failed(&e),
                }
            })
            .collect()
    });
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!(
                "unknown report format {other:?} (expected csv, json or markdown)"
            )),
        }
    }
}

pub fn emit_report(records: &[ResultRecord], format: ReportFormat) -> Result<String> {
    if records.is_empty() {
        return Err(Error::Usage("no benchmark records to report".into()));
    }
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(records)?),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in records {
                w.serialize(r)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
        }
        ReportFormat::Markdown => Ok(markdown(records)),
    }
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn parse_json(text: &str) -> Result<Vec<ResultRecord>> {
    Ok(serde_json::from_str(text)?)
}

/// One table per `eps`, one column per `(n, m)`, and an Iter and a Time row
/// per algorithm. Repetitions are averaged; failed runs show as `err`.
fn markdown(records: &[ResultRecord]) -> String {
    let mut by_eps: BTreeMap<u64, Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        // descending eps, like the published tables
        by_eps
            .entry(u64::MAX - r.eps.to_bits())
            .or_default()
            .push(r);
    }
    let mut out = String::new();
    for group in by_eps.values() {
        let eps = group[0].eps;
        let mut cells: Vec<(usize, usize)> = group.iter().map(|r| (r.n, r.m)).collect();
        cells.sort_unstable();
        cells.dedup();
        let mut algs: Vec<Algorithm> = group.iter().map(|r| r.algorithm).collect();
        algs.sort_unstable();
        algs.dedup();

        let _ = writeln!(out, "### eps = {eps:e}\n");
        out.push_str("| | n |");
        for (n, _) in &cells {
            let _ = write!(out, " {n} |");
        }
        out.push_str("\n|---|---|");
        out.push_str(&"---:|".repeat(cells.len()));
        out.push_str("\n| | m |");
        for (_, m) in &cells {
            let _ = write!(out, " {m} |");
        }
        out.push('\n');
        for alg in algs {
            for (label, time) in [("Iter", false), ("Time, s", true)] {
                let _ = write!(out, "| {} | {label} |", alg.label());
                for &(n, m) in &cells {
                    let runs: Vec<&&ResultRecord> = group
                        .iter()
                        .filter(|r| r.algorithm == alg && r.n == n && r.m == m)
                        .collect();
                    let vals: Option<Vec<f64>> = runs
                        .iter()
                        .map(|r| {
                            if time {
                                r.wall_time_ms.map(|t| t / 1e3)
                            } else {
                                r.iterations.map(|i| i as f64)
                            }
                        })
                        .collect();
                    match vals {
                        _ if runs.is_empty() => out.push_str(" - |"),
                        Some(v) => {
                            let mean = v.iter().sum::<f64>() / v.len() as f64;
                            if time {
                                let _ = write!(out, " {mean:.2} |");
                            } else {
                                let _ = write!(out, " {} |", mean.round() as u64);
                            }
                        }
                        None => out.push_str(" err |"),
                    }
                }
                out.push('\n');
            }
        }
        out.push('\n');
    }
    out
}
