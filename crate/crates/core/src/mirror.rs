//! Euclidean mirror descent with functional constraints over the nonnegative
//! orthant.
//!
//! Both variants alternate between *productive* steps, taken along the
//! objective gradient when every link passes `g_j(x) <= eps * ||C_j||_2`, and
//! *unproductive* steps, taken against the gradient `C_j` of a failing link.
//!
//! * [`run_alg1`] runs a fixed number of steps with normalized step sizes and
//!   returns the best productive iterate.
//! * [`run_alg2`] uses `h = eps / ||grad f||^2` on productive steps, stops as
//!   soon as `sum_I 1/||grad f(x^k)||^2 + |J| >= 2 theta0^2 / eps^2`, and
//!   returns the step-weighted average of productive iterates.
//!
//! Logarithmic utilities are not Lipschitz near zero, so [`Mode::LogShift`]
//! keeps every rate at or above `eps * n`. In that mode the first variant
//! uses the squared-accuracy step sizes `eps^2 / ||.||` and runs
//! `ceil(2 theta0^2 / eps^4)` steps; the second keeps its own rules.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::NumProblem;
use crate::report::{Algorithm, StopReason};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Iterates live in the nonnegative orthant; the start defaults to `0`.
    Standard,
    /// Iterates are kept at `x_k >= eps * n`; the start defaults to that floor.
    #[default]
    LogShift,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Standard => "standard",
            Mode::LogShift => "log_shift",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "standard" => Ok(Mode::Standard),
            "log_shift" | "log-shift" => Ok(Mode::LogShift),
            other => Err(format!(
                "unknown mode {other:?} (expected standard or log-shift)"
            )),
        }
    }
}

/// Which failing link an unproductive step moves against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ViolationPolicy {
    #[default]
    SmallestIndex,
    /// Largest `g_j(x)` among failing links, ties to the smaller index.
    MostViolated,
}

/// Run parameters shared by both variants.
#[derive(Debug, Clone, PartialEq)]
pub struct MdConfig {
    pub eps: f64,
    /// Bound with `0.5 * ||x0 - x*||^2 <= theta0^2`.
    pub theta0: f64,
    pub mode: Mode,
    /// Starting point; projected onto the mode's domain before the first step.
    pub start: Option<Vec<f64>>,
    /// Hard stop. Defaults to four times the theoretical step count.
    pub max_iters_cap: Option<u64>,
    /// Record a [`StepTrace`] every this many steps.
    pub trace_every: Option<u64>,
    pub policy: ViolationPolicy,
    /// Accept a log-shift floor that leaves no feasible point. The run then
    /// only takes unproductive steps and reports `no_productive_steps`.
    pub allow_empty_shift: bool,
}

impl MdConfig {
    /// Config with the problem-derived default `theta0` (see [`default_theta0`]).
    pub fn new(problem: &NumProblem, eps: f64, mode: Mode) -> Self {
        let mut cfg = MdConfig {
            eps,
            theta0: 1.0,
            mode,
            start: None,
            max_iters_cap: None,
            trace_every: None,
            policy: ViolationPolicy::default(),
            allow_empty_shift: false,
        };
        cfg.theta0 = default_theta0(problem, &cfg.start_point(problem));
        cfg
    }

    pub fn with_theta0(mut self, theta0: f64) -> Self {
        self.theta0 = theta0;
        self
    }

    pub fn with_start(mut self, start: Vec<f64>) -> Self {
        self.start = Some(start);
        self
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.max_iters_cap = Some(cap);
        self
    }

    pub fn with_trace_every(mut self, every: u64) -> Self {
        self.trace_every = Some(every);
        self
    }

    pub fn with_policy(mut self, policy: ViolationPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn allowing_empty_shift(mut self) -> Self {
        self.allow_empty_shift = true;
        self
    }

    /// Lower bound on every rate: `0` or `eps * n`.
    pub fn floor(&self, problem: &NumProblem) -> f64 {
        match self.mode {
            Mode::Standard => 0.0,
            Mode::LogShift => self.eps * problem.n() as f64,
        }
    }

    pub fn start_point(&self, problem: &NumProblem) -> Vec<f64> {
        let floor = self.floor(problem);
        match &self.start {
            Some(s) => project(s, floor),
            None => vec![floor; problem.n()],
        }
    }

    /// Whether `{x >= eps*n} ∩ {Cx <= b}` is nonempty, i.e.
    /// `eps * n * |row j| < b_j` for every link.
    pub fn shift_feasible(&self, problem: &NumProblem) -> bool {
        let floor = self.floor(problem);
        (0..problem.m())
            .all(|j| floor * (problem.routing().row(j).len() as f64) < problem.capacities()[j])
    }

    pub fn validate(&self, problem: &NumProblem) -> Result<()> {
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "eps = {} must be positive",
                self.eps
            )));
        }
        if !(self.theta0.is_finite() && self.theta0 > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "theta0 = {} must be positive",
                self.theta0
            )));
        }
        if let Some(s) = &self.start {
            if s.len() != problem.n() {
                return Err(Error::Dimension {
                    what: "start point",
                    got: s.len(),
                    expected: problem.n(),
                });
            }
        }
        if self.mode == Mode::Standard && self.start_point(problem).iter().any(|v| *v <= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "standard mode starts at x = 0, outside the domain of {} utilities; use log-shift mode or a positive start point",
                problem.utility().kind()
            )));
        }
        if self.trace_every == Some(0) {
            return Err(Error::InvalidConfig(
                "trace_every must be at least 1".into(),
            ));
        }
        if self.mode == Mode::LogShift && !self.allow_empty_shift && !self.shift_feasible(problem) {
            return Err(Error::InvalidConfig(format!(
                "log-shift floor eps*n = {} leaves no feasible point: it needs eps*n*|row j| < b_j on every link",
                self.floor(problem)
            )));
        }
        Ok(())
    }
}

/// Problem-derived `theta0` for a start point `x0`.
///
/// Every feasible rate satisfies `0 <= x*_k <= c_k`, where `c_k` is the
/// smallest capacity on user `k`'s links, so
/// `||x0 - x*||^2 <= sum_k max(x0_k, c_k - x0_k)^2`. For any set of links
/// covering every user, `||x*||^2 <= sum_{j in cover} <C_j, x*>^2 <= sum b_j^2`,
/// and with `x0, x* >= 0` that gives `||x0 - x*||^2 <= ||x0||^2 + sum b_j^2`.
/// The cover is chosen greedily and the smaller of the two bounds is used.
pub fn default_theta0(problem: &NumProblem, x0: &[f64]) -> f64 {
    let box_bound: f64 = x0
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let c = problem.rate_bound(k);
            x.max(c - x).powi(2)
        })
        .sum();
    let cover_bound = x0.iter().map(|x| x * x).sum::<f64>() + cover_weight(problem);
    (0.5 * box_bound.min(cover_bound)).sqrt()
}

/// Weight `sum b_j^2` of a greedy cover of the users by links.
fn cover_weight(problem: &NumProblem) -> f64 {
    let routing = problem.routing();
    let b = problem.capacities();
    let mut covered = vec![false; problem.n()];
    let mut remaining = problem.n();
    let mut weight = 0.0;
    while remaining > 0 {
        let mut pick: Option<(usize, f64, usize)> = None;
        for j in 0..problem.m() {
            let new = routing.row(j).iter().filter(|&&k| !covered[k]).count();
            if new == 0 {
                continue;
            }
            let cost = b[j] * b[j] / new as f64;
            if pick.is_none_or(|(_, c, _)| cost < c) {
                pick = Some((j, cost, new));
            }
        }
        // every user crosses some link, so a pick always exists
        let (j, _, new) = pick.expect("routing matrix has no empty column");
        for &k in routing.row(j) {
            covered[k] = true;
        }
        remaining -= new;
        weight += b[j] * b[j];
    }
    weight
}

/// Componentwise `max(x_k, floor)`.
pub fn project(x: &[f64], floor: f64) -> Vec<f64> {
    x.iter().map(|&v| v.max(floor)).collect()
}

/// One sampled step of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub iteration: u64,
    pub productive: bool,
    /// Link stepped against on an unproductive step.
    pub link: Option<usize>,
    /// Step size `h_k`.
    pub step: f64,
    /// `||grad f(x^k)||_2` on productive steps, `||C_j||_2` otherwise.
    pub grad_norm: f64,
    /// `f(x^k)` on productive steps.
    pub objective: Option<f64>,
    /// `x^k`, the point the step was taken from.
    pub point: Vec<f64>,
    /// `sum_I 1/||grad f||^2 + |J|` after this step.
    pub stop_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdReport {
    pub algorithm: Algorithm,
    pub eps: f64,
    pub theta0: f64,
    pub mode: Mode,
    /// Best productive iterate (first variant) or weighted productive average (second).
    pub solution: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub total_iters: u64,
    pub productive_count: u64,
    pub unproductive_count: u64,
    /// Unproductive steps per link.
    pub link_histogram: Vec<u64>,
    pub wall_time: Duration,
    pub stop_reason: StopReason,
    /// Right-hand side of the stopping rule: `2 theta0^2 / eps^2` (`/ eps^4` for the
    /// first variant in log-shift mode).
    pub threshold: f64,
    /// Left-hand side of the second variant's stopping rule at exit.
    pub stop_sum: f64,
    /// Largest `||grad f||_2` seen on a productive step (the realized `M_f`).
    pub max_productive_grad_norm: f64,
    /// Sum of productive step sizes.
    pub productive_step_sum: f64,
    pub trace: Vec<StepTrace>,
}

impl MdReport {
    /// `ceil(2 theta0^2 max(1, M_f^2) / eps^2)` with the realized `M_f`: the
    /// step count by which the second variant's rule is guaranteed to fire.
    pub fn iteration_bound(&self) -> u64 {
        let mf2 = self.max_productive_grad_norm.powi(2);
        (2.0 * self.theta0 * self.theta0 * mf2.max(1.0) / (self.eps * self.eps)).ceil() as u64
    }

    pub fn utility(&self) -> f64 {
        -self.objective
    }
}

/// Fixed-length mirror descent returning the best productive iterate.
pub fn run_alg1(problem: &NumProblem, cfg: &MdConfig) -> Result<MdReport> {
    Runner::new(problem, cfg, Algorithm::Md1)?.run()
}

/// Adaptive-stopping mirror descent returning the weighted productive average.
pub fn run_alg2(problem: &NumProblem, cfg: &MdConfig) -> Result<MdReport> {
    Runner::new(problem, cfg, Algorithm::Md2)?.run()
}

/// `v_f(y, x*) = <grad f(y) / ||grad f(y)||, y - x*>`, or `0` when the gradient vanishes.
pub fn v_f_gap(problem: &NumProblem, y: &[f64], xstar: &[f64]) -> Result<f64> {
    if xstar.len() != y.len() {
        return Err(Error::Dimension {
            what: "reference point",
            got: xstar.len(),
            expected: y.len(),
        });
    }
    let mut g = vec![0.0; y.len()];
    let norm = problem.objective_grad_into(y, &mut g)?;
    if norm == 0.0 {
        return Ok(0.0);
    }
    Ok(g.iter()
        .zip(y)
        .zip(xstar)
        .map(|((gi, yi), si)| gi * (yi - si))
        .sum::<f64>()
        / norm)
}

struct Runner<'a> {
    problem: &'a NumProblem,
    cfg: &'a MdConfig,
    algorithm: Algorithm,
    floor: f64,
    /// `b_j + eps * ||C_j||_2`
    link_limits: Vec<f64>,
    productive_scale: f64,
    unproductive_scale: f64,
    threshold: f64,
    cap: u64,
}

impl<'a> Runner<'a> {
    fn new(problem: &'a NumProblem, cfg: &'a MdConfig, algorithm: Algorithm) -> Result<Self> {
        cfg.validate(problem)?;
        let eps = cfg.eps;
        let theta_sq = cfg.theta0 * cfg.theta0;
        let squared_steps = algorithm == Algorithm::Md1 && cfg.mode == Mode::LogShift;
        let scale = if squared_steps { eps * eps } else { eps };
        let threshold = 2.0 * theta_sq / (scale * scale);
        let floor = cfg.floor(problem);

        let expected = match algorithm {
            Algorithm::Md1 => threshold.ceil().max(1.0),
            _ => {
                // M_f over the iterate region: exact at the floor in log-shift mode,
                // estimated at the start otherwise.
                let probe = match cfg.mode {
                    Mode::LogShift => vec![floor; problem.n()],
                    Mode::Standard => cfg.start_point(problem),
                };
                let mut g = vec![0.0; problem.n()];
                let mf = problem.objective_grad_into(&probe, &mut g).unwrap_or(1.0);
                (threshold * (mf * mf).max(1.0)).ceil().max(1.0)
            }
        };
        let cap = cfg
            .max_iters_cap
            .unwrap_or((4.0 * expected).min(u64::MAX as f64) as u64);

        let link_limits = (0..problem.m())
            .map(|j| problem.capacities()[j] + eps * problem.routing().row_norm(j))
            .collect();
        Ok(Self {
            problem,
            cfg,
            algorithm,
            floor,
            link_limits,
            productive_scale: scale,
            unproductive_scale: scale,
            threshold,
            cap,
        })
    }

    fn run(self) -> Result<MdReport> {
        if self.algorithm == Algorithm::Md1 {
            self.run_as::<true>()
        } else {
            self.run_as::<false>()
        }
    }

    /// `FIXED` selects the first variant: fixed length, normalized steps,
    /// best-iterate output.
    fn run_as<const FIXED: bool>(self) -> Result<MdReport> {
        let started = Instant::now();
        let problem = self.problem;
        let routing = problem.routing();
        let (n, m) = (problem.n(), problem.m());
        let total = self.threshold.ceil().max(1.0) as u64;
        let floor = self.floor;
        // iterates never leave the utility domain
        let positive = floor > 0.0;
        let most_violated = self.cfg.policy == ViolationPolicy::MostViolated;

        let mut row_start = Vec::with_capacity(m + 1);
        let mut row_users = Vec::with_capacity(routing.nnz());
        row_start.push(0);
        for j in 0..m {
            row_users.extend(routing.row(j).iter().map(|&k| k as u32));
            row_start.push(row_users.len());
        }
        let unproductive_steps: Vec<f64> = (0..m)
            .map(|j| self.unproductive_scale / routing.row_norm(j))
            .collect();
        let b = problem.capacities();

        let mut x = self.cfg.start_point(problem);
        let mut grad = vec![0.0; n];
        let mut best = x.clone();
        let mut best_objective = f64::INFINITY;
        let mut weighted_sum = vec![0.0; n];
        let mut step_sum = 0.0;
        let mut stop_sum = 0.0;
        let mut max_grad_sq: f64 = 0.0;
        let mut histogram = vec![0u64; m];
        let mut productive = 0u64;
        let mut trace = Vec::new();
        let mut iter = 0u64;
        let mut next_trace = self.cfg.trace_every.map_or(u64::MAX, |_| 0);

        let stop_reason = loop {
            let done = if FIXED {
                iter >= total
            } else {
                stop_sum >= self.threshold
            };
            if done {
                break StopReason::CriterionMet;
            }
            if iter >= self.cap {
                break StopReason::CapHit;
            }

            let record = iter == next_trace;
            let snapshot = record.then(|| x.clone());

            let mut violated = None;
            let mut worst = f64::NEG_INFINITY;
            for j in 0..m {
                let users = &row_users[row_start[j]..row_start[j + 1]];
                let load: f64 = users.iter().map(|&k| x[k as usize]).sum();
                if load > self.link_limits[j] {
                    if !most_violated {
                        violated = Some(j);
                        break;
                    }
                    if load - b[j] > worst {
                        worst = load - b[j];
                        violated = Some(j);
                    }
                }
            }

            let (link, step, norm, objective) = match violated {
                None => {
                    let sq = if positive {
                        problem.grad_sq_into_unchecked(&x, &mut grad)
                    } else {
                        problem.objective_grad_into(&x, &mut grad)?.powi(2)
                    };
                    max_grad_sq = max_grad_sq.max(sq);
                    let inv_sq = if sq > 0.0 { 1.0 / sq } else { 0.0 };
                    let step = if FIXED {
                        if sq > 0.0 {
                            self.productive_scale / sq.sqrt()
                        } else {
                            0.0
                        }
                    } else {
                        self.productive_scale * inv_sq
                    };
                    let mut objective = None;
                    if FIXED {
                        let f = if positive {
                            problem.objective_unchecked(&x)
                        } else {
                            problem.objective(&x)?
                        };
                        if f < best_objective {
                            best_objective = f;
                            best.copy_from_slice(&x);
                        }
                        objective = Some(f);
                    } else {
                        for (acc, xi) in weighted_sum.iter_mut().zip(&x) {
                            *acc += step * xi;
                        }
                        if record {
                            objective = Some(problem.objective(&x)?);
                        }
                    }
                    step_sum += step;
                    stop_sum += inv_sq;
                    for (xi, gi) in x.iter_mut().zip(&grad) {
                        *xi = (*xi - step * gi).max(floor);
                    }
                    productive += 1;
                    (None, step, if record { sq.sqrt() } else { 0.0 }, objective)
                }
                Some(j) => {
                    let step = unproductive_steps[j];
                    for &k in &row_users[row_start[j]..row_start[j + 1]] {
                        let v = &mut x[k as usize];
                        *v = (*v - step).max(floor);
                    }
                    histogram[j] += 1;
                    stop_sum += 1.0;
                    (
                        Some(j),
                        step,
                        if record { routing.row_norm(j) } else { 0.0 },
                        None,
                    )
                }
            };

            if let Some(point) = snapshot {
                trace.push(StepTrace {
                    iteration: iter,
                    productive: link.is_none(),
                    link,
                    step,
                    grad_norm: norm,
                    objective,
                    point,
                    stop_sum,
                });
                next_trace += self.cfg.trace_every.unwrap_or(u64::MAX);
            }
            iter += 1;
        };
        let fixed_length = FIXED;

        let (solution, stop_reason) = if productive == 0 {
            (x, StopReason::NoProductiveSteps)
        } else if fixed_length {
            (best, stop_reason)
        } else {
            (
                weighted_sum.iter().map(|v| v / step_sum).collect(),
                stop_reason,
            )
        };
        let objective = if fixed_length && productive > 0 {
            best_objective
        } else {
            problem.objective(&solution).unwrap_or(f64::NAN)
        };

        Ok(MdReport {
            algorithm: self.algorithm,
            eps: self.cfg.eps,
            theta0: self.cfg.theta0,
            mode: self.cfg.mode,
            max_violation: problem.max_violation(&solution),
            solution,
            objective,
            total_iters: iter,
            productive_count: productive,
            unproductive_count: iter - productive,
            link_histogram: histogram,
            wall_time: started.elapsed(),
            stop_reason,
            threshold: self.threshold,
            stop_sum,
            max_productive_grad_norm: max_grad_sq.sqrt(),
            productive_step_sum: step_sum,
            trace,
        })
    }
}
