//! Ellipsoid method on the dual, with certificate-based primal recovery.
//!
//! The method minimizes the dual function over
//! `Lambda_2R = { lambda >= 0 : ||lambda||_2 <= 2R }`. Points outside that set
//! get a separating cut and are not productive; at productive points the cut
//! is the dual gradient `b - C x(lambda)`. The recovered primal point is the
//! certificate-weighted average of the best responses at productive points.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dual::{DualOracle, DEFAULT_PRICE_FLOOR, RATE_CAP_FACTOR};
use crate::error::{Error, Result};
use crate::problem::NumProblem;
use crate::report::StopReason;

/// Upper bound on the number of blocks the run history keeps.
pub const MAX_HISTORY_BLOCKS: usize = 4096;

/// How the unit direction `p` is built from the cut `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `p = B^T g / ||B^T g||`
    #[default]
    Standard,
    /// `q = B^T g`, `p = B^T q / ||B^T q||`
    #[serde(rename = "paper")]
    Verbatim,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Standard => "standard",
            Direction::Verbatim => "paper",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "standard" => Ok(Direction::Standard),
            "paper" => Ok(Direction::Verbatim),
            other => Err(format!(
                "unknown ellipsoid direction {other:?} (expected standard or paper)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificatePolicy {
    /// Uniform weights on the productive steps of the suffix with the
    /// smallest average productive dual value.
    #[default]
    BestWindow,
    /// Uniform weights on every productive step.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    /// `R`, an upper bound on `||lambda*||_2`.
    pub radius: f64,
    pub eps: f64,
    /// Dual Lipschitz bound `M`; derived from the problem when `None`.
    pub lipschitz: Option<f64>,
    /// Start point; `1e-20` in every coordinate when `None`.
    pub lambda0: Option<Vec<f64>>,
    pub price_floor: f64,
    /// `x_max`; `10 * max_j b_j` when `None`.
    pub rate_cap: Option<f64>,
    pub max_iters: Option<u64>,
    pub direction: Direction,
    pub certificate: CertificatePolicy,
}

impl EmConfig {
    /// Defaults: `R = 10 m`, derived `M`, standard direction, best-window certificate.
    pub fn new(problem: &NumProblem, eps: f64) -> Self {
        Self {
            radius: 10.0 * problem.m() as f64,
            eps,
            lipschitz: None,
            lambda0: None,
            price_floor: DEFAULT_PRICE_FLOOR,
            rate_cap: None,
            max_iters: None,
            direction: Direction::Standard,
            certificate: CertificatePolicy::BestWindow,
        }
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }

    pub fn with_lipschitz(mut self, m: f64) -> Self {
        self.lipschitz = Some(m);
        self
    }

    pub fn with_lambda0(mut self, lambda0: Vec<f64>) -> Self {
        self.lambda0 = Some(lambda0);
        self
    }

    pub fn with_max_iters(mut self, cap: u64) -> Self {
        self.max_iters = Some(cap);
        self
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    pub fn with_certificate(mut self, policy: CertificatePolicy) -> Self {
        self.certificate = policy;
        self
    }

    pub fn rate_cap(&self, problem: &NumProblem) -> f64 {
        self.rate_cap
            .unwrap_or(RATE_CAP_FACTOR * problem.max_capacity())
    }

    /// `M = ||b||_2 + M_g sqrt(n) x_max` unless overridden. Bounds the dual
    /// gradient norm under the rate cap.
    pub fn lipschitz(&self, problem: &NumProblem) -> f64 {
        self.lipschitz.unwrap_or_else(|| {
            let b_norm = problem
                .capacities()
                .iter()
                .map(|b| b * b)
                .sum::<f64>()
                .sqrt();
            b_norm
                + problem.constraint_lipschitz()
                    * (problem.n() as f64).sqrt()
                    * self.rate_cap(problem)
        })
    }

    pub fn lambda0(&self, problem: &NumProblem) -> Vec<f64> {
        self.lambda0
            .clone()
            .unwrap_or_else(|| vec![1e-20; problem.m()])
    }

    /// `N = 2m(m+1) ceil(ln(128 M R / eps))`
    pub fn budget(&self, problem: &NumProblem) -> u64 {
        em_budget(problem.m(), self.lipschitz(problem), self.radius, self.eps)
    }

    pub fn validate(&self, problem: &NumProblem) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive("radius", self.radius)?;
        positive("eps", self.eps)?;
        positive("price floor", self.price_floor)?;
        positive("rate cap", self.rate_cap(problem))?;
        positive("dual Lipschitz bound", self.lipschitz(problem))?;
        if let Some(l0) = &self.lambda0 {
            if l0.len() != problem.m() {
                return Err(Error::Dimension {
                    what: "lambda0",
                    got: l0.len(),
                    expected: problem.m(),
                });
            }
        }
        if self.max_iters == Some(0) {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn em_budget(m: usize, lipschitz: f64, radius: f64, eps: f64) -> u64 {
    let m = m as u64;
    let log_term = (128.0 * lipschitz * radius / eps).ln().ceil().max(1.0) as u64;
    2 * m * (m + 1) * log_term
}

/// Ellipsoid `{ lambda + B u : ||u||_2 <= 1 }`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidState {
    m: usize,
    /// Row-major `m x m` shape factor.
    b: Vec<f64>,
    pub lambda: Vec<f64>,
    pub t: u64,
    q: Vec<f64>,
    bp: Vec<f64>,
}

impl EllipsoidState {
    /// Ball of radius `radius` around `center`.
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        let m = center.len();
        let mut b = vec![0.0; m * m];
        for i in 0..m {
            b[i * m + i] = radius;
        }
        Self::with_shape(center, b)
    }

    /// `shape` is row-major with `center.len()^2` entries.
    pub fn with_shape(center: Vec<f64>, shape: Vec<f64>) -> Self {
        let m = center.len();
        assert_eq!(shape.len(), m * m, "shape must be m x m");
        Self {
            m,
            b: shape,
            lambda: center,
            t: 0,
            q: vec![0.0; m],
            bp: vec![0.0; m],
        }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn shape(&self) -> &[f64] {
        &self.b
    }

    pub fn shape_entry(&self, i: usize, j: usize) -> f64 {
        self.b[i * self.m + j]
    }

    /// `|det B_{t+1}| / |det B_t|` for any cut.
    pub fn volume_factor(m: usize) -> f64 {
        let (a, c) = coefficients(m);
        if m == 1 {
            c
        } else {
            a.powi(m as i32 - 1) * c
        }
    }

    /// One central-cut step keeping `{ y : <g, y - lambda> <= 0 }`.
    pub fn step(&mut self, g: &[f64], direction: Direction) -> Result<()> {
        let m = self.m;
        assert_eq!(g.len(), m, "cut has wrong dimension");
        transpose_apply(&self.b, m, g, &mut self.q);
        if direction == Direction::Verbatim {
            let first = self.q.clone();
            transpose_apply(&self.b, m, &first, &mut self.q);
        }
        let norm = self.q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::SingularEllipsoid { iteration: self.t });
        }
        for v in &mut self.q {
            *v /= norm;
        }
        let p = &self.q;
        let (a, c) = coefficients(m);
        for (row, bp) in self.b.chunks_exact_mut(m).zip(self.bp.iter_mut()) {
            let d: f64 = row.iter().zip(p).map(|(x, y)| x * y).sum();
            *bp = d;
            if m == 1 {
                row[0] *= c;
            } else {
                let s = (c - a) * d;
                for (x, pi) in row.iter_mut().zip(p) {
                    *x = a * *x + s * pi;
                }
            }
        }
        let shift = 1.0 / (m as f64 + 1.0);
        for (l, d) in self.lambda.iter_mut().zip(&self.bp) {
            *l -= shift * d;
        }
        self.t += 1;
        Ok(())
    }
}

/// `(m / sqrt(m^2 - 1), m / (m + 1))`; the first is unused when `m = 1`.
fn coefficients(m: usize) -> (f64, f64) {
    let mf = m as f64;
    let a = if m > 1 {
        mf / (mf * mf - 1.0).sqrt()
    } else {
        f64::NAN
    };
    (a, mf / (mf + 1.0))
}

fn transpose_apply(b: &[f64], m: usize, v: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (row, &vr) in b.chunks_exact(m).zip(v) {
        if vr != 0.0 {
            for (o, x) in out.iter_mut().zip(row) {
                *o += vr * x;
            }
        }
    }
}

/// Functional form of [`EllipsoidState::step`] with the standard direction.
pub fn em_step(state: &EllipsoidState, g: &[f64]) -> Result<EllipsoidState> {
    let mut next = state.clone();
    next.step(g, Direction::Standard)?;
    Ok(next)
}

/// Cut used at a point of the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cut {
    /// `lambda` is in the interior of `Lambda_2R`; cut with the dual gradient.
    Gradient,
    /// `lambda_j <= 0`; cut with `-e_j`.
    Coordinate(usize),
    /// `||lambda||_2 >= 2R`; cut with `lambda / ||lambda||`.
    Ball,
}

/// Classifies `lambda` against `Lambda_2R`. The most negative coordinate is
/// cut first; ties go to the smallest index.
pub fn separate(lambda: &[f64], radius: f64) -> Cut {
    let mut worst: Option<(usize, f64)> = None;
    for (j, &l) in lambda.iter().enumerate() {
        if l <= 0.0 && worst.is_none_or(|(_, w)| l < w) {
            worst = Some((j, l));
        }
    }
    if let Some((j, _)) = worst {
        return Cut::Coordinate(j);
    }
    let norm = lambda.iter().map(|l| l * l).sum::<f64>().sqrt();
    if norm >= 2.0 * radius {
        Cut::Ball
    } else {
        Cut::Gradient
    }
}

/// Compressed run history: per step only the productive flag and dual value,
/// and best responses summed over fixed-size blocks of steps.
#[derive(Debug, Clone, PartialEq)]
pub struct EmHistory {
    n: usize,
    block_size: usize,
    productive: Vec<bool>,
    dual_values: Vec<f64>,
    block_x: Vec<Vec<f64>>,
    block_phi: Vec<f64>,
    block_count: Vec<usize>,
}

impl EmHistory {
    /// History for about `expected_len` steps of an `n`-user problem.
    pub fn new(n: usize, expected_len: u64) -> Self {
        let block_size = (expected_len as usize).div_ceil(MAX_HISTORY_BLOCKS).max(1);
        Self::with_block_size(n, block_size)
    }

    pub fn with_block_size(n: usize, block_size: usize) -> Self {
        assert!(block_size > 0);
        Self {
            n,
            block_size,
            productive: Vec::new(),
            dual_values: Vec::new(),
            block_x: Vec::new(),
            block_phi: Vec::new(),
            block_count: Vec::new(),
        }
    }

    /// Records a step; `x` and `dual_value` are ignored for unproductive steps.
    pub fn record(&mut self, productive: bool, dual_value: f64, x: &[f64]) {
        let t = self.productive.len();
        if t.is_multiple_of(self.block_size) {
            self.block_x.push(vec![0.0; self.n]);
            self.block_phi.push(0.0);
            self.block_count.push(0);
        }
        self.productive.push(productive);
        if productive {
            self.dual_values.push(dual_value);
            let blk = self.block_x.len() - 1;
            for (s, v) in self.block_x[blk].iter_mut().zip(x) {
                *s += v;
            }
            self.block_phi[blk] += dual_value;
            self.block_count[blk] += 1;
        } else {
            self.dual_values.push(f64::NAN);
        }
    }

    pub fn len(&self) -> usize {
        self.productive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.productive.is_empty()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn productive_mask(&self) -> &[bool] {
        &self.productive
    }

    /// Dual value per step, NaN on unproductive steps.
    pub fn dual_values(&self) -> &[f64] {
        &self.dual_values
    }

    pub fn productive_count(&self) -> usize {
        self.block_count.iter().sum()
    }
}

/// Weights over recorded steps; zero off the productive set and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub weights: Vec<f64>,
    pub productive_mask: Vec<bool>,
    /// First step of the averaging window.
    pub window_start: usize,
    /// Number of steps with positive weight.
    pub support: usize,
}

pub fn build_certificate(history: &EmHistory, policy: CertificatePolicy) -> Result<Certificate> {
    let blocks = history.block_count.len();
    let start_block = match policy {
        CertificatePolicy::Uniform => 0,
        CertificatePolicy::BestWindow => {
            let (mut phi, mut count) = (0.0, 0usize);
            let mut best: Option<(usize, f64)> = None;
            for blk in (0..blocks).rev() {
                phi += history.block_phi[blk];
                count += history.block_count[blk];
                if count > 0 {
                    let avg = phi / count as f64;
                    if best.is_none_or(|(_, b)| avg <= b) {
                        best = Some((blk, avg));
                    }
                }
            }
            best.ok_or(Error::NoProductiveSteps)?.0
        }
    };
    let window_start = start_block * history.block_size;
    let support = history.productive[window_start.min(history.len())..]
        .iter()
        .filter(|p| **p)
        .count();
    if support == 0 {
        return Err(Error::NoProductiveSteps);
    }
    let w = 1.0 / support as f64;
    let weights = history
        .productive
        .iter()
        .enumerate()
        .map(|(t, &p)| if p && t >= window_start { w } else { 0.0 })
        .collect();
    Ok(Certificate {
        weights,
        productive_mask: history.productive.clone(),
        window_start,
        support,
    })
}

/// `x_hat = sum_t xi_t x(lambda^t)` for a certificate built from `history`.
pub fn recover_primal(history: &EmHistory, certificate: &Certificate) -> Vec<f64> {
    let first = certificate.window_start / history.block_size;
    let mut x = vec![0.0; history.n];
    for blk in first..history.block_x.len() {
        for (s, v) in x.iter_mut().zip(&history.block_x[blk]) {
            *s += v;
        }
    }
    let scale = 1.0 / certificate.support as f64;
    x.iter_mut().for_each(|v| *v *= scale);
    x
}

#[derive(Debug, Clone)]
pub struct EmReport {
    pub eps: f64,
    pub radius: f64,
    pub lipschitz: f64,
    pub direction: Direction,
    pub budget: u64,
    pub iterations: u64,
    pub productive_count: u64,
    pub lambda_final: Vec<f64>,
    /// Productive point with the smallest dual value.
    pub lambda_best: Vec<f64>,
    pub dual_value: f64,
    pub recovered_x: Vec<f64>,
    pub primal_utility: f64,
    pub violation_norm: f64,
    pub max_violation: f64,
    /// `dual_value - primal_utility`
    pub gap: f64,
    pub certificate: Certificate,
    pub certificate_support: usize,
    /// Dual value at every productive step, in order.
    pub productive_dual_values: Vec<f64>,
    /// Per-user count of price-floor engagements, summed over the run.
    pub price_floor_hits: u64,
    pub rate_cap_hits: u64,
    pub wall_time: Duration,
    pub stop_reason: StopReason,
}

pub fn em_run(problem: &NumProblem, cfg: &EmConfig) -> Result<EmReport> {
    cfg.validate(problem)?;
    let start = Instant::now();
    let (n, m) = (problem.n(), problem.m());
    let oracle = DualOracle::with_clamps(problem, cfg.price_floor, cfg.rate_cap(problem));
    let lipschitz = cfg.lipschitz(problem);
    let budget = cfg.budget(problem);
    let cap = cfg.max_iters.map_or(budget, |c| c.min(budget));

    let mut state = EllipsoidState::ball(cfg.lambda0(problem), 2.0 * cfg.radius);
    let mut history = EmHistory::new(n, cap);
    let mut rates = vec![0.0; n];
    let mut grad = vec![0.0; m];
    let mut cut = vec![0.0; m];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let (mut floor_hits, mut cap_hits) = (0u64, 0u64);

    for _ in 0..cap {
        match separate(&state.lambda, cfg.radius) {
            Cut::Gradient => {
                let (phi, fh, ch) = oracle.evaluate_into(&state.lambda, &mut rates, &mut grad)?;
                floor_hits += fh as u64;
                cap_hits += ch as u64;
                history.record(true, phi, &rates);
                if best.as_ref().is_none_or(|(b, _)| phi < *b) {
                    best = Some((phi, state.lambda.clone()));
                }
                if grad.iter().all(|g| *g == 0.0) {
                    // lambda is an exact minimizer
                    break;
                }
                // the cut for minimizing phi is its gradient
                match state.step(&grad, cfg.direction) {
                    // the ellipsoid has no width left along the gradient
                    Err(Error::SingularEllipsoid { .. }) if grad.iter().all(|g| g.is_finite()) => {
                        break
                    }
                    r => r?,
                }
            }
            Cut::Coordinate(j) => {
                history.record(false, f64::NAN, &rates);
                cut.fill(0.0);
                cut[j] = -1.0;
                state.step(&cut, cfg.direction)?;
            }
            Cut::Ball => {
                history.record(false, f64::NAN, &rates);
                let norm = state.lambda.iter().map(|l| l * l).sum::<f64>().sqrt();
                for (c, l) in cut.iter_mut().zip(&state.lambda) {
                    *c = l / norm;
                }
                state.step(&cut, cfg.direction)?;
            }
        }
    }

    let certificate = build_certificate(&history, cfg.certificate)?;
    let recovered_x = recover_primal(&history, &certificate);
    let primal_utility = problem.total_utility(&recovered_x)?;
    let (dual_value, lambda_best) = best.ok_or(Error::NoProductiveSteps)?;
    let productive_dual_values: Vec<f64> = history
        .dual_values()
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .collect();
    let iterations = history.len() as u64;
    let stop_reason = if iterations < budget && cfg.max_iters == Some(iterations) {
        StopReason::CapHit
    } else {
        StopReason::CriterionMet
    };
    Ok(EmReport {
        eps: cfg.eps,
        radius: cfg.radius,
        lipschitz,
        direction: cfg.direction,
        budget,
        iterations,
        productive_count: productive_dual_values.len() as u64,
        lambda_final: state.lambda,
        lambda_best,
        dual_value,
        violation_norm: problem.violation_norm(&recovered_x),
        max_violation: problem.max_violation(&recovered_x),
        gap: dual_value - primal_utility,
        primal_utility,
        recovered_x,
        certificate_support: certificate.support,
        certificate,
        productive_dual_values,
        price_floor_hits: floor_hits,
        rate_cap_hits: cap_hits,
        wall_time: start.elapsed(),
        stop_reason,
    })
}
