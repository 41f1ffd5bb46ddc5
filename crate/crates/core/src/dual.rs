//! Lagrangian dual of the NUM problem.
//!
//! For link prices `lambda >= 0` each user faces the aggregate price
//! `q_k = <lambda, C_k>` and picks the rate maximizing `u_k(x) - q_k x`. The
//! dual function is
//!
//! ```text
//! phi(lambda) = <lambda, b> + sum_k ( u_k(x_k(lambda)) - q_k x_k(lambda) )
//! ```
//!
//! and `b - C x(lambda)` is its gradient. Best responses are restricted to
//! `(0, x_max]`, which keeps `phi` finite at zero prices without cutting off
//! the primal optimum (every feasible rate is at most `max_j b_j`).

use crate::error::{Error, Result};
use crate::problem::NumProblem;

pub const DEFAULT_PRICE_FLOOR: f64 = 1e-12;
/// `x_max = RATE_CAP_FACTOR * max_j b_j`
pub const RATE_CAP_FACTOR: f64 = 10.0;

/// Price-to-rate map with the two safety clamps.
#[derive(Debug, Clone, Copy)]
pub struct DualOracle<'a> {
    problem: &'a NumProblem,
    price_floor: f64,
    rate_cap: f64,
}

/// Everything one dual evaluation produces.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEval {
    pub value: f64,
    pub subgradient: Vec<f64>,
    pub rates: Vec<f64>,
    /// Users whose price was raised to the floor.
    pub floor_hits: usize,
    /// Users whose rate was cut to `x_max`.
    pub cap_hits: usize,
}

impl<'a> DualOracle<'a> {
    pub fn new(problem: &'a NumProblem) -> Self {
        Self {
            problem,
            price_floor: DEFAULT_PRICE_FLOOR,
            rate_cap: RATE_CAP_FACTOR * problem.max_capacity(),
        }
    }

    pub fn with_clamps(problem: &'a NumProblem, price_floor: f64, rate_cap: f64) -> Self {
        Self {
            problem,
            price_floor,
            rate_cap,
        }
    }

    pub fn problem(&self) -> &'a NumProblem {
        self.problem
    }

    pub fn price_floor(&self) -> f64 {
        self.price_floor
    }

    pub fn rate_cap(&self) -> f64 {
        self.rate_cap
    }

    /// `x_k(q) = argmax_{0 < x <= x_max} u_k(x) - q x`, with `q` raised to the price floor.
    pub fn best_response(&self, k: usize, price: f64) -> f64 {
        self.clamped_response(k, price).0
    }

    #[inline]
    fn clamped_response(&self, k: usize, price: f64) -> (f64, bool, bool) {
        let floored = price < self.price_floor;
        let q = if floored { self.price_floor } else { price };
        let x = self.problem.utility().inverse_derivative(k, q);
        if x > self.rate_cap {
            (self.rate_cap, floored, true)
        } else {
            (x, floored, false)
        }
    }

    fn check(&self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.problem.m() {
            return Err(Error::Dimension {
                what: "price vector",
                got: lambda.len(),
                expected: self.problem.m(),
            });
        }
        Ok(())
    }

    /// Best responses `x(lambda)` of all users.
    pub fn rates(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        self.check(lambda)?;
        let routing = self.problem.routing();
        Ok((0..self.problem.n())
            .map(|k| self.best_response(k, routing.col_dot(k, lambda)))
            .collect())
    }

    pub fn evaluate(&self, lambda: &[f64]) -> Result<DualEval> {
        let mut rates = vec![0.0; self.problem.n()];
        let mut subgradient = vec![0.0; self.problem.m()];
        let (value, floor_hits, cap_hits) =
            self.evaluate_into(lambda, &mut rates, &mut subgradient)?;
        Ok(DualEval {
            value,
            subgradient,
            rates,
            floor_hits,
            cap_hits,
        })
    }

    /// Allocation-free evaluation; returns `(phi, floor_hits, cap_hits)`.
    pub fn evaluate_into(
        &self,
        lambda: &[f64],
        rates: &mut [f64],
        subgradient: &mut [f64],
    ) -> Result<(f64, usize, usize)> {
        self.check(lambda)?;
        let p = self.problem;
        let routing = p.routing();
        let utility = p.utility();
        let mut value: f64 = lambda.iter().zip(p.capacities()).map(|(l, b)| l * b).sum();
        let (mut floor_hits, mut cap_hits) = (0, 0);
        for (k, rate) in rates.iter_mut().enumerate() {
            let q = routing.col_dot(k, lambda);
            let (x, floored, capped) = self.clamped_response(k, q);
            floor_hits += floored as usize;
            cap_hits += capped as usize;
            value += utility.value(k, x) - q * x;
            *rate = x;
        }
        for (j, g) in subgradient.iter_mut().enumerate() {
            *g = p.capacities()[j] - routing.row_dot(j, rates);
        }
        Ok((value, floor_hits, cap_hits))
    }

    pub fn dual_value(&self, lambda: &[f64]) -> Result<f64> {
        self.evaluate(lambda).map(|e| e.value)
    }

    pub fn dual_subgradient(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        self.evaluate(lambda).map(|e| e.subgradient)
    }
}

/// Best response of user `k` with the default clamps.
pub fn best_response(problem: &NumProblem, k: usize, price: f64) -> f64 {
    DualOracle::new(problem).best_response(k, price)
}

/// `phi(lambda)` with the default clamps.
pub fn dual_value(problem: &NumProblem, lambda: &[f64]) -> Result<f64> {
    DualOracle::new(problem).dual_value(lambda)
}

/// `b - C x(lambda)` with the default clamps.
pub fn dual_subgradient(problem: &NumProblem, lambda: &[f64]) -> Result<Vec<f64>> {
    DualOracle::new(problem).dual_subgradient(lambda)
}

/// `phi(lambda) - U(x)`. Nonnegative whenever `x` is capacity-feasible; no
/// sign guarantee otherwise.
pub fn duality_gap(problem: &NumProblem, x: &[f64], lambda: &[f64]) -> Result<f64> {
    Ok(dual_value(problem, lambda)? - problem.total_utility(x)?)
}

/// Solves `u_k'(x) = price` on `(0, hi]` by bisection, for utilities without
/// a closed-form inverse derivative. Returns `hi` when the price is below
/// `u_k'(hi)`.
pub fn bisect_best_response(problem: &NumProblem, k: usize, price: f64, hi: f64) -> f64 {
    let u = problem.utility();
    if u.derivative(k, hi) >= price {
        return hi;
    }
    let (mut lo, mut hi) = (0.0_f64, hi);
    // u' is decreasing: u'(lo) > price > u'(hi)
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if u.derivative(k, mid) > price {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
