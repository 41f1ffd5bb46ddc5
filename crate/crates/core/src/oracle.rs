//! Exact reference solutions for tiny instances.
//!
//! Every subset `A` of links is tried as the active set. With the links in `A`
//! tight, the KKT system reduces to minimizing the restricted dual over
//! `lambda_A`, which is smooth and strictly convex when `C_A` has full row
//! rank; damped Newton solves it. A candidate is kept when its prices are
//! nonnegative and its rates satisfy every capacity, and the best such
//! candidate is the optimum.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::NumProblem;

pub const MAX_ORACLE_USERS: usize = 6;
pub const MAX_ORACLE_LINKS: usize = 4;

const FEASIBILITY_TOL: f64 = 1e-9;
const PRICE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `U(x*)`
    pub value: f64,
}

pub fn reference_solution(problem: &NumProblem) -> Result<ReferenceSolution> {
    let (n, m) = (problem.n(), problem.m());
    if n > MAX_ORACLE_USERS || m > MAX_ORACLE_LINKS {
        return Err(Error::OracleRefused {
            n,
            m,
            max_n: MAX_ORACLE_USERS,
            max_m: MAX_ORACLE_LINKS,
        });
    }
    let mut best: Option<ReferenceSolution> = None;
    for mask in 1u32..(1 << m) {
        let active: Vec<usize> = (0..m).filter(|j| mask & (1 << j) != 0).collect();
        let Some(lambda_a) = solve_active(problem, &active) else {
            continue;
        };
        if lambda_a.iter().any(|l| *l < -PRICE_TOL) {
            continue;
        }
        let mut lambda = vec![0.0; m];
        for (&j, &l) in active.iter().zip(&lambda_a) {
            lambda[j] = l.max(0.0);
        }
        let x = rates(problem, &lambda);
        let feasible = (0..m).all(|j| {
            let load = problem.routing().row_dot(j, &x);
            load - problem.capacities()[j] <= FEASIBILITY_TOL * problem.capacities()[j].max(1.0)
        });
        if !feasible {
            continue;
        }
        let value = problem.total_utility(&x)?;
        if best.as_ref().is_none_or(|b| value > b.value) {
            best = Some(ReferenceSolution { x, lambda, value });
        }
    }
    best.ok_or(Error::NoKktPoint)
}

fn rates(problem: &NumProblem, lambda: &[f64]) -> Vec<f64> {
    let u = problem.utility();
    (0..problem.n())
        .map(|k| u.inverse_derivative(k, problem.routing().col_dot(k, lambda)))
        .collect()
}

/// Minimizes `<lambda_A, b_A> + sum_k u_k(x_k) - q_k x_k` over `lambda_A`,
/// where `x_k` is the best response to `q_k = sum_{j in A} lambda_j C_kj`.
/// `None` when some user crosses no link of `A`, `C_A` is rank deficient, or
/// Newton fails to converge.
fn solve_active(problem: &NumProblem, active: &[usize]) -> Option<Vec<f64>> {
    let routing = problem.routing();
    let (n, a) = (problem.n(), active.len());
    let mut ca = DMatrix::<f64>::zeros(a, n);
    for (i, &j) in active.iter().enumerate() {
        for &k in routing.row(j) {
            ca[(i, k)] = 1.0;
        }
    }
    if (0..n).any(|k| ca.column(k).iter().all(|v| *v == 0.0)) || ca.rank(1e-9) < a {
        return None;
    }
    let b = DVector::from_iterator(a, active.iter().map(|&j| problem.capacities()[j]));
    let u = problem.utility();

    let prices = |lam: &DVector<f64>| ca.tr_mul(lam);
    let value = |lam: &DVector<f64>| -> Option<f64> {
        let q = prices(lam);
        let mut v = lam.dot(&b);
        for k in 0..n {
            if !(q[k] > 0.0) {
                return None;
            }
            let x = u.inverse_derivative(k, q[k]);
            v += u.value(k, x) - q[k] * x;
        }
        Some(v)
    };

    let mut lam = DVector::from_element(a, 1.0);
    let mut phi = value(&lam)?;
    for _ in 0..500 {
        let q = prices(&lam);
        let x = DVector::from_iterator(n, (0..n).map(|k| u.inverse_derivative(k, q[k])));
        let grad = &b - &ca * &x;
        // dx_k/dq_k = 1 / u_k''(x_k) < 0
        let w = DVector::from_iterator(n, (0..n).map(|k| -1.0 / u.curvature(k, x[k])));
        let hess = &ca * DMatrix::from_diagonal(&w) * ca.transpose();
        let step = hess.cholesky()?.solve(&(-&grad));
        let decrement = -grad.dot(&step);
        if decrement <= 1e-30 * (1.0 + phi.abs()) {
            return Some(lam.iter().copied().collect());
        }
        if decrement <= 1e-12 {
            // quadratic convergence region: phi differences are below round-off,
            // so take full steps
            let next = &lam + &step;
            if next == lam {
                return Some(lam.iter().copied().collect());
            }
            lam = next;
            phi = value(&lam)?;
            continue;
        }
        let mut t = 1.0;
        loop {
            let trial = &lam + t * &step;
            match value(&trial) {
                Some(v) if v <= phi - 0.25 * t * decrement => {
                    lam = trial;
                    phi = v;
                    break;
                }
                _ => {
                    t *= 0.5;
                    if t < 1e-20 {
                        // no further progress representable: accept if stationary
                        return (grad.norm() <= 1e-10).then(|| lam.iter().copied().collect());
                    }
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::UtilitySpec;
    use approx::assert_relative_eq;

    #[test]
    fn two_users_one_link() {
        let p = NumProblem::from_rows(2, vec![vec![0, 1]], vec![1.0], UtilitySpec::Log).unwrap();
        let r = reference_solution(&p).unwrap();
        assert_relative_eq!(r.x[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(r.x[1], 0.5, epsilon = 1e-12);
        assert_relative_eq!(r.lambda[0], 2.0, epsilon = 1e-10);
        assert_relative_eq!(r.value, -2.0 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn line_network() {
        let p = NumProblem::from_rows(
            3,
            vec![vec![0, 1], vec![1, 2]],
            vec![1.0, 1.0],
            UtilitySpec::Log,
        )
        .unwrap();
        let r = reference_solution(&p).unwrap();
        let expect = [2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0];
        for (x, e) in r.x.iter().zip(expect) {
            assert_relative_eq!(*x, e, epsilon = 1e-10);
        }
        assert_relative_eq!(
            r.value,
            2.0 * (2.0f64 / 3.0).ln() + (1.0f64 / 3.0).ln(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn slack_link_gets_zero_price() {
        // link 1 only carries user 0 and has room to spare
        let p = NumProblem::from_rows(
            2,
            vec![vec![0, 1], vec![0]],
            vec![1.0, 5.0],
            UtilitySpec::Log,
        )
        .unwrap();
        let r = reference_solution(&p).unwrap();
        assert_eq!(r.lambda[1], 0.0);
        assert_relative_eq!(r.x[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn refuses_large_instances() {
        let rows = vec![(0..7).collect::<Vec<_>>()];
        let p = NumProblem::from_rows(7, rows, vec![1.0], UtilitySpec::Log).unwrap();
        assert!(matches!(
            reference_solution(&p),
            Err(Error::OracleRefused { n: 7, .. })
        ));
    }

    #[test]
    fn weighted_and_power_utilities() {
        let w = NumProblem::from_rows(
            2,
            vec![vec![0, 1]],
            vec![1.0],
            UtilitySpec::WeightedLog {
                weights: vec![3.0, 1.0],
            },
        )
        .unwrap();
        let r = reference_solution(&w).unwrap();
        assert_relative_eq!(r.x[0], 0.75, epsilon = 1e-12);
        let pw = NumProblem::from_rows(
            2,
            vec![vec![0, 1]],
            vec![1.0],
            UtilitySpec::Power { alpha: 2.0 },
        )
        .unwrap();
        let r = reference_solution(&pw).unwrap();
        assert_relative_eq!(r.x[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(r.lambda[0], 4.0, epsilon = 1e-9);
    }
}
