//! The NUM instance and its oracles.
//!
//! Users `k = 0..n` send at rates `x_k`; link `j = 0..m` carries every user in
//! its routing row and has capacity `b_j`. The solvers minimize
//! `f(x) = -sum_k u_k(x_k)` subject to `g_j(x) = <C_j, x> - b_j <= 0`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-user utility family. Every member is strictly concave and increasing on
/// the open positive half-line.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "UtilityFile", into = "UtilityFile")]
pub enum UtilitySpec {
    /// `u_k(x) = ln x`
    #[default]
    Log,
    /// `u_k(x) = w_k ln x`
    WeightedLog { weights: Vec<f64> },
    /// `u_k(x) = x^(1-alpha) / (1-alpha)`, the alpha-fair family without the log case.
    Power { alpha: f64 },
}

impl UtilitySpec {
    pub fn kind(&self) -> &'static str {
        match self {
            UtilitySpec::Log => "log",
            UtilitySpec::WeightedLog { .. } => "weighted_log",
            UtilitySpec::Power { .. } => "power",
        }
    }

    /// Checks the family parameters against `n` users.
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            UtilitySpec::Log => Ok(()),
            UtilitySpec::WeightedLog { weights } => {
                if weights.len() != n {
                    return Err(Error::InvalidInstance(format!(
                        "utility weights have length {}, expected n = {n}",
                        weights.len()
                    )));
                }
                if let Some(k) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(Error::InvalidInstance(format!(
                        "utility weight {k} is {} (weights must be strictly positive)",
                        weights[k]
                    )));
                }
                Ok(())
            }
            UtilitySpec::Power { alpha } => {
                if !(alpha.is_finite() && *alpha > 0.0) || *alpha == 1.0 {
                    return Err(Error::InvalidInstance(format!(
                        "power utility alpha = {alpha} must lie in (0,1) or (1,inf)"
                    )));
                }
                Ok(())
            }
        }
    }

    /// `u_k(x)`; the caller guarantees `x > 0`.
    #[inline]
    pub fn value(&self, k: usize, x: f64) -> f64 {
        match self {
            UtilitySpec::Log => x.ln(),
            UtilitySpec::WeightedLog { weights } => weights[k] * x.ln(),
            UtilitySpec::Power { alpha } => x.powf(1.0 - alpha) / (1.0 - alpha),
        }
    }

    /// `u_k'(x)`
    #[inline]
    pub fn derivative(&self, k: usize, x: f64) -> f64 {
        match self {
            UtilitySpec::Log => 1.0 / x,
            UtilitySpec::WeightedLog { weights } => weights[k] / x,
            UtilitySpec::Power { alpha } => x.powf(-alpha),
        }
    }

    /// `u_k''(x)`
    #[inline]
    pub fn curvature(&self, k: usize, x: f64) -> f64 {
        match self {
            UtilitySpec::Log => -1.0 / (x * x),
            UtilitySpec::WeightedLog { weights } => -weights[k] / (x * x),
            UtilitySpec::Power { alpha } => -alpha * x.powf(-alpha - 1.0),
        }
    }

    /// Closed-form solution of `u_k'(x) = price` for `price > 0`.
    #[inline]
    pub fn inverse_derivative(&self, k: usize, price: f64) -> f64 {
        match self {
            UtilitySpec::Log => 1.0 / price,
            UtilitySpec::WeightedLog { weights } => weights[k] / price,
            UtilitySpec::Power { alpha } => price.powf(-1.0 / alpha),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct UtilityFile {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
}

impl TryFrom<UtilityFile> for UtilitySpec {
    type Error = String;

    fn try_from(raw: UtilityFile) -> std::result::Result<Self, String> {
        match raw.kind.as_str() {
            "log" => Ok(UtilitySpec::Log),
            "weighted_log" => raw
                .weights
                .map(|weights| UtilitySpec::WeightedLog { weights })
                .ok_or_else(|| "utility kind weighted_log requires \"weights\"".to_string()),
            "power" => raw
                .alpha
                .map(|alpha| UtilitySpec::Power { alpha })
                .ok_or_else(|| "utility kind power requires \"alpha\"".to_string()),
            other => Err(format!("unknown utility kind {other:?}")),
        }
    }
}

impl From<UtilitySpec> for UtilityFile {
    fn from(u: UtilitySpec) -> Self {
        let kind = u.kind().to_string();
        match u {
            UtilitySpec::Log => UtilityFile {
                kind,
                weights: None,
                alpha: None,
            },
            UtilitySpec::WeightedLog { weights } => UtilityFile {
                kind,
                weights: Some(weights),
                alpha: None,
            },
            UtilitySpec::Power { alpha } => UtilityFile {
                kind,
                weights: None,
                alpha: Some(alpha),
            },
        }
    }
}

/// Boolean routing matrix stored as sorted user lists per link, with the
/// transposed (per-user link lists) view and exact row norms precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingMatrix {
    n: usize,
    rows: Vec<Vec<usize>>,
    cols: Vec<Vec<usize>>,
    row_norms: Vec<f64>,
}

impl RoutingMatrix {
    /// Builds the matrix from per-link user lists. Rows are sorted; duplicate
    /// or out-of-range user indices and users on no link are rejected.
    pub fn new(n: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInstance("n must be at least 1".into()));
        }
        if rows.is_empty() {
            return Err(Error::InvalidInstance("m must be at least 1".into()));
        }
        let mut rows = rows;
        let mut cols = vec![Vec::new(); n];
        for (j, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            if let Some(&k) = row.iter().find(|&&k| k >= n) {
                return Err(Error::InvalidInstance(format!(
                    "row {j} references user {k} but n = {n}"
                )));
            }
            if let Some(w) = row.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::InvalidInstance(format!(
                    "row {j} lists user {} twice",
                    w[0]
                )));
            }
            for &k in row.iter() {
                cols[k].push(j);
            }
        }
        if let Some(k) = cols.iter().position(Vec::is_empty) {
            return Err(Error::InvalidInstance(format!(
                "user {k} is not routed over any link (column {k} of C is zero)"
            )));
        }
        let row_norms = rows.iter().map(|r| (r.len() as f64).sqrt()).collect();
        Ok(Self {
            n,
            rows,
            cols,
            row_norms,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    /// Users on link `j`.
    pub fn row(&self, j: usize) -> &[usize] {
        &self.rows[j]
    }

    /// Links used by user `k`.
    pub fn col(&self, k: usize) -> &[usize] {
        &self.cols[k]
    }

    /// `||C_j||_2 = sqrt(|row j|)`
    pub fn row_norm(&self, j: usize) -> f64 {
        self.row_norms[j]
    }

    pub fn row_norms(&self) -> &[f64] {
        &self.row_norms
    }

    pub fn contains(&self, j: usize, k: usize) -> bool {
        self.rows[j].binary_search(&k).is_ok()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `<C_j, x>`
    #[inline]
    pub fn row_dot(&self, j: usize, x: &[f64]) -> f64 {
        self.rows[j].iter().map(|&k| x[k]).sum()
    }

    /// `<lambda, C_k>`: the aggregate price user `k` pays.
    #[inline]
    pub fn col_dot(&self, k: usize, lambda: &[f64]) -> f64 {
        self.cols[k].iter().map(|&j| lambda[j]).sum()
    }
}

/// A network utility maximization instance. Immutable once built; all oracles
/// are pure functions of `(problem, point)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NumProblem {
    routing: RoutingMatrix,
    b: Vec<f64>,
    utility: UtilitySpec,
    seed: Option<u64>,
    max_row_norm: f64,
}

impl NumProblem {
    pub fn new(routing: RoutingMatrix, b: Vec<f64>, utility: UtilitySpec) -> Result<Self> {
        if b.len() != routing.m() {
            return Err(Error::InvalidInstance(format!(
                "capacity vector has length {}, expected m = {}",
                b.len(),
                routing.m()
            )));
        }
        if let Some(j) = b.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInstance(format!(
                "capacity b[{j}] = {} is not strictly positive",
                b[j]
            )));
        }
        utility.validate(routing.n())?;
        let max_row_norm = routing.row_norms().iter().copied().fold(0.0, f64::max);
        Ok(Self {
            routing,
            b,
            utility,
            seed: None,
            max_row_norm,
        })
    }

    /// Convenience constructor from raw user lists.
    pub fn from_rows(
        n: usize,
        rows: Vec<Vec<usize>>,
        b: Vec<f64>,
        utility: UtilitySpec,
    ) -> Result<Self> {
        Self::new(RoutingMatrix::new(n, rows)?, b, utility)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn n(&self) -> usize {
        self.routing.n()
    }

    pub fn m(&self) -> usize {
        self.routing.m()
    }

    pub fn routing(&self) -> &RoutingMatrix {
        &self.routing
    }

    pub fn capacities(&self) -> &[f64] {
        &self.b
    }

    pub fn utility(&self) -> &UtilitySpec {
        &self.utility
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// `M_g = max_j ||C_j||_2`, the Lipschitz constant of `g = max_j g_j`.
    pub fn constraint_lipschitz(&self) -> f64 {
        self.max_row_norm
    }

    pub fn max_capacity(&self) -> f64 {
        self.b.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_capacity(&self) -> f64 {
        self.b.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Tightest per-user upper bound on any feasible rate: the smallest
    /// capacity among the links the user crosses.
    pub fn rate_bound(&self, k: usize) -> f64 {
        self.routing
            .col(k)
            .iter()
            .map(|&j| self.b[j])
            .fold(f64::INFINITY, f64::min)
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::Dimension {
                what: "rate vector",
                got: x.len(),
                expected: self.n(),
            });
        }
        Ok(())
    }

    fn check_domain(&self, x: &[f64]) -> Result<()> {
        self.check_len(x)?;
        match x.iter().position(|v| !(*v > 0.0)) {
            Some(index) => Err(Error::Domain {
                index,
                value: x[index],
            }),
            None => Ok(()),
        }
    }

    /// `U(x) = sum_k u_k(x_k)`
    pub fn total_utility(&self, x: &[f64]) -> Result<f64> {
        self.check_domain(x)?;
        Ok(match self.utility {
            UtilitySpec::Log => log_sum(x),
            _ => x
                .iter()
                .enumerate()
                .map(|(k, &xk)| self.utility.value(k, xk))
                .sum(),
        })
    }

    /// `f(x) = -U(x)`
    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        self.total_utility(x).map(|u| -u)
    }

    /// `grad f(x)`, component `k` equal to `-u_k'(x_k)`.
    pub fn objective_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; x.len()];
        self.objective_grad_into(x, &mut g)?;
        Ok(g)
    }

    /// Writes `grad f(x)` into `out` and returns its 2-norm.
    pub fn objective_grad_into(&self, x: &[f64], out: &mut [f64]) -> Result<f64> {
        self.check_domain(x)?;
        let mut sq = 0.0;
        for (k, (o, &xk)) in out.iter_mut().zip(x).enumerate() {
            let d = -self.utility.derivative(k, xk);
            *o = d;
            sq += d * d;
        }
        Ok(sq.sqrt())
    }

    /// `grad f(x)` into `out`, returning its squared 2-norm. The caller
    /// guarantees `x > 0` componentwise.
    #[inline]
    pub(crate) fn grad_sq_into_unchecked(&self, x: &[f64], out: &mut [f64]) -> f64 {
        match &self.utility {
            UtilitySpec::Log => {
                for (o, &xk) in out.iter_mut().zip(x) {
                    *o = -1.0 / xk;
                }
            }
            UtilitySpec::WeightedLog { weights } => {
                for ((o, &xk), w) in out.iter_mut().zip(x).zip(weights) {
                    *o = -w / xk;
                }
            }
            UtilitySpec::Power { alpha } => {
                for (o, &xk) in out.iter_mut().zip(x) {
                    *o = -xk.powf(-alpha);
                }
            }
        }
        out.iter().map(|g| g * g).sum::<f64>()
    }

    /// `f(x)` for `x > 0` componentwise.
    #[inline]
    pub(crate) fn objective_unchecked(&self, x: &[f64]) -> f64 {
        match &self.utility {
            UtilitySpec::Log => -log_sum(x),
            u => -x
                .iter()
                .enumerate()
                .map(|(k, &xk)| u.value(k, xk))
                .sum::<f64>(),
        }
    }

    /// `g_j(x) = <C_j, x> - b_j`
    pub fn constraint(&self, j: usize, x: &[f64]) -> Result<f64> {
        if j >= self.m() {
            return Err(Error::IndexOutOfRange {
                what: "link",
                index: j,
                len: self.m(),
            });
        }
        self.check_len(x)?;
        Ok(self.routing.row_dot(j, x) - self.b[j])
    }

    /// `max(0, max_j g_j(x))`
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        (0..self.m())
            .map(|j| self.routing.row_dot(j, x) - self.b[j])
            .fold(0.0, f64::max)
    }

    /// `||[Cx - b]_+||_2`
    pub fn violation_norm(&self, x: &[f64]) -> f64 {
        (0..self.m())
            .map(|j| (self.routing.row_dot(j, x) - self.b[j]).max(0.0).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Smallest link failing the productive-step test `g_j(x) <= eps * ||C_j||_2`.
    pub fn find_violated(&self, x: &[f64], eps: f64) -> Option<usize> {
        (0..self.m())
            .find(|&j| self.routing.row_dot(j, x) - self.b[j] > eps * self.routing.row_norm(j))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: InstanceFile = serde_json::from_str(text)?;
        raw.into_problem()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&InstanceFile::from(self)).expect("instance serializes")
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

/// `sum_k ln x_k` for positive `x`, taking one logarithm per block of
/// products. Blocks whose product leaves the normal range fall back to
/// per-element logarithms.
pub(crate) fn log_sum(x: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    x.chunks(BLOCK)
        .map(|c| {
            let prod: f64 = c.iter().product();
            if prod.is_normal() {
                prod.ln()
            } else {
                c.iter().map(|v| v.ln()).sum()
            }
        })
        .sum()
}

/// On-disk instance layout. Indices are 0-based.
#[derive(Debug, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    pub m: usize,
    pub rows: Vec<Vec<usize>>,
    pub b: Vec<f64>,
    pub utility: UtilitySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl InstanceFile {
    pub fn into_problem(self) -> Result<NumProblem> {
        if self.rows.len() != self.m {
            return Err(Error::InvalidInstance(format!(
                "\"rows\" has {} entries but m = {}",
                self.rows.len(),
                self.m
            )));
        }
        let p = NumProblem::from_rows(self.n, self.rows, self.b, self.utility)?;
        Ok(match self.seed {
            Some(s) => p.with_seed(s),
            None => p,
        })
    }
}

impl From<&NumProblem> for InstanceFile {
    fn from(p: &NumProblem) -> Self {
        InstanceFile {
            n: p.n(),
            m: p.m(),
            rows: p.routing.rows().to_vec(),
            b: p.b.clone(),
            utility: p.utility.clone(),
            seed: p.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn log3() -> NumProblem {
        NumProblem::from_rows(
            3,
            vec![vec![0, 1], vec![2]],
            vec![0.3, 0.1],
            UtilitySpec::Log,
        )
        .unwrap()
    }

    #[test]
    fn objective_values() {
        let p = NumProblem::from_rows(3, vec![vec![0, 1, 2]], vec![1.0], UtilitySpec::Log).unwrap();
        assert_eq!(p.objective(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
        let p2 = NumProblem::from_rows(2, vec![vec![0, 1]], vec![1.0], UtilitySpec::Log).unwrap();
        let e = std::f64::consts::E;
        assert_relative_eq!(p2.objective(&[e, e]).unwrap(), -2.0, epsilon = 1e-14);
        assert_relative_eq!(
            p2.objective(&[0.5, 0.5]).unwrap(),
            2.0 * 2f64.ln(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn objective_rejects_boundary() {
        let p = log3();
        match p.objective(&[0.1, 0.0, 0.2]) {
            Err(Error::Domain { index: 1, .. }) => {}
            other => panic!("expected domain error, got {other:?}"),
        }
        assert!(p.objective_grad(&[-1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn gradients() {
        let p = NumProblem::from_rows(2, vec![vec![0, 1]], vec![1.0], UtilitySpec::Log).unwrap();
        let g = p.objective_grad(&[1.0, 1.0]).unwrap();
        assert_eq!(g, vec![-1.0, -1.0]);
        let mut buf = [0.0; 2];
        assert_relative_eq!(
            p.objective_grad_into(&[1.0, 1.0], &mut buf).unwrap(),
            2f64.sqrt()
        );
        assert_eq!(p.objective_grad(&[2.0, 4.0]).unwrap(), vec![-0.5, -0.25]);

        let w = NumProblem::from_rows(
            2,
            vec![vec![0, 1]],
            vec![1.0],
            UtilitySpec::WeightedLog {
                weights: vec![3.0, 1.0],
            },
        )
        .unwrap();
        assert_eq!(w.objective_grad(&[1.0, 1.0]).unwrap(), vec![-3.0, -1.0]);
    }

    #[test]
    fn constraint_values() {
        let p = log3();
        assert_relative_eq!(
            p.constraint(0, &[0.2, 0.2, 0.5]).unwrap(),
            0.1,
            epsilon = 1e-15
        );
        assert_eq!(p.constraint(0, &[0.0; 3]).unwrap(), -0.3);
        assert_eq!(p.constraint(1, &[0.0, 0.0, 0.1]).unwrap(), 0.0);
        assert!(matches!(
            p.constraint(2, &[0.0; 3]),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn violation_measures() {
        let p = log3();
        assert_eq!(p.max_violation(&[0.1, 0.1, 0.05]), 0.0);
        assert_relative_eq!(p.max_violation(&[0.2, 0.2, 0.05]), 0.1, epsilon = 1e-15);
        let x = [0.1, 0.15, 0.1];
        let scaled: Vec<f64> = x.iter().map(|v| v * 10.0).collect();
        assert!(p.max_violation(&scaled) > p.max_violation(&x));
    }

    #[test]
    fn productive_test_uses_row_norms() {
        let p = NumProblem::from_rows(2, vec![vec![0, 1]], vec![0.3], UtilitySpec::Log).unwrap();
        assert_eq!(p.find_violated(&[0.2, 0.2], 0.01), Some(0));
        assert_eq!(p.find_violated(&[0.2, 0.2], 0.1), None);
        assert_eq!(p.find_violated(&[0.1, 0.1], 0.01), None);
    }

    #[test]
    fn smallest_violated_index_wins() {
        let p = NumProblem::from_rows(
            2,
            vec![vec![0], vec![1], vec![0, 1]],
            vec![1.0, 0.1, 0.1],
            UtilitySpec::Log,
        )
        .unwrap();
        assert_eq!(p.find_violated(&[0.05, 0.5], 1e-3), Some(1));
    }

    #[test]
    fn rejects_bad_instances() {
        let zero_col = NumProblem::from_rows(3, vec![vec![0, 1]], vec![1.0], UtilitySpec::Log);
        assert!(matches!(zero_col, Err(Error::InvalidInstance(msg)) if msg.contains("user 2")));
        let bad_b = NumProblem::from_rows(1, vec![vec![0]], vec![0.0], UtilitySpec::Log);
        assert!(matches!(bad_b, Err(Error::InvalidInstance(msg)) if msg.contains("b[0]")));
        let weights = NumProblem::from_rows(
            2,
            vec![vec![0, 1]],
            vec![1.0],
            UtilitySpec::WeightedLog { weights: vec![1.0] },
        );
        assert!(weights.is_err());
        let alpha = NumProblem::from_rows(
            1,
            vec![vec![0]],
            vec![1.0],
            UtilitySpec::Power { alpha: 1.0 },
        );
        assert!(alpha.is_err());
        let dup = RoutingMatrix::new(2, vec![vec![1, 0, 1]]);
        assert!(matches!(dup, Err(Error::InvalidInstance(msg)) if msg.contains("twice")));
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let p = NumProblem::from_rows(
            3,
            vec![vec![2, 0], vec![1]],
            vec![0.25, 0.4],
            UtilitySpec::Power { alpha: 2.0 },
        )
        .unwrap()
        .with_seed(7);
        let text = p.to_json();
        let back = NumProblem::from_json(&text).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.routing().row(0), &[0, 2]);

        let bad =
            r#"{"n": 2, "m": 2, "rows": [[0, 1]], "b": [1.0, 1.0], "utility": {"kind": "log"}}"#;
        let err = NumProblem::from_json(bad).unwrap_err().to_string();
        assert!(err.contains("\"rows\" has 1 entries"), "{err}");
        let bad_kind =
            r#"{"n": 1, "m": 1, "rows": [[0]], "b": [1.0], "utility": {"kind": "cubic"}}"#;
        assert!(NumProblem::from_json(bad_kind)
            .unwrap_err()
            .to_string()
            .contains("cubic"));
    }

    #[test]
    fn lipschitz_constant_is_max_row_norm() {
        let p = NumProblem::from_rows(
            4,
            vec![vec![0, 1, 2], vec![3]],
            vec![1.0, 1.0],
            UtilitySpec::Log,
        )
        .unwrap();
        assert_relative_eq!(p.constraint_lipschitz(), 3f64.sqrt());
        assert!(p.constraint_lipschitz() <= (p.n() as f64).sqrt());
    }
}
