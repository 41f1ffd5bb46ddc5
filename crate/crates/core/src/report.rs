//! Run outcomes shared by the solvers, and the JSON result-file layout.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ellipsoid::EmReport;
use crate::mirror::MdReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The algorithm's own stopping rule fired (or the iteration budget was spent).
    CriterionMet,
    /// The safety cap stopped the run before the stopping rule fired.
    CapHit,
    /// The run ended without a single productive step, so there is no certified output.
    NoProductiveSteps,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::CriterionMet => "criterion_met",
            StopReason::CapHit => "cap_hit",
            StopReason::NoProductiveSteps => "no_productive_steps",
        }
    }

    pub fn is_success(self) -> bool {
        self == StopReason::CriterionMet
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StopReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "criterion_met" => Ok(StopReason::CriterionMet),
            "cap_hit" => Ok(StopReason::CapHit),
            "no_productive_steps" => Ok(StopReason::NoProductiveSteps),
            other => Err(format!("unknown stop reason {other:?}")),
        }
    }
}

/// Solver identifiers used in result files and benchmark records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Mirror descent with best-productive-iterate output.
    Md1,
    /// Mirror descent with the adaptive stopping rule and weighted-average output.
    Md2,
    /// Ellipsoid method on the dual.
    Em,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Md1 => "md1",
            Algorithm::Md2 => "md2",
            Algorithm::Em => "em",
        }
    }

    /// Short label used in the comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Md1 => "A1",
            Algorithm::Md2 => "A2",
            Algorithm::Em => "EM",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "md1" => Ok(Algorithm::Md1),
            "md2" => Ok(Algorithm::Md2),
            "em" => Ok(Algorithm::Em),
            other => Err(format!(
                "unknown algorithm {other:?} (expected md1, md2 or em)"
            )),
        }
    }
}

/// Result file written by `num solve`. The ellipsoid-only fields are omitted
/// for mirror-descent runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub algorithm: Algorithm,
    pub eps: f64,
    pub theta0: Option<f64>,
    pub mode: String,
    pub iters: u64,
    pub productive: u64,
    pub unproductive: u64,
    pub objective: Option<f64>,
    pub utility: Option<f64>,
    pub max_violation: f64,
    pub wall_time_ms: f64,
    pub stop_reason: StopReason,
    pub solution: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate_support: Option<usize>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl From<&MdReport> for ResultFile {
    fn from(r: &MdReport) -> Self {
        ResultFile {
            algorithm: r.algorithm,
            eps: r.eps,
            theta0: Some(r.theta0),
            mode: r.mode.as_str().to_string(),
            iters: r.total_iters,
            productive: r.productive_count,
            unproductive: r.unproductive_count,
            objective: finite(r.objective),
            utility: finite(-r.objective),
            max_violation: r.max_violation,
            wall_time_ms: r.wall_time.as_secs_f64() * 1e3,
            stop_reason: r.stop_reason,
            solution: r.solution.clone(),
            radius: None,
            lambda: None,
            dual_value: None,
            gap: None,
            violation_norm: None,
            certificate_support: None,
        }
    }
}

impl From<&EmReport> for ResultFile {
    fn from(r: &EmReport) -> Self {
        ResultFile {
            algorithm: Algorithm::Em,
            eps: r.eps,
            theta0: None,
            mode: r.direction.as_str().to_string(),
            iters: r.iterations,
            productive: r.productive_count,
            unproductive: r.iterations - r.productive_count,
            objective: finite(-r.primal_utility),
            utility: finite(r.primal_utility),
            max_violation: r.max_violation,
            wall_time_ms: r.wall_time.as_secs_f64() * 1e3,
            stop_reason: r.stop_reason,
            solution: r.recovered_x.clone(),
            radius: Some(r.radius),
            lambda: Some(r.lambda_best.clone()),
            dual_value: Some(r.dual_value),
            gap: finite(r.gap),
            violation_norm: Some(r.violation_norm),
            certificate_support: Some(r.certificate_support),
        }
    }
}

impl ResultFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}
