//! Network utility maximization.
//!
//! Maximize `sum_k u_k(x_k)` over user rates subject to `C x <= b`, with a
//! boolean routing matrix `C` and link capacities `b`. The crate provides
//!
//! * the instance model and its oracles ([`problem`]),
//! * adaptive mirror descent for many constraints ([`mirror`]),
//! * the Lagrangian dual ([`dual`]) and an ellipsoid method on it with primal
//!   recovery ([`ellipsoid`]),
//! * an exact KKT solver for tiny instances ([`oracle`]),
//! * a seeded instance generator and benchmark sweeps ([`bench`]).

pub mod bench;
pub mod dual;
pub mod ellipsoid;
pub mod error;
pub mod mirror;
pub mod oracle;
pub mod problem;
pub mod report;

pub use bench::{
    emit_report, generate_instance, run_bench, BenchConfig, GridCell, InstanceSpec, ReportFormat,
    ResultRecord,
};
pub use dual::{best_response, dual_subgradient, dual_value, duality_gap, DualOracle};
pub use ellipsoid::{
    build_certificate, em_run, em_step, Certificate, CertificatePolicy, Direction, EllipsoidState,
    EmConfig, EmReport,
};
pub use error::{Error, Result};
pub use mirror::{project, run_alg1, run_alg2, v_f_gap, MdConfig, MdReport, Mode, ViolationPolicy};
pub use oracle::{reference_solution, ReferenceSolution};
pub use problem::{NumProblem, RoutingMatrix, UtilitySpec};
pub use report::{Algorithm, ResultFile, StopReason};
