//! Certified solver for the Crisanti–Sommers variational problem of
//! spherical mixed p-spin glasses.

pub mod ansatz;
pub mod dual;
pub mod error;
pub mod measure;
pub mod model;
mod poly;
pub mod primal;
pub mod quad;
pub mod signs;
pub mod solver;
pub mod tolerances;

pub use error::{Error, Result};
pub use measure::{
    validate, Atom, DiscreteMeasure, GridMeasure, Measure, MeasureDiagnostics, MeasureSpec,
    ParisiMeasure, PhiFunction, Segment,
};
pub use model::MixedModel;
pub use signs::{sign_pattern, Component, ComponentSign, Interval, SignKind, SignPattern};
pub use primal::{mass_gradient, primal_value, varineq_residual, Primal};
pub use tolerances::Tolerances;
pub use dual::{
    build_dual, certify, certify_with, dual_value, gap_function, ConsistencyEntry, DualCertificate,
    DualFunction,
};
pub use ansatz::{family_from_pattern, project_feasible, realize, AnsatzFamily, ParamVector, Slot, SlotKind};
pub use solver::oracle::{grid_oracle, Cluster, OracleResult};
pub use solver::sweep::{sweep, SweepRow};
pub use solver::{
    classify, prune, rs_quick_tests, solve, PhaseLabel, RSDiagnostics, SolveOptions, SolveReport,
    SolveStatus,
};
