//! Test functions as exact jet fields, numerical drift-sign verification on
//! high-energy shells, and moment and total-variation bounds.

pub mod bounds;
pub mod fields;
pub mod verify;
pub mod wonham;

pub use bounds::{lower_bound_tv, moment_growth_bound, validate_moments, BoundVariant, MomentBound, MomentCheckRow};
pub use fields::{build_test_function, Family, Field, FieldParams, FieldValues, FnField, TestField, TestFunctionSpec};
pub use verify::{
    field_parameters, verify_sign, Predicate, SamplerKind, ShellRow, ShellSampler, ShellSpec, VerificationReport,
    Violation,
};
pub use wonham::{wonham_report, Hypothesis, RatioShell, WonhamReport, WonhamSpec};
