//! Torus-symmetric Kähler local models `T_C^{n-k} x C^r`: moment maps from a
//! potential, the imaginary-time flow of `phi(mu)`, the complex structures
//! and metrics it induces, and the degeneration of the Kähler polarization
//! to the mixed one.

// `!(x > tol)` is used on purpose so that NaN fails every positivity gate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calculus;
pub mod error;
pub mod field;
pub mod flow;
pub mod linalg;
pub mod model;
pub mod polarization;
pub mod scenario;
pub mod structure;

pub use calculus::{
    build_frame, moment_map, ConvexFunction, InvarianceOptions, KahlerPotential, MomentValue,
    SymplecticFrame,
};
pub use error::{Error, Result};
pub use field::{Env, Expr, FieldKind, ScalarField, Var};
pub use flow::{closed_flow, lie_series, Coord, FlowRates, FlowState, LaurentPoly, SeriesDiagnostics};
pub use linalg::{CMatrix, RMatrix, RVector};
pub use model::{LocalModel, ModelPoint, RegularityReport};
pub use num_complex::Complex64;
pub use polarization::{ComplexSubspace, PolarizationReport, SweepRow};
pub use scenario::{builtin_scenario, list_builtins, Prepared, Scenario, Tolerances};
pub use structure::{complex_structure, BlockJacobian, ComplexStructureAt, Transition};
