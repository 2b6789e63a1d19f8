//! A minimal semidefinite-programming facade for desk-scale control problems.
//!
//! Problems are modelled with named matrix or scalar unknowns, affine
//! expressions built from them, PSD constraints `expr ⪰ margin·I`, affine
//! equalities and a linear objective. [`SdpProblem::solve`] runs a dense
//! primal-dual interior-point method and certifies the returned point against
//! every constraint.
//!
//! ```
//! use ddc_sdp::{AffineExpr, SdpProblem, SolveStatus};
//! use nalgebra::DMatrix;
//!
//! let mut p = SdpProblem::new();
//! let x = p.symmetric("X", 1).unwrap();
//! p.psd("X >= I", x.expr().sub(&AffineExpr::identity(1)).unwrap()).unwrap();
//! p.minimize(x.expr().trace().unwrap()).unwrap();
//! let sol = p.solve().unwrap();
//! assert_eq!(sol.status, SolveStatus::Optimal);
//! assert!((sol.objective_value.unwrap() - 1.0).abs() < 1e-6);
//! # let _ = DMatrix::<f64>::zeros(1, 1);
//! ```
//!
//! At most [`MAX_SCALARS`] scalar unknowns are accepted per problem.

mod error;
mod expr;
mod problem;
mod solver;

pub use error::SdpError;
pub use expr::{AffineExpr, ExprNode};
pub use problem::{
    ConstraintResidual, SdpProblem, SdpSolution, Sense, SolveStatus, VarKind, Variable, MAX_SCALARS,
    STRICT_MARGIN, SYMMETRY_TOL,
};
pub use solver::SolverSettings;
