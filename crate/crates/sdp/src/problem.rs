use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::SdpError;
use crate::expr::{AffineExpr, ExprNode};
use crate::solver::{self, SolverSettings};

/// Asymmetry above this is rejected when adding a PSD constraint.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Relative strictness margin used by [`SdpProblem::strict`].
pub const STRICT_MARGIN: f64 = 1e-6;

/// Upper bound on the number of scalar unknowns accepted by [`SdpProblem::solve`].
pub const MAX_SCALARS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Symmetric(usize),
    Matrix(usize, usize),
    Scalar,
}

impl VarKind {
    fn scalar_count(self) -> usize {
        match self {
            VarKind::Symmetric(n) => n * (n + 1) / 2,
            VarKind::Matrix(r, c) => r * c,
            VarKind::Scalar => 1,
        }
    }

    fn shape(self) -> (usize, usize) {
        match self {
            VarKind::Symmetric(n) => (n, n),
            VarKind::Matrix(r, c) => (r, c),
            VarKind::Scalar => (1, 1),
        }
    }
}

/// Handle to a declared variable block.
#[derive(Debug, Clone)]
pub struct Variable {
    name: String,
    kind: VarKind,
    offset: usize,
}

impl Variable {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> VarKind {
        self.kind
    }

    /// The variable as an affine expression.
    pub fn expr(&self) -> AffineExpr {
        let (rows, cols) = self.kind.shape();
        let mut terms = BTreeMap::new();
        match self.kind {
            VarKind::Symmetric(n) => {
                let mut k = self.offset;
                for i in 0..n {
                    for j in i..n {
                        let mut m = DMatrix::zeros(n, n);
                        m[(i, j)] = 1.0;
                        m[(j, i)] = 1.0;
                        terms.insert(k, m);
                        k += 1;
                    }
                }
            }
            VarKind::Matrix(r, c) => {
                for i in 0..r {
                    for j in 0..c {
                        let mut m = DMatrix::zeros(r, c);
                        m[(i, j)] = 1.0;
                        terms.insert(self.offset + i * c + j, m);
                    }
                }
            }
            VarKind::Scalar => {
                terms.insert(self.offset, DMatrix::from_element(1, 1, 1.0));
            }
        }
        AffineExpr::from_parts(rows, cols, terms, ExprNode::Var(self.name.clone()))
    }

    fn value_from(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.expr().eval(x)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct PsdConstraint {
    pub name: String,
    pub expr: AffineExpr,
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct EqConstraint {
    pub name: String,
    pub expr: AffineExpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone)]
pub(crate) struct Objective {
    pub sense: Sense,
    pub expr: AffineExpr,
}

/// A problem over named matrix/scalar unknowns with affine PSD constraints,
/// affine equalities and a linear objective.
#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    vars: Vec<Variable>,
    n_scalars: usize,
    pub(crate) psd: Vec<PsdConstraint>,
    pub(crate) eq: Vec<EqConstraint>,
    pub(crate) objective: Option<Objective>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    fn declare(&mut self, name: &str, kind: VarKind) -> Result<Variable, SdpError> {
        if self.vars.iter().any(|v| v.name == name) {
            return Err(SdpError::DuplicateName(name.to_string()));
        }
        let v = Variable { name: name.to_string(), kind, offset: self.n_scalars };
        self.n_scalars += kind.scalar_count();
        self.vars.push(v.clone());
        Ok(v)
    }

    pub fn symmetric(&mut self, name: &str, n: usize) -> Result<Variable, SdpError> {
        self.declare(name, VarKind::Symmetric(n))
    }

    pub fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> Result<Variable, SdpError> {
        self.declare(name, VarKind::Matrix(rows, cols))
    }

    pub fn scalar(&mut self, name: &str) -> Result<Variable, SdpError> {
        self.declare(name, VarKind::Scalar)
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn scalar_count(&self) -> usize {
        self.n_scalars
    }

    fn check_refs(&self, e: &AffineExpr) -> Result<(), SdpError> {
        match e.max_index() {
            Some(k) if k >= self.n_scalars => Err(SdpError::UnknownVariable(k)),
            _ => Ok(()),
        }
    }

    /// Requires `expr ⪰ margin · I`.
    pub fn psd_with_margin(&mut self, name: &str, expr: AffineExpr, margin: f64) -> Result<(), SdpError> {
        let (rows, cols) = expr.shape();
        if rows != cols {
            return Err(SdpError::NotSquare { name: name.to_string(), rows, cols });
        }
        self.check_refs(&expr)?;
        let deviation = expr.asymmetry();
        if deviation > SYMMETRY_TOL {
            return Err(SdpError::Asymmetric { name: name.to_string(), deviation });
        }
        self.psd.push(PsdConstraint { name: name.to_string(), expr: expr.symmetrized().pruned(), margin });
        Ok(())
    }

    /// Requires `expr ⪰ 0`.
    pub fn psd(&mut self, name: &str, expr: AffineExpr) -> Result<(), SdpError> {
        self.psd_with_margin(name, expr, 0.0)
    }

    /// Realizes `expr ≻ 0` as `expr ⪰ εI` with `ε = 1e-6 · max(1, ‖constant‖_F)`.
    pub fn strict(&mut self, name: &str, expr: AffineExpr) -> Result<(), SdpError> {
        let margin = STRICT_MARGIN * expr.constant_norm().max(1.0);
        self.psd_with_margin(name, expr, margin)
    }

    /// Requires every entry of `expr` to vanish.
    pub fn equal_zero(&mut self, name: &str, expr: AffineExpr) -> Result<(), SdpError> {
        self.check_refs(&expr)?;
        self.eq.push(EqConstraint { name: name.to_string(), expr: expr.pruned() });
        Ok(())
    }

    fn set_objective(&mut self, sense: Sense, expr: AffineExpr) -> Result<(), SdpError> {
        if expr.shape() != (1, 1) {
            return Err(SdpError::ObjectiveShape(expr.shape()));
        }
        self.check_refs(&expr)?;
        self.objective = Some(Objective { sense, expr });
        Ok(())
    }

    pub fn minimize(&mut self, expr: AffineExpr) -> Result<(), SdpError> {
        self.set_objective(Sense::Minimize, expr)
    }

    pub fn maximize(&mut self, expr: AffineExpr) -> Result<(), SdpError> {
        self.set_objective(Sense::Maximize, expr)
    }

    pub fn solve(&self) -> Result<SdpSolution, SdpError> {
        self.solve_with(&SolverSettings::default())
    }

    pub fn solve_with(&self, settings: &SolverSettings) -> Result<SdpSolution, SdpError> {
        if self.n_scalars > MAX_SCALARS {
            return Err(SdpError::TooLarge { count: self.n_scalars, limit: MAX_SCALARS });
        }
        let raw = solver::solve(self, settings);
        Ok(self.package(raw, settings))
    }

    fn package(&self, raw: solver::RawOutcome, settings: &SolverSettings) -> SdpSolution {
        let mut status = raw.status;
        let mut message = raw.message;
        let mut values = BTreeMap::new();
        let mut objective_value = None;
        let mut residuals = Vec::new();
        if let Some(x) = &raw.x {
            for v in &self.vars {
                values.insert(v.name.clone(), v.value_from(x));
            }
            for c in &self.psd {
                let m = c.expr.eval(x);
                let min_eig = m.symmetric_eigenvalues().min();
                residuals.push(ConstraintResidual { name: c.name.clone(), min_eigenvalue: min_eig, margin: c.margin });
            }
            for c in &self.eq {
                let m = c.expr.eval(x);
                residuals.push(ConstraintResidual {
                    name: c.name.clone(),
                    min_eigenvalue: -m.abs().max(),
                    margin: 0.0,
                });
            }
            if let Some(obj) = &self.objective {
                objective_value = Some(obj.expr.eval(x)[(0, 0)]);
            }
            if matches!(status, SolveStatus::Optimal | SolveStatus::Feasible) {
                if let Some(worst) = residuals
                    .iter()
                    .find(|r| r.min_eigenvalue < -settings.feas_tol)
                {
                    message = format!(
                        "constraint `{}` violated at returned point (min eig {:e})",
                        worst.name, worst.min_eigenvalue
                    );
                    status = SolveStatus::NumericalFailure;
                }
            }
        }
        if !matches!(status, SolveStatus::Optimal | SolveStatus::Feasible) {
            log::debug!("sdp solve ended with {status:?}: {message}");
        }
        SdpSolution { status, values, objective_value, residuals, message, iterations: raw.iterations }
    }

    /// Plain-text dump: a variable table followed by one expression tree per
    /// constraint.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "variables {}", self.vars.len());
        for v in &self.vars {
            let kind = match v.kind {
                VarKind::Symmetric(n) => format!("symmetric {n}"),
                VarKind::Matrix(r, c) => format!("matrix {r} {c}"),
                VarKind::Scalar => "scalar".to_string(),
            };
            let _ = writeln!(s, "  {} {} offset={} scalars={}", v.name, kind, v.offset, v.kind.scalar_count());
        }
        let _ = writeln!(s, "constraints {}", self.psd.len() + self.eq.len());
        for c in &self.psd {
            let (n, _) = c.expr.shape();
            let _ = writeln!(s, "  psd {} order={} margin={:e}", c.name, n, c.margin);
            let _ = writeln!(s, "    {}", c.expr.node());
        }
        for c in &self.eq {
            let (r, cc) = c.expr.shape();
            let _ = writeln!(s, "  eq {} shape={}x{}", c.name, r, cc);
            let _ = writeln!(s, "    {}", c.expr.node());
        }
        match &self.objective {
            Some(o) => {
                let sense = match o.sense {
                    Sense::Minimize => "minimize",
                    Sense::Maximize => "maximize",
                };
                let _ = writeln!(s, "objective {sense}");
                let _ = writeln!(s, "  {}", o.expr.node());
            }
            None => {
                let _ = writeln!(s, "objective feasibility");
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    NumericalFailure,
}

/// Minimum eigenvalue of a constraint at the returned point. Equalities
/// report minus their largest absolute entry.
#[derive(Debug, Clone)]
pub struct ConstraintResidual {
    pub name: String,
    pub min_eigenvalue: f64,
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub values: BTreeMap<String, DMatrix<f64>>,
    pub objective_value: Option<f64>,
    pub residuals: Vec<ConstraintResidual>,
    pub message: String,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn is_success(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::Feasible)
    }

    pub fn value(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.values.get(name)
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.values.get(name).map(|m| m[(0, 0)])
    }

    /// Smallest constraint residual (minimum eigenvalue) across all constraints.
    pub fn min_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.min_eigenvalue).fold(f64::INFINITY, f64::min)
    }
}
