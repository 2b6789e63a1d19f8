//! Affine matrix expressions over the scalar unknowns of a problem.
//!
//! An [`AffineExpr`] of shape `r × c` is stored in flattened form as
//! `C + Σ_k x_k M_k`, where `x_k` are the scalar unknowns of the owning
//! problem. Alongside the flattened form every expression keeps a small
//! description tree, which is only used by the text dump.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::SdpError;

/// Description tree of how an expression was assembled.
#[derive(Debug, Clone)]
pub enum ExprNode {
    Const { rows: usize, cols: usize, label: Option<String> },
    Var(String),
    Add(Arc<ExprNode>, Arc<ExprNode>),
    Sub(Arc<ExprNode>, Arc<ExprNode>),
    Neg(Arc<ExprNode>),
    Scale(f64, Arc<ExprNode>),
    LeftMul { rows: usize, cols: usize, inner: Arc<ExprNode> },
    RightMul { rows: usize, cols: usize, inner: Arc<ExprNode> },
    Transpose(Arc<ExprNode>),
    Trace(Arc<ExprNode>),
    ScalarTimes { rows: usize, cols: usize, inner: Arc<ExprNode> },
    Block(Vec<Vec<Arc<ExprNode>>>),
}

impl fmt::Display for ExprNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprNode::Const { rows, cols, label } => match label {
                Some(l) => write!(f, "{l}[{rows}x{cols}]"),
                None => write!(f, "const[{rows}x{cols}]"),
            },
            ExprNode::Var(name) => write!(f, "{name}"),
            ExprNode::Add(a, b) => write!(f, "(+ {a} {b})"),
            ExprNode::Sub(a, b) => write!(f, "(- {a} {b})"),
            ExprNode::Neg(a) => write!(f, "(neg {a})"),
            ExprNode::Scale(s, a) => write!(f, "(* {s} {a})"),
            ExprNode::LeftMul { rows, cols, inner } => {
                write!(f, "(lmul const[{rows}x{cols}] {inner})")
            }
            ExprNode::RightMul { rows, cols, inner } => {
                write!(f, "(rmul {inner} const[{rows}x{cols}])")
            }
            ExprNode::Transpose(a) => write!(f, "(T {a})"),
            ExprNode::Trace(a) => write!(f, "(trace {a})"),
            ExprNode::ScalarTimes { rows, cols, inner } => {
                write!(f, "(scalar* {inner} const[{rows}x{cols}])")
            }
            ExprNode::Block(rows) => {
                write!(f, "(block")?;
                for row in rows {
                    write!(f, " [")?;
                    for (j, e) in row.iter().enumerate() {
                        if j > 0 {
                            write!(f, " ")?;
                        }
                        write!(f, "{e}")?;
                    }
                    write!(f, "]")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct AffineExpr {
    rows: usize,
    cols: usize,
    constant: DMatrix<f64>,
    terms: BTreeMap<usize, DMatrix<f64>>,
    node: Arc<ExprNode>,
}

impl AffineExpr {
    pub fn constant(m: DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        Self {
            rows,
            cols,
            constant: m,
            terms: BTreeMap::new(),
            node: Arc::new(ExprNode::Const { rows, cols, label: None }),
        }
    }

    /// A constant with a name that shows up in problem dumps.
    pub fn named_constant(label: &str, m: DMatrix<f64>) -> Self {
        let mut e = Self::constant(m);
        e.node = Arc::new(ExprNode::Const { rows: e.rows, cols: e.cols, label: Some(label.to_string()) });
        e
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::named_constant("0", DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self::named_constant("I", DMatrix::identity(n, n))
    }

    pub fn scalar(v: f64) -> Self {
        Self::named_constant(&format!("{v}"), DMatrix::from_element(1, 1, v))
    }

    pub(crate) fn from_parts(
        rows: usize,
        cols: usize,
        terms: BTreeMap<usize, DMatrix<f64>>,
        node: ExprNode,
    ) -> Self {
        Self { rows, cols, constant: DMatrix::zeros(rows, cols), terms, node: Arc::new(node) }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn constant_part(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub(crate) fn terms(&self) -> &BTreeMap<usize, DMatrix<f64>> {
        &self.terms
    }

    pub fn node(&self) -> &ExprNode {
        &self.node
    }

    /// Largest scalar index referenced, if any.
    pub(crate) fn max_index(&self) -> Option<usize> {
        self.terms.keys().next_back().copied()
    }

    fn map(&self, rows: usize, cols: usize, node: ExprNode, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        Self {
            rows,
            cols,
            constant: f(&self.constant),
            terms: self.terms.iter().map(|(k, m)| (*k, f(m))).collect(),
            node: Arc::new(node),
        }
    }

    /// `m · self`
    pub fn left_mul(&self, m: &DMatrix<f64>) -> Result<Self, SdpError> {
        if m.ncols() != self.rows {
            return Err(SdpError::ShapeMismatch {
                op: "left_mul",
                left: m.shape(),
                right: self.shape(),
            });
        }
        let node = ExprNode::LeftMul { rows: m.nrows(), cols: m.ncols(), inner: self.node.clone() };
        Ok(self.map(m.nrows(), self.cols, node, |c| m * c))
    }

    /// `self · m`
    pub fn right_mul(&self, m: &DMatrix<f64>) -> Result<Self, SdpError> {
        if m.nrows() != self.cols {
            return Err(SdpError::ShapeMismatch {
                op: "right_mul",
                left: self.shape(),
                right: m.shape(),
            });
        }
        let node = ExprNode::RightMul { rows: m.nrows(), cols: m.ncols(), inner: self.node.clone() };
        Ok(self.map(self.rows, m.ncols(), node, |c| c * m))
    }

    pub fn transpose(&self) -> Self {
        self.map(self.cols, self.rows, ExprNode::Transpose(self.node.clone()), |c| c.transpose())
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(self.rows, self.cols, ExprNode::Scale(s, self.node.clone()), |c| c * s)
    }

    pub fn neg(&self) -> Self {
        self.map(self.rows, self.cols, ExprNode::Neg(self.node.clone()), |c| -c)
    }

    pub fn trace(&self) -> Result<Self, SdpError> {
        if self.rows != self.cols {
            return Err(SdpError::ShapeMismatch { op: "trace", left: self.shape(), right: self.shape() });
        }
        Ok(self.map(1, 1, ExprNode::Trace(self.node.clone()), |c| DMatrix::from_element(1, 1, c.trace())))
    }

    /// For a `1 × 1` expression `s`, the matrix expression `s · m`.
    pub fn scalar_times(&self, m: &DMatrix<f64>) -> Result<Self, SdpError> {
        if self.shape() != (1, 1) {
            return Err(SdpError::ShapeMismatch { op: "scalar_times", left: self.shape(), right: m.shape() });
        }
        let node = ExprNode::ScalarTimes { rows: m.nrows(), cols: m.ncols(), inner: self.node.clone() };
        Ok(self.map(m.nrows(), m.ncols(), node, |c| m * c[(0, 0)]))
    }

    fn combine(&self, other: &Self, op: &'static str, sign: f64) -> Result<Self, SdpError> {
        if self.shape() != other.shape() {
            return Err(SdpError::ShapeMismatch { op, left: self.shape(), right: other.shape() });
        }
        let mut terms = self.terms.clone();
        for (k, m) in &other.terms {
            terms
                .entry(*k)
                .and_modify(|t| *t += m * sign)
                .or_insert_with(|| m * sign);
        }
        let node = if sign > 0.0 {
            ExprNode::Add(self.node.clone(), other.node.clone())
        } else {
            ExprNode::Sub(self.node.clone(), other.node.clone())
        };
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            constant: &self.constant + &other.constant * sign,
            terms,
            node: Arc::new(node),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, SdpError> {
        self.combine(other, "add", 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, SdpError> {
        self.combine(other, "sub", -1.0)
    }

    /// Assembles a block matrix. Every block row must share a row count
    /// and every block column a column count.
    pub fn block(blocks: Vec<Vec<AffineExpr>>) -> Result<Self, SdpError> {
        let nbr = blocks.len();
        if nbr == 0 || blocks[0].is_empty() {
            return Err(SdpError::EmptyBlock);
        }
        let nbc = blocks[0].len();
        if blocks.iter().any(|r| r.len() != nbc) {
            return Err(SdpError::RaggedBlock);
        }
        let row_dims: Vec<usize> = blocks.iter().map(|r| r[0].rows).collect();
        let col_dims: Vec<usize> = (0..nbc).map(|j| blocks[0][j].cols).collect();
        for (i, row) in blocks.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                if e.rows != row_dims[i] || e.cols != col_dims[j] {
                    return Err(SdpError::ShapeMismatch {
                        op: "block",
                        left: (row_dims[i], col_dims[j]),
                        right: e.shape(),
                    });
                }
            }
        }
        let rows: usize = row_dims.iter().sum();
        let cols: usize = col_dims.iter().sum();
        let mut constant = DMatrix::zeros(rows, cols);
        let mut terms: BTreeMap<usize, DMatrix<f64>> = BTreeMap::new();
        let mut r0 = 0;
        for (i, row) in blocks.iter().enumerate() {
            let mut c0 = 0;
            for (j, e) in row.iter().enumerate() {
                let (h, w) = (row_dims[i], col_dims[j]);
                constant.view_mut((r0, c0), (h, w)).copy_from(&e.constant);
                for (k, m) in &e.terms {
                    let t = terms.entry(*k).or_insert_with(|| DMatrix::zeros(rows, cols));
                    t.view_mut((r0, c0), (h, w)).copy_from(m);
                }
                c0 += w;
            }
            r0 += row_dims[i];
        }
        let node = ExprNode::Block(blocks.iter().map(|r| r.iter().map(|e| e.node.clone()).collect()).collect());
        Ok(Self { rows, cols, constant, terms, node: Arc::new(node) })
    }

    /// Value of the expression at the given scalar assignment.
    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (k, m) in &self.terms {
            let v = x[*k];
            if v != 0.0 {
                out += m * v;
            }
        }
        out
    }

    /// Largest absolute asymmetry over the constant and every coefficient.
    pub(crate) fn asymmetry(&self) -> f64 {
        let asym = |m: &DMatrix<f64>| (m - m.transpose()).abs().max();
        self.terms.values().map(asym).fold(asym(&self.constant), f64::max)
    }

    /// `(M + Mᵀ)/2` applied to every part.
    pub(crate) fn symmetrized(&self) -> Self {
        self.map(self.rows, self.cols, (*self.node).clone(), |m| (m + m.transpose()) * 0.5)
    }

    /// Frobenius norm of the constant part.
    pub(crate) fn constant_norm(&self) -> f64 {
        self.constant.norm()
    }

    /// Drops coefficient matrices that are exactly zero.
    pub(crate) fn pruned(mut self) -> Self {
        self.terms.retain(|_, m| m.iter().any(|v| *v != 0.0));
        self
    }
}
