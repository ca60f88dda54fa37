//! Error taxonomy for the whole pipeline.
//!
//! Each stage has its own error type; [`enum@Error`] unifies them for
//! callers that run the pipeline end to end. The CLI maps the variants
//! onto exit codes, so the split here is part of the external contract.

use thiserror::Error;

use crate::syntax::Span;

/// Parse-time error with 1-based line/column.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("syntax error at {line}:{col}: {message}")]
pub struct SyntaxError {
    pub message: String,
    pub line: u32,
    pub col: u32,
}

/// Evaluation error. Aborts compilation; carries the span of the
/// expression being evaluated when one is available.
#[derive(Debug, Clone, Error)]
pub enum RuntimeError {
    #[error("unbound variable `{name}`")]
    UnboundVariable { name: String, span: Span },
    #[error("wrong number of arguments: expected {expected}, got {got}")]
    WrongArity {
        expected: usize,
        got: usize,
        span: Span,
    },
    #[error("application of a non-procedure value `{text}`")]
    NonProcedure { text: String, span: Span },
    #[error("type error in `{prim}`: {message}")]
    TypeError {
        prim: &'static str,
        message: String,
        span: Span,
    },
    #[error("division by zero")]
    DivisionByZero { span: Span },
    #[error("deterministic step budget of {budget} exceeded (suspected non-probabilistic loop)")]
    StepBudget { budget: u64 },
}

impl RuntimeError {
    pub fn span(&self) -> Option<Span> {
        match self {
            RuntimeError::UnboundVariable { span, .. }
            | RuntimeError::WrongArity { span, .. }
            | RuntimeError::NonProcedure { span, .. }
            | RuntimeError::TypeError { span, .. }
            | RuntimeError::DivisionByZero { span } => Some(*span),
            RuntimeError::StepBudget { .. } => None,
        }
    }
}

/// Graph construction violations.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum FspnError {
    #[error("edge out of a sink node {node} (indicator and reference nodes have no children)")]
    EdgeFromSink { node: usize },
    #[error("edge weight {weight} outside [0, 1]")]
    BadWeight { weight: f64 },
    #[error("missing reference value for root {root}, value `{value}`")]
    MissingReference { root: usize, value: String },
}

/// Compilation failure.
#[derive(Debug, Clone, Error)]
pub enum CompileError {
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(
        "{which} budget of {budget} exceeded (suspected infinite support); \
         largest subproblem frontier: {frontier}"
    )]
    BudgetExceeded {
        which: &'static str,
        budget: u64,
        frontier: String,
    },
}

/// Solver failure.
#[derive(Debug, Clone, Error)]
pub enum SolveError {
    #[error(
        "component of {size} variable(s) did not converge after {iterations} iterations \
         (residual {residual:e})"
    )]
    NoConvergence {
        size: usize,
        iterations: u64,
        residual: f64,
    },
    #[error("equation size budget of {budget} monomials exceeded while extracting equations")]
    EquationBudget { budget: usize },
    #[error(
        "total mass {total:e} is below tolerance; cannot normalize (condition has probability 0)"
    )]
    ZeroMass { total: f64 },
}

/// Any failure along parse -> compile -> solve.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

impl From<RuntimeError> for Error {
    fn from(e: RuntimeError) -> Self {
        Error::Compile(CompileError::Runtime(e))
    }
}
