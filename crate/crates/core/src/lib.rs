//! Exact marginal inference for discrete probabilistic programs.
//!
//! A Church-style program is driven through a coroutine interpreter that
//! yields at random choices and at procedure applications. The compiler
//! explores every execution path once per distinct subproblem, producing a
//! factored sum-product network whose reference nodes capture (possibly
//! cyclic) dependencies between subdistributions. The induced polynomial
//! equation system is then solved by strongly-connected-component
//! clustering with fixed-point iteration or Newton's method, yielding the
//! program's exact distribution on return values — including for programs
//! such as rejection samplers where every return value is reachable
//! through infinitely many execution paths.

pub mod compile;
pub mod error;
pub mod fspn;
pub mod interp;
pub mod pipeline;
pub mod solve;
pub mod syntax;

pub use compile::{build_fspn, CompileOptions, CompileState};
pub use error::{CompileError, Error, FspnError, RuntimeError, SolveError, SyntaxError};
pub use fspn::{Distribution, Fspn, NodeId, NodeKind};
pub use interp::{Continuation, Interpreter, InterpreterArg, PartialResult};
pub use pipeline::{run_program, PipelineOptions, PipelineOutput};
pub use solve::{
    extract_equations, marginal, scc_decompose, EquationSystem, SolveMethod, SolveOptions,
    SolveReport,
};
pub use syntax::{parse_program, Store};
