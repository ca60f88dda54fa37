//! Surface language: reader, lowering, interning, free-variable analysis.

mod lower;
mod parse;
mod store;
mod types;

pub use lower::{parse, program_body, TopForm};
pub use parse::{line_col, parse_number, read_forms, Datum, DatumKind};
pub use store::{primitive_for, Env, GroupInfo, Store};
pub use types::{EnvId, ExprId, ExprKind, GroupId, Primitive, Span, SymbolId, Value, ValueId};

use crate::error::SyntaxError;

/// Procedures that need to call back into user code are defined in the
/// language itself, so that their inner applications cede control and get
/// factored like any other call.
pub const PRELUDE: &str = "\
(define (map f lst)
  (if (null? lst)
      '()
      (cons (f (car lst)) (map f (cdr lst)))))
(define (repeat n f)
  (if (< n 1)
      '()
      (cons (f) (repeat (- n 1) f))))
";

/// Parse a full program: prelude plus user text, assembled into a single
/// body whose last expression is the program's result. A user top-level
/// definition shadows the prelude procedure of the same name, mirroring
/// how primitives can be shadowed.
pub fn parse_program(store: &mut Store, text: &str) -> Result<ExprId, SyntaxError> {
    let prelude = parse(store, PRELUDE, Span::PRELUDE_SOURCE)?;
    let user = parse(store, text, 1)?;
    let user_defs: Vec<SymbolId> = user
        .iter()
        .filter_map(|f| match f {
            TopForm::Define(name, _) => Some(*name),
            TopForm::Expr(_) => None,
        })
        .collect();
    let mut forms: Vec<TopForm> = prelude
        .into_iter()
        .filter(|f| match f {
            TopForm::Define(name, _) => !user_defs.contains(name),
            TopForm::Expr(_) => true,
        })
        .collect();
    forms.extend(user);
    program_body(store, &forms)
}
