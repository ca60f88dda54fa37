//! Interned domain types: values, expressions, environments, symbols.
//!
//! Everything the interpreter touches is hash-consed into small integer ids
//! so that structural equality is an integer comparison. This is what makes
//! subproblem identification constant-time during compilation.

use num::BigRational;

/// Interned symbol (variable or symbol literal name).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymbolId(pub u32);

/// Interned value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ValueId(pub u32);

/// Interned expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExprId(pub u32);

/// Interned environment (sorted binding list).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EnvId(pub u32);

/// Interned recursive definition group: the `(name, lambda)` pairs of a
/// run of mutually recursive procedure definitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupId(pub u32);

/// Byte range into a source text, plus which source it came from
/// (0 is reserved for the built-in prelude).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Span {
    pub source: u16,
    pub start: u32,
    pub end: u32,
}

impl Span {
    pub const PRELUDE_SOURCE: u16 = 0;

    pub fn new(source: u16, start: usize, end: usize) -> Self {
        Span {
            source,
            start: start as u32,
            end: end as u32,
        }
    }

    pub fn synthetic() -> Self {
        Span {
            source: u16::MAX,
            start: 0,
            end: 0,
        }
    }
}

/// Built-in procedures. `Flip`, `UniformDraw` and `Multinomial` are the
/// elementary random primitives; everything else is deterministic and
/// evaluated inline by the interpreter without ceding control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Primitive {
    Flip,
    UniformDraw,
    Multinomial,
    Not,
    EqP,
    EqualP,
    NumEq,
    Less,
    Add,
    Sub,
    Mul,
    Div,
    List,
    ListRef,
    Sum,
    NullP,
    Car,
    Cdr,
    Cons,
}

impl Primitive {
    /// Source-level name, also used in printed values.
    pub fn name(self) -> &'static str {
        match self {
            Primitive::Flip => "flip",
            Primitive::UniformDraw => "uniform-draw",
            Primitive::Multinomial => "multinomial",
            Primitive::Not => "not",
            Primitive::EqP => "eq?",
            Primitive::EqualP => "equal?",
            Primitive::NumEq => "=",
            Primitive::Less => "<",
            Primitive::Add => "+",
            Primitive::Sub => "-",
            Primitive::Mul => "*",
            Primitive::Div => "/",
            Primitive::List => "list",
            Primitive::ListRef => "list-ref",
            Primitive::Sum => "sum",
            Primitive::NullP => "null?",
            Primitive::Car => "car",
            Primitive::Cdr => "cdr",
            Primitive::Cons => "cons",
        }
    }

    pub fn from_name(name: &str) -> Option<Primitive> {
        Some(match name {
            "flip" => Primitive::Flip,
            "uniform-draw" => Primitive::UniformDraw,
            "multinomial" => Primitive::Multinomial,
            "not" => Primitive::Not,
            "eq?" => Primitive::EqP,
            "equal?" => Primitive::EqualP,
            "=" => Primitive::NumEq,
            "<" => Primitive::Less,
            "+" => Primitive::Add,
            "-" => Primitive::Sub,
            "*" => Primitive::Mul,
            "/" => Primitive::Div,
            "list" => Primitive::List,
            "list-ref" => Primitive::ListRef,
            "sum" => Primitive::Sum,
            "null?" => Primitive::NullP,
            "car" => Primitive::Car,
            "cdr" => Primitive::Cdr,
            "cons" => Primitive::Cons,
            _ => return None,
        })
    }

    /// True for the random primitives whose application yields a
    /// `RandomChoice` rather than a value.
    pub fn is_erp(self) -> bool {
        matches!(
            self,
            Primitive::Flip | Primitive::UniformDraw | Primitive::Multinomial
        )
    }
}

/// An interned program value.
///
/// Closures are acyclic: a recursively defined procedure stores the
/// definition group it belongs to instead of a self-referential
/// environment, and siblings are reconstructed at application time.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Bool(bool),
    Num(BigRational),
    Sym(SymbolId),
    Str(String),
    Nil,
    Pair(ValueId, ValueId),
    Closure {
        lambda: ExprId,
        env: EnvId,
        group: Option<GroupId>,
    },
    Prim(Primitive),
}

/// Structure of an interned expression. Children are expression ids, so
/// structurally identical subtrees share one id regardless of where they
/// occur in the source.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ExprKind {
    /// Literal constant (shared with quoted data).
    Const(ValueId),
    /// Quoted datum; evaluates exactly like `Const`.
    Quote(ValueId),
    Var(SymbolId),
    Lambda {
        params: Vec<SymbolId>,
        body: ExprId,
    },
    Apply {
        func: ExprId,
        args: Vec<ExprId>,
    },
    If {
        cond: ExprId,
        then_: ExprId,
        else_: ExprId,
    },
    /// A body: local definitions followed by one or more expressions.
    /// The value of the last expression is the value of the body.
    Body {
        defines: Vec<(SymbolId, ExprId)>,
        exprs: Vec<ExprId>,
    },
}
