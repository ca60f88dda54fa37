//! Lowering from read s-expressions to interned core expressions.
//!
//! Fixed sugar set: named `define`, `let`, `and`/`or`, and `query`.
//! `query` desugars into a self-recursive rejection loop, so conditioning
//! never exists in the core language: it is marginalization of the loop.
//!
//! `and`/`or` lower to `if` chains, so `(or a b)` yields `#t` rather than
//! the value of `a` when `a` is true; operands are treated as conditions.
//!
//! Mutually recursive procedures must be defined in one consecutive run
//! of `define` forms; a procedure referring forward across an intervening
//! value definition fails at call time with an unbound-variable error.

use num::BigRational;

use super::parse::{line_col, read_forms, Datum, DatumKind};
use super::store::Store;
use super::types::{ExprId, ExprKind, Primitive, Span, SymbolId, Value, ValueId};
use crate::error::SyntaxError;

/// Reserved names used by the `query` expansion. They contain `#`, which
/// the reader rejects inside user symbols, so user code cannot capture
/// them.
const QUERY_SAMPLE: &str = "query#sample";
const QUERY_LOOP: &str = "query#loop";
const QUERY_VALUE: &str = "query#s";

/// A lowered top-level form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopForm {
    Define(SymbolId, ExprId),
    Expr(ExprId),
}

struct Lower<'a> {
    store: &'a mut Store,
    text: &'a str,
}

impl<'a> Lower<'a> {
    fn err(&self, span: Span, msg: impl Into<String>) -> SyntaxError {
        let (line, col) = line_col(self.text, span.start as usize);
        SyntaxError {
            message: msg.into(),
            line,
            col,
        }
    }

    fn special_form<'d>(&self, d: &'d Datum) -> Option<&'d str> {
        if let DatumKind::List(items) = &d.kind {
            if let Some(Datum {
                kind: DatumKind::Sym(name),
                ..
            }) = items.first()
            {
                return Some(name.as_str());
            }
        }
        None
    }

    fn is_define(&self, d: &Datum) -> bool {
        self.special_form(d) == Some("define")
    }

    fn lower_form(&mut self, d: &Datum) -> Result<TopForm, SyntaxError> {
        if self.is_define(d) {
            let (name, rhs) = self.lower_define(d)?;
            Ok(TopForm::Define(name, rhs))
        } else {
            Ok(TopForm::Expr(self.lower_expr(d)?))
        }
    }

    /// `(define name expr)` or `(define (name params...) body...)`.
    fn lower_define(&mut self, d: &Datum) -> Result<(SymbolId, ExprId), SyntaxError> {
        let items = match &d.kind {
            DatumKind::List(items) => items,
            _ => unreachable!("checked by is_define"),
        };
        match items.get(1) {
            Some(Datum {
                kind: DatumKind::Sym(name),
                ..
            }) => {
                if items.len() != 3 {
                    return Err(self.err(d.span, "define expects exactly one value expression"));
                }
                let name = self.store.symbol(name);
                let rhs = self.lower_expr(&items[2])?;
                Ok((name, rhs))
            }
            Some(Datum {
                kind: DatumKind::List(header),
                span: hspan,
            }) => {
                let (name, params) = self.lower_param_list(header, *hspan)?;
                if items.len() < 3 {
                    return Err(self.err(d.span, "procedure define has an empty body"));
                }
                let body = self.lower_body(&items[2..], d.span)?;
                let lambda = self
                    .store
                    .intern_expr(ExprKind::Lambda { params, body }, d.span);
                Ok((name, lambda))
            }
            _ => Err(self.err(d.span, "define expects a name or a (name params...) header")),
        }
    }

    fn lower_param_list(
        &mut self,
        header: &[Datum],
        span: Span,
    ) -> Result<(SymbolId, Vec<SymbolId>), SyntaxError> {
        let mut syms = Vec::with_capacity(header.len());
        for p in header {
            match &p.kind {
                DatumKind::Sym(s) => syms.push(self.store.symbol(s)),
                _ => return Err(self.err(p.span, "parameter is not a symbol")),
            }
        }
        let (name, params) = syms
            .split_first()
            .ok_or_else(|| self.err(span, "empty procedure header"))?;
        let params = params.to_vec();
        let mut seen = params.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != params.len() {
            return Err(self.err(span, "duplicate parameter name"));
        }
        Ok((*name, params))
    }

    /// Lower body forms: definitions only at the head, then at least one
    /// expression.
    fn lower_body(&mut self, forms: &[Datum], span: Span) -> Result<ExprId, SyntaxError> {
        let mut defines = Vec::new();
        let mut idx = 0;
        while idx < forms.len() && self.is_define(&forms[idx]) {
            defines.push(self.lower_define(&forms[idx])?);
            idx += 1;
        }
        let mut names: Vec<SymbolId> = defines.iter().map(|&(n, _)| n).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != defines.len() {
            return Err(self.err(span, "duplicate definition in one body"));
        }
        let mut exprs = Vec::new();
        for form in &forms[idx..] {
            if self.is_define(form) {
                return Err(self.err(form.span, "define is only legal at the head of a body"));
            }
            exprs.push(self.lower_expr(form)?);
        }
        if exprs.is_empty() {
            return Err(self.err(span, "body has no result expression"));
        }
        Ok(self.make_body(defines, exprs, span))
    }

    fn make_body(
        &mut self,
        defines: Vec<(SymbolId, ExprId)>,
        exprs: Vec<ExprId>,
        span: Span,
    ) -> ExprId {
        if defines.is_empty() && exprs.len() == 1 {
            return exprs[0];
        }
        self.store
            .intern_expr(ExprKind::Body { defines, exprs }, span)
    }

    fn lower_expr(&mut self, d: &Datum) -> Result<ExprId, SyntaxError> {
        match &d.kind {
            DatumKind::Bool(b) => {
                let v = self.store.bool_value(*b);
                Ok(self.store.intern_expr(ExprKind::Const(v), d.span))
            }
            DatumKind::Num(n) => {
                let v = self.store.num_value(n.clone());
                Ok(self.store.intern_expr(ExprKind::Const(v), d.span))
            }
            DatumKind::Str(s) => {
                let v = self.store.intern_value(Value::Str(s.clone()));
                Ok(self.store.intern_expr(ExprKind::Const(v), d.span))
            }
            DatumKind::Sym(s) => {
                let sym = self.store.symbol(s);
                Ok(self.store.intern_expr(ExprKind::Var(sym), d.span))
            }
            DatumKind::List(items) => self.lower_list(d, items),
        }
    }

    fn lower_list(&mut self, d: &Datum, items: &[Datum]) -> Result<ExprId, SyntaxError> {
        match self.special_form(d) {
            Some("define") => Err(self.err(d.span, "define is not legal in expression position")),
            Some("quote") => {
                if items.len() != 2 {
                    return Err(self.err(d.span, "quote expects exactly one datum"));
                }
                let v = self.quote_value(&items[1]);
                Ok(self.store.intern_expr(ExprKind::Quote(v), d.span))
            }
            Some("if") => {
                if items.len() != 4 {
                    return Err(self.err(d.span, "if expects exactly three subexpressions"));
                }
                let cond = self.lower_expr(&items[1])?;
                let then_ = self.lower_expr(&items[2])?;
                let else_ = self.lower_expr(&items[3])?;
                Ok(self
                    .store
                    .intern_expr(ExprKind::If { cond, then_, else_ }, d.span))
            }
            Some("lambda") | Some("λ") => {
                if items.len() < 3 {
                    return Err(self.err(d.span, "lambda expects parameters and a body"));
                }
                let params = match &items[1].kind {
                    DatumKind::List(ps) => {
                        let mut syms = Vec::with_capacity(ps.len());
                        for p in ps {
                            match &p.kind {
                                DatumKind::Sym(s) => syms.push(self.store.symbol(s)),
                                _ => return Err(self.err(p.span, "parameter is not a symbol")),
                            }
                        }
                        let mut seen = syms.clone();
                        seen.sort_unstable();
                        seen.dedup();
                        if seen.len() != syms.len() {
                            return Err(self.err(items[1].span, "duplicate parameter name"));
                        }
                        syms
                    }
                    _ => return Err(self.err(items[1].span, "lambda parameters must be a list")),
                };
                let body = self.lower_body(&items[2..], d.span)?;
                Ok(self
                    .store
                    .intern_expr(ExprKind::Lambda { params, body }, d.span))
            }
            Some("let") => {
                if items.len() < 3 {
                    return Err(self.err(d.span, "let expects bindings and a body"));
                }
                let bindings = match &items[1].kind {
                    DatumKind::List(bs) => bs,
                    _ => return Err(self.err(items[1].span, "let bindings must be a list")),
                };
                let mut names = Vec::with_capacity(bindings.len());
                let mut inits = Vec::with_capacity(bindings.len());
                for b in bindings {
                    match &b.kind {
                        DatumKind::List(pair) if pair.len() == 2 => {
                            match &pair[0].kind {
                                DatumKind::Sym(s) => names.push(self.store.symbol(s)),
                                _ => {
                                    return Err(
                                        self.err(pair[0].span, "let binding name must be a symbol")
                                    )
                                }
                            }
                            inits.push(self.lower_expr(&pair[1])?);
                        }
                        _ => {
                            return Err(
                                self.err(b.span, "let binding must be a (name expression) pair")
                            )
                        }
                    }
                }
                let mut seen = names.clone();
                seen.sort_unstable();
                seen.dedup();
                if seen.len() != names.len() {
                    return Err(self.err(items[1].span, "duplicate let binding name"));
                }
                let body = self.lower_body(&items[2..], d.span)?;
                let lambda = self.store.intern_expr(
                    ExprKind::Lambda {
                        params: names,
                        body,
                    },
                    d.span,
                );
                Ok(self.store.intern_expr(
                    ExprKind::Apply {
                        func: lambda,
                        args: inits,
                    },
                    d.span,
                ))
            }
            Some("and") => self.lower_and(d.span, &items[1..]),
            Some("or") => self.lower_or(d.span, &items[1..]),
            Some("query") => self.lower_query(d, &items[1..]),
            _ => {
                // ordinary application
                let (func_datum, arg_datums) = items
                    .split_first()
                    .ok_or_else(|| self.err(d.span, "empty application ()"))?;
                let func = self.lower_expr(func_datum)?;
                let mut args = Vec::with_capacity(arg_datums.len());
                for a in arg_datums {
                    args.push(self.lower_expr(a)?);
                }
                Ok(self
                    .store
                    .intern_expr(ExprKind::Apply { func, args }, d.span))
            }
        }
    }

    fn lower_and(&mut self, span: Span, rest: &[Datum]) -> Result<ExprId, SyntaxError> {
        match rest {
            [] => {
                let t = self.store.bool_value(true);
                Ok(self.store.intern_expr(ExprKind::Const(t), span))
            }
            [single] => self.lower_expr(single),
            [first, more @ ..] => {
                let cond = self.lower_expr(first)?;
                let then_ = self.lower_and(span, more)?;
                let f = self.store.bool_value(false);
                let else_ = self.store.intern_expr(ExprKind::Const(f), span);
                Ok(self
                    .store
                    .intern_expr(ExprKind::If { cond, then_, else_ }, span))
            }
        }
    }

    fn lower_or(&mut self, span: Span, rest: &[Datum]) -> Result<ExprId, SyntaxError> {
        match rest {
            [] => {
                let f = self.store.bool_value(false);
                Ok(self.store.intern_expr(ExprKind::Const(f), span))
            }
            [single] => self.lower_expr(single),
            [first, more @ ..] => {
                let cond = self.lower_expr(first)?;
                let t = self.store.bool_value(true);
                let then_ = self.store.intern_expr(ExprKind::Const(t), span);
                let else_ = self.lower_or(span, more)?;
                Ok(self
                    .store
                    .intern_expr(ExprKind::If { cond, then_, else_ }, span))
            }
        }
    }

    /// `(query defs... queryExpr conditionExpr)` becomes
    ///
    /// ```text
    /// (define (sample) defs... (cons queryExpr conditionExpr))
    /// (define (loop)
    ///   (define s (sample))
    ///   (if (cdr s) (car s) (loop)))
    /// (loop)
    /// ```
    ///
    /// with reserved names, and `car`/`cdr`/`cons` referenced as constant
    /// primitive values so user definitions cannot shadow them.
    fn lower_query(&mut self, d: &Datum, rest: &[Datum]) -> Result<ExprId, SyntaxError> {
        if rest.len() < 2 {
            return Err(self.err(
                d.span,
                "query expects definitions followed by a query expression and a condition",
            ));
        }
        let span = d.span;
        let (defs, tail) = rest.split_at(rest.len() - 2);
        let mut defines = Vec::with_capacity(defs.len());
        for form in defs {
            if !self.is_define(form) {
                return Err(self.err(
                    form.span,
                    "query allows only definitions before its query expression",
                ));
            }
            defines.push(self.lower_define(form)?);
        }
        let query_expr = self.lower_expr(&tail[0])?;
        let cond_expr = self.lower_expr(&tail[1])?;

        let prim = |me: &mut Self, p: Primitive| {
            let v = me.store.intern_value(Value::Prim(p));
            me.store.intern_expr(ExprKind::Const(v), span)
        };
        let cons_fn = prim(self, Primitive::Cons);
        let car_fn = prim(self, Primitive::Car);
        let cdr_fn = prim(self, Primitive::Cdr);

        let sample_sym = self.store.symbol(QUERY_SAMPLE);
        let loop_sym = self.store.symbol(QUERY_LOOP);
        let s_sym = self.store.symbol(QUERY_VALUE);

        // (cons queryExpr conditionExpr)
        let pair = self.store.intern_expr(
            ExprKind::Apply {
                func: cons_fn,
                args: vec![query_expr, cond_expr],
            },
            span,
        );
        let sample_body = self.make_body(defines, vec![pair], span);
        let sample_lambda = self.store.intern_expr(
            ExprKind::Lambda {
                params: vec![],
                body: sample_body,
            },
            span,
        );

        // (define s (sample)) (if (cdr s) (car s) (loop))
        let sample_var = self.store.intern_expr(ExprKind::Var(sample_sym), span);
        let call_sample = self.store.intern_expr(
            ExprKind::Apply {
                func: sample_var,
                args: vec![],
            },
            span,
        );
        let s_var = self.store.intern_expr(ExprKind::Var(s_sym), span);
        let cond = self.store.intern_expr(
            ExprKind::Apply {
                func: cdr_fn,
                args: vec![s_var],
            },
            span,
        );
        let accept = self.store.intern_expr(
            ExprKind::Apply {
                func: car_fn,
                args: vec![s_var],
            },
            span,
        );
        let loop_var = self.store.intern_expr(ExprKind::Var(loop_sym), span);
        let retry = self.store.intern_expr(
            ExprKind::Apply {
                func: loop_var,
                args: vec![],
            },
            span,
        );
        let check = self.store.intern_expr(
            ExprKind::If {
                cond,
                then_: accept,
                else_: retry,
            },
            span,
        );
        let loop_body = self.store.intern_expr(
            ExprKind::Body {
                defines: vec![(s_sym, call_sample)],
                exprs: vec![check],
            },
            span,
        );
        let loop_lambda = self.store.intern_expr(
            ExprKind::Lambda {
                params: vec![],
                body: loop_body,
            },
            span,
        );

        Ok(self.store.intern_expr(
            ExprKind::Body {
                defines: vec![(sample_sym, sample_lambda), (loop_sym, loop_lambda)],
                exprs: vec![retry],
            },
            span,
        ))
    }

    fn quote_value(&mut self, d: &Datum) -> ValueId {
        match &d.kind {
            DatumKind::Bool(b) => self.store.bool_value(*b),
            DatumKind::Num(n) => {
                let n: BigRational = n.clone();
                self.store.num_value(n)
            }
            DatumKind::Sym(s) => self.store.sym_value(s),
            DatumKind::Str(s) => self.store.intern_value(Value::Str(s.clone())),
            DatumKind::List(items) => {
                let vals: Vec<ValueId> = items.iter().map(|i| self.quote_value(i)).collect();
                self.store.list_value(&vals)
            }
        }
    }
}

/// Parse and lower every top-level form of `text`.
pub fn parse(store: &mut Store, text: &str, source: u16) -> Result<Vec<TopForm>, SyntaxError> {
    let forms = read_forms(text, source)?;
    let mut lower = Lower { store, text };
    forms.iter().map(|f| lower.lower_form(f)).collect()
}

/// Assemble top-level forms into one program body: definitions at the
/// head, then at least one result expression. The last expression's value
/// is the program's return value.
pub fn program_body(store: &mut Store, forms: &[TopForm]) -> Result<ExprId, SyntaxError> {
    let mut defines = Vec::new();
    let mut exprs = Vec::new();
    for form in forms {
        match *form {
            TopForm::Define(name, rhs) => {
                if !exprs.is_empty() {
                    return Err(SyntaxError {
                        message: "define is only legal at the head of the program".into(),
                        line: 1,
                        col: 1,
                    });
                }
                defines.push((name, rhs));
            }
            TopForm::Expr(e) => exprs.push(e),
        }
    }
    if exprs.is_empty() {
        return Err(SyntaxError {
            message: "program has no result expression".into(),
            line: 1,
            col: 1,
        });
    }
    let mut names: Vec<SymbolId> = defines.iter().map(|&(n, _)| n).collect();
    names.sort_unstable();
    names.dedup();
    if names.len() != defines.len() {
        return Err(SyntaxError {
            message: "duplicate top-level definition".into(),
            line: 1,
            col: 1,
        });
    }
    if defines.is_empty() && exprs.len() == 1 {
        return Ok(exprs[0]);
    }
    Ok(store.intern_expr(ExprKind::Body { defines, exprs }, Span::synthetic()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_one(store: &mut Store, text: &str) -> ExprId {
        let forms = parse(store, text, 1).unwrap();
        program_body(store, &forms).unwrap()
    }

    #[test]
    fn flip_application_shape() {
        let mut st = Store::new();
        let e = parse_one(&mut st, "(flip .6)");
        match st.expr(e) {
            ExprKind::Apply { func, args } => {
                assert!(matches!(st.expr(*func), ExprKind::Var(_)));
                assert_eq!(args.len(), 1);
            }
            other => panic!("expected application, got {other:?}"),
        }
    }

    #[test]
    fn constant_literal() {
        let mut st = Store::new();
        let e = parse_one(&mut st, "5");
        match st.expr(e) {
            ExprKind::Const(v) => assert_eq!(st.value_text(*v), "5"),
            other => panic!("expected constant, got {other:?}"),
        }
    }

    #[test]
    fn identical_text_interns_once() {
        let mut st = Store::new();
        let forms = parse(
            &mut st,
            "(if (flip .6) (not (game (not player))) 1) (if (flip .6) (not (game (not player))) 1)",
            1,
        )
        .unwrap();
        let ids: Vec<_> = forms
            .iter()
            .map(|f| match f {
                TopForm::Expr(e) => *e,
                TopForm::Define(..) => panic!("no defines here"),
            })
            .collect();
        assert_eq!(ids[0], ids[1]);
    }

    #[test]
    fn define_rejected_in_expression_position() {
        let mut st = Store::new();
        let err = parse(&mut st, "(if (define x 1) 2 3)", 1).unwrap_err();
        assert!(err.message.contains("expression position"), "{err}");
    }

    #[test]
    fn define_must_head_the_body() {
        let mut st = Store::new();
        let err = parse(&mut st, "(lambda (x) x (define y 1) y)", 1).unwrap_err();
        assert!(err.message.contains("head of a body"), "{err}");
    }

    #[test]
    fn if_arity_is_three() {
        let mut st = Store::new();
        assert!(parse(&mut st, "(if (flip) 1)", 1).is_err());
        assert!(parse(&mut st, "(if (flip) 1 2 3)", 1).is_err());
    }

    #[test]
    fn empty_application_is_rejected() {
        let mut st = Store::new();
        let err = parse(&mut st, "()", 1).unwrap_err();
        assert!(err.message.contains("empty application"), "{err}");
    }

    #[test]
    fn let_desugars_to_application() {
        let mut st = Store::new();
        let e = parse_one(&mut st, "(let ([x 1] [y 2]) (+ x y))");
        match st.expr(e) {
            ExprKind::Apply { func, args } => {
                assert!(matches!(st.expr(*func), ExprKind::Lambda { .. }));
                assert_eq!(args.len(), 2);
            }
            other => panic!("expected application, got {other:?}"),
        }
    }

    #[test]
    fn and_or_desugar_to_if() {
        let mut st = Store::new();
        let e = parse_one(&mut st, "(and a b)");
        assert!(matches!(st.expr(e), ExprKind::If { .. }));
        let e = parse_one(&mut st, "(or a b c)");
        assert!(matches!(st.expr(e), ExprKind::If { .. }));
    }

    #[test]
    fn query_desugars_to_rejection_loop() {
        let mut st = Store::new();
        let e = parse_one(&mut st, "(query (define a (flip .5)) a a)");
        match st.expr(e).clone() {
            ExprKind::Body { defines, exprs } => {
                assert_eq!(defines.len(), 2);
                assert_eq!(exprs.len(), 1);
                assert_eq!(st.symbol_name(defines[0].0), QUERY_SAMPLE);
                assert_eq!(st.symbol_name(defines[1].0), QUERY_LOOP);
                // loop lambda is self-recursive
                let loop_lambda = defines[1].1;
                let free = st.free_vars(loop_lambda);
                let loop_sym = st.symbol(QUERY_LOOP);
                assert!(free.contains(&loop_sym));
            }
            other => panic!("expected body, got {other:?}"),
        }
    }

    #[test]
    fn program_result_expression_required() {
        let mut st = Store::new();
        let forms = parse(&mut st, "(define x 1)", 1).unwrap();
        assert!(program_body(&mut st, &forms).is_err());
    }

    #[test]
    fn free_variables_examples() {
        let mut st = Store::new();
        let e = parse_one(&mut st, "(lambda (x) (f x))");
        let free = st.free_vars(e);
        let f = st.symbol("f");
        let x = st.symbol("x");
        assert!(free.contains(&f));
        assert!(!free.contains(&x));

        let e = parse_one(&mut st, "(not (game (not player)))");
        let free = st.free_vars(e);
        for name in ["not", "game", "player"] {
            let s = st.symbol(name);
            assert!(free.contains(&s), "missing {name}");
        }
        assert_eq!(free.len(), 3);

        let e = parse_one(&mut st, "5");
        assert!(st.free_vars(e).is_empty());
    }
}
