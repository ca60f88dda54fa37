//! The coroutine interpreter.
//!
//! Evaluation proceeds deterministically until it has to (a) apply a
//! random primitive, (b) apply a user procedure, or (c) finish. At each of
//! these points it yields a [`PartialResult`]: a random choice, a subcall,
//! or a terminal value. Continuations are persistent frame stacks, so a
//! yield point can be resumed any number of times with different values —
//! the compiler relies on this to fan a subcall out over every return
//! value of the callee.
//!
//! Applications of user procedures always cede control: that is the
//! factorization grain, and it is what exposes shared subcomputations.
//! Primitive applications never cede.

use std::sync::Arc;

use num::{BigRational, One, Signed, Zero};

use crate::error::RuntimeError;
use crate::syntax::{
    primitive_for, EnvId, ExprId, ExprKind, Primitive, Span, Store, SymbolId, Value, ValueId,
};

/// Default cap on deterministic reductions per `interpret`/`resume` call.
pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;

/// A shareable interpreter call: expression plus environment restricted to
/// its free variables. Two calls are the same subproblem iff both ids are
/// equal, which makes subcall identification constant-time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InterpreterArg {
    pub expr: ExprId,
    pub env: EnvId,
}

/// One step of evaluation from the outside: either the strand finished
/// with a value, or it stopped at a random choice or a subcall.
#[derive(Debug, Clone, PartialEq)]
pub enum PartialResult {
    Terminal(ValueId),
    RandomChoice {
        k: Continuation,
        values: Vec<ValueId>,
        probs: Vec<BigRational>,
    },
    Subcall {
        k: Continuation,
        arg: InterpreterArg,
    },
}

/// A resumable remainder of a computation. Immutable; resuming never
/// consumes it.
#[derive(Debug, Clone, Default)]
pub struct Continuation {
    frames: Option<Arc<FrameNode>>,
}

#[derive(Debug)]
struct FrameNode {
    frame: Frame,
    next: Option<Arc<FrameNode>>,
}

#[derive(Debug, Clone, PartialEq)]
enum Frame {
    /// Waiting on an `if` condition.
    Branch {
        then_: ExprId,
        else_: ExprId,
        env: EnvId,
    },
    /// Waiting on the operator or the next operand of an application.
    /// `evaluated[0]` is the operator once present.
    Apply {
        evaluated: Vec<ValueId>,
        pending: Vec<ExprId>,
        env: EnvId,
        span: Span,
    },
    /// Waiting on a value definition or a non-final body expression.
    Sequence {
        bind: Option<SymbolId>,
        defines: Vec<(SymbolId, ExprId)>,
        exprs: Vec<ExprId>,
        env: EnvId,
    },
}

impl Continuation {
    pub fn empty() -> Self {
        Continuation::default()
    }

    fn push(&self, frame: Frame) -> Continuation {
        Continuation {
            frames: Some(Arc::new(FrameNode {
                frame,
                next: self.frames.clone(),
            })),
        }
    }

    fn pop(&self) -> Option<(Frame, Continuation)> {
        self.frames.as_ref().map(|node| {
            (
                node.frame.clone(),
                Continuation {
                    frames: node.next.clone(),
                },
            )
        })
    }
}

impl PartialEq for Continuation {
    fn eq(&self, other: &Self) -> bool {
        let mut a = &self.frames;
        let mut b = &other.frames;
        loop {
            match (a, b) {
                (None, None) => return true,
                (Some(x), Some(y)) => {
                    if !Arc::ptr_eq(x, y) && x.frame != y.frame {
                        return false;
                    }
                    if Arc::ptr_eq(x, y) {
                        return true;
                    }
                    a = &x.next;
                    b = &y.next;
                }
                _ => return false,
            }
        }
    }
}

enum Control {
    Eval(ExprId, EnvId),
    Return(ValueId),
}

#[derive(Debug, Clone, Copy)]
pub struct Interpreter {
    pub step_budget: u64,
}

impl Default for Interpreter {
    fn default() -> Self {
        Interpreter {
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }
}

impl Interpreter {
    pub fn new(step_budget: u64) -> Self {
        Interpreter { step_budget }
    }

    /// Evaluate a subproblem from the start until the first yield.
    pub fn interpret(
        &self,
        store: &mut Store,
        arg: InterpreterArg,
    ) -> Result<PartialResult, RuntimeError> {
        self.run(
            store,
            Control::Eval(arg.expr, arg.env),
            Continuation::empty(),
        )
    }

    /// Continue a suspended computation with the value for its hole.
    pub fn resume(
        &self,
        store: &mut Store,
        k: &Continuation,
        v: ValueId,
    ) -> Result<PartialResult, RuntimeError> {
        self.run(store, Control::Return(v), k.clone())
    }

    fn run(
        &self,
        store: &mut Store,
        mut control: Control,
        mut kont: Continuation,
    ) -> Result<PartialResult, RuntimeError> {
        let false_id = store.bool_value(false);
        let mut steps: u64 = 0;
        loop {
            steps += 1;
            if steps > self.step_budget {
                return Err(RuntimeError::StepBudget {
                    budget: self.step_budget,
                });
            }
            match control {
                Control::Eval(e, env) => match store.expr(e).clone() {
                    ExprKind::Const(v) | ExprKind::Quote(v) => control = Control::Return(v),
                    ExprKind::Var(s) => {
                        let bound = store.env(env).lookup(s).or_else(|| {
                            primitive_for(store.symbol_name(s))
                                .map(|p| store.intern_value(Value::Prim(p)))
                        });
                        match bound {
                            Some(v) => control = Control::Return(v),
                            None => {
                                return Err(RuntimeError::UnboundVariable {
                                    name: store.symbol_name(s).to_owned(),
                                    span: store.expr_span(e),
                                })
                            }
                        }
                    }
                    ExprKind::Lambda { .. } => {
                        let free = store.free_vars(e);
                        let cenv = store.restrict_env(env, &free);
                        let v = store.intern_value(Value::Closure {
                            lambda: e,
                            env: cenv,
                            group: None,
                        });
                        control = Control::Return(v);
                    }
                    ExprKind::If { cond, then_, else_ } => {
                        kont = kont.push(Frame::Branch { then_, else_, env });
                        control = Control::Eval(cond, env);
                    }
                    ExprKind::Apply { func, args } => {
                        kont = kont.push(Frame::Apply {
                            evaluated: Vec::new(),
                            pending: args,
                            env,
                            span: store.expr_span(e),
                        });
                        control = Control::Eval(func, env);
                    }
                    ExprKind::Body { defines, exprs } => {
                        control = enter_body(store, &defines, &exprs, env, &mut kont);
                    }
                },
                Control::Return(v) => {
                    let Some((frame, rest)) = kont.pop() else {
                        return Ok(PartialResult::Terminal(v));
                    };
                    kont = rest;
                    match frame {
                        Frame::Branch { then_, else_, env } => {
                            let target = if v != false_id { then_ } else { else_ };
                            control = Control::Eval(target, env);
                        }
                        Frame::Apply {
                            mut evaluated,
                            mut pending,
                            env,
                            span,
                        } => {
                            evaluated.push(v);
                            if pending.is_empty() {
                                let (op, args) = evaluated.split_first().expect("operator");
                                match store.value(*op).clone() {
                                    Value::Prim(p) if p.is_erp() => {
                                        let (values, probs) = erp_support(store, p, args, span)?;
                                        return Ok(PartialResult::RandomChoice {
                                            k: kont,
                                            values,
                                            probs,
                                        });
                                    }
                                    Value::Prim(p) => {
                                        let out = apply_primitive(store, p, args, span)?;
                                        control = Control::Return(out);
                                    }
                                    Value::Closure { .. } => {
                                        let arg = closure_call_arg(store, *op, args, span)?;
                                        return Ok(PartialResult::Subcall { k: kont, arg });
                                    }
                                    other => {
                                        return Err(RuntimeError::NonProcedure {
                                            text: {
                                                let id = store.intern_value(other);
                                                store.value_text(id)
                                            },
                                            span,
                                        })
                                    }
                                }
                            } else {
                                let next = pending.remove(0);
                                kont = kont.push(Frame::Apply {
                                    evaluated,
                                    pending,
                                    env,
                                    span,
                                });
                                control = Control::Eval(next, env);
                            }
                        }
                        Frame::Sequence {
                            bind,
                            defines,
                            exprs,
                            env,
                        } => match bind {
                            Some(name) => {
                                let env = store.extend_env(env, &[(name, v)]);
                                control = enter_body(store, &defines, &exprs, env, &mut kont);
                            }
                            None => {
                                // non-final body expression: value discarded
                                control = enter_body(store, &[], &exprs, env, &mut kont);
                            }
                        },
                    }
                }
            }
        }
    }
}

/// Process a body: bind runs of consecutive procedure definitions as
/// recursive groups, evaluate value definitions in order, then evaluate
/// the body expressions, returning the control state for the next thing
/// to evaluate.
fn enter_body(
    store: &mut Store,
    defines: &[(SymbolId, ExprId)],
    exprs: &[ExprId],
    mut env: EnvId,
    kont: &mut Continuation,
) -> Control {
    let mut rest = defines;
    loop {
        let run = rest
            .iter()
            .take_while(|&&(_, rhs)| matches!(store.expr(rhs), ExprKind::Lambda { .. }))
            .count();
        if run > 0 {
            env = bind_group(store, env, rest[..run].to_vec());
            rest = &rest[run..];
            continue;
        }
        if let Some((&(name, rhs), tail)) = rest.split_first() {
            *kont = kont.push(Frame::Sequence {
                bind: Some(name),
                defines: tail.to_vec(),
                exprs: exprs.to_vec(),
                env,
            });
            return Control::Eval(rhs, env);
        }
        debug_assert!(!exprs.is_empty(), "lowering guarantees a result expression");
        if exprs.len() == 1 {
            return Control::Eval(exprs[0], env);
        }
        let (first, more) = exprs.split_first().expect("nonempty");
        *kont = kont.push(Frame::Sequence {
            bind: None,
            defines: Vec::new(),
            exprs: more.to_vec(),
            env,
        });
        return Control::Eval(*first, env);
    }
}

/// Bind one run of mutually recursive procedure definitions.
fn bind_group(store: &mut Store, ambient: EnvId, members: Vec<(SymbolId, ExprId)>) -> EnvId {
    let gid = store.intern_group(members);
    let info = store.group_info(gid);
    let bindings: Vec<(SymbolId, ValueId)> = (0..info.members.len())
        .map(|i| {
            (
                info.members[i].0,
                group_member_closure(store, gid, &info, i, ambient),
            )
        })
        .collect();
    store.extend_env(ambient, &bindings)
}

/// The closure for group member `idx`, captured from `ambient`. Called
/// both when the group is defined and when a sibling is reconstructed at
/// application time; both sites must produce the same id for sharing to
/// work, so all the logic lives here.
fn group_member_closure(
    store: &mut Store,
    gid: crate::syntax::GroupId,
    info: &crate::syntax::GroupInfo,
    idx: usize,
    ambient: EnvId,
) -> ValueId {
    let (_, lambda) = info.members[idx];
    let env = store.restrict_env(ambient, &info.relevant[idx]);
    let group = info.uses_group[idx].then_some(gid);
    store.intern_value(Value::Closure { lambda, env, group })
}

/// Build the interpreter argument for applying a closure: captured
/// environment, plus reconstructed group siblings, plus parameters, all
/// restricted to the free variables of the body.
fn closure_call_arg(
    store: &mut Store,
    closure: ValueId,
    args: &[ValueId],
    span: Span,
) -> Result<InterpreterArg, RuntimeError> {
    let Value::Closure { lambda, env, group } = store.value(closure).clone() else {
        unreachable!("caller checked");
    };
    let ExprKind::Lambda { params, body } = store.expr(lambda).clone() else {
        unreachable!("closures only wrap lambdas");
    };
    if params.len() != args.len() {
        return Err(RuntimeError::WrongArity {
            expected: params.len(),
            got: args.len(),
            span,
        });
    }
    let mut extra: Vec<(SymbolId, ValueId)> = Vec::new();
    if let Some(gid) = group {
        let info = store.group_info(gid);
        let lam_free = store.free_vars(lambda);
        for idx in 0..info.members.len() {
            let name = info.members[idx].0;
            if lam_free.contains(&name) {
                extra.push((name, group_member_closure(store, gid, &info, idx, env)));
            }
        }
    }
    extra.extend(params.iter().copied().zip(args.iter().copied()));
    let call_env = store.extend_env(env, &extra);
    let body_free = store.free_vars(body);
    let arg_env = store.restrict_env(call_env, &body_free);
    Ok(InterpreterArg {
        expr: body,
        env: arg_env,
    })
}

// ---------------------------------------------------------------------
// Random primitives

/// Support and probabilities for an elementary random primitive.
/// Duplicate values are merged, zero-probability outcomes dropped, and
/// the result sums to one exactly (probabilities are exact rationals
/// until the network is built).
pub fn erp_support(
    store: &mut Store,
    prim: Primitive,
    args: &[ValueId],
    span: Span,
) -> Result<(Vec<ValueId>, Vec<BigRational>), RuntimeError> {
    let type_err = |msg: String| RuntimeError::TypeError {
        prim: prim.name(),
        message: msg,
        span,
    };
    let pairs: Vec<(ValueId, BigRational)> = match prim {
        Primitive::Flip => {
            let p = match args {
                [] => BigRational::new(1.into(), 2.into()),
                [arg] => match store.value(*arg) {
                    Value::Num(p) => p.clone(),
                    _ => return Err(type_err("weight must be a number".into())),
                },
                _ => {
                    return Err(RuntimeError::WrongArity {
                        expected: 1,
                        got: args.len(),
                        span,
                    })
                }
            };
            if p.is_negative() || p > BigRational::one() {
                return Err(type_err(format!("weight {p} outside [0, 1]")));
            }
            let t = store.bool_value(true);
            let f = store.bool_value(false);
            vec![(t, p.clone()), (f, BigRational::one() - p)]
        }
        Primitive::UniformDraw => {
            let [lst] = args else {
                return Err(RuntimeError::WrongArity {
                    expected: 1,
                    got: args.len(),
                    span,
                });
            };
            let items = store
                .list_elements(*lst)
                .ok_or_else(|| type_err("argument must be a proper list".into()))?;
            if items.is_empty() {
                return Err(type_err("cannot draw from an empty list".into()));
            }
            let w = BigRational::new(1.into(), (items.len() as i64).into());
            items.into_iter().map(|v| (v, w.clone())).collect()
        }
        Primitive::Multinomial => {
            let [vals, weights] = args else {
                return Err(RuntimeError::WrongArity {
                    expected: 2,
                    got: args.len(),
                    span,
                });
            };
            let items = store
                .list_elements(*vals)
                .ok_or_else(|| type_err("values must be a proper list".into()))?;
            let weights = store
                .list_elements(*weights)
                .ok_or_else(|| type_err("weights must be a proper list".into()))?;
            if items.len() != weights.len() {
                return Err(type_err(format!(
                    "{} values but {} weights",
                    items.len(),
                    weights.len()
                )));
            }
            if items.is_empty() {
                return Err(type_err("empty support".into()));
            }
            let mut ws = Vec::with_capacity(weights.len());
            for w in &weights {
                match store.value(*w) {
                    Value::Num(n) if !n.is_negative() => ws.push(n.clone()),
                    Value::Num(n) => return Err(type_err(format!("negative weight {n}"))),
                    _ => return Err(type_err("weight must be a number".into())),
                }
            }
            let total: BigRational = ws.iter().cloned().sum();
            if total.is_zero() {
                return Err(type_err("weights sum to zero".into()));
            }
            items
                .into_iter()
                .zip(ws)
                .map(|(v, w)| (v, w / total.clone()))
                .collect()
        }
        _ => unreachable!("not an elementary random primitive"),
    };

    // merge duplicates (first-occurrence order), then drop zero mass
    let mut merged: indexmap::IndexMap<ValueId, BigRational> = indexmap::IndexMap::new();
    for (v, p) in pairs {
        *merged.entry(v).or_insert_with(BigRational::zero) += p;
    }
    let (values, probs): (Vec<_>, Vec<_>) =
        merged.into_iter().filter(|(_, p)| !p.is_zero()).unzip();
    debug_assert!(probs.iter().cloned().sum::<BigRational>().is_one());
    Ok((values, probs))
}

// ---------------------------------------------------------------------
// Deterministic primitives

fn expect_num(
    store: &Store,
    prim: Primitive,
    v: ValueId,
    span: Span,
) -> Result<BigRational, RuntimeError> {
    match store.value(v) {
        Value::Num(n) => Ok(n.clone()),
        other => Err(RuntimeError::TypeError {
            prim: prim.name(),
            message: format!("expected a number, got `{:?}`", other),
            span,
        }),
    }
}

fn arity(expected: usize, args: &[ValueId], span: Span) -> Result<(), RuntimeError> {
    if args.len() != expected {
        return Err(RuntimeError::WrongArity {
            expected,
            got: args.len(),
            span,
        });
    }
    Ok(())
}

fn apply_primitive(
    store: &mut Store,
    prim: Primitive,
    args: &[ValueId],
    span: Span,
) -> Result<ValueId, RuntimeError> {
    let type_err = |message: String| RuntimeError::TypeError {
        prim: prim.name(),
        message,
        span,
    };
    match prim {
        Primitive::Flip | Primitive::UniformDraw | Primitive::Multinomial => {
            unreachable!("random primitives yield choices")
        }
        Primitive::Not => {
            arity(1, args, span)?;
            let f = store.bool_value(false);
            Ok(store.bool_value(args[0] == f))
        }
        Primitive::EqP | Primitive::EqualP => {
            arity(2, args, span)?;
            // everything is hash-consed, so identity is structural equality
            Ok(store.bool_value(args[0] == args[1]))
        }
        Primitive::NumEq | Primitive::Less => {
            if args.len() < 2 {
                return Err(RuntimeError::WrongArity {
                    expected: 2,
                    got: args.len(),
                    span,
                });
            }
            let nums: Vec<BigRational> = args
                .iter()
                .map(|&a| expect_num(store, prim, a, span))
                .collect::<Result<_, _>>()?;
            let ok = nums.windows(2).all(|w| match prim {
                Primitive::NumEq => w[0] == w[1],
                _ => w[0] < w[1],
            });
            Ok(store.bool_value(ok))
        }
        Primitive::Add | Primitive::Mul => {
            let mut acc = if prim == Primitive::Add {
                BigRational::zero()
            } else {
                BigRational::one()
            };
            for &a in args {
                let n = expect_num(store, prim, a, span)?;
                if prim == Primitive::Add {
                    acc += n;
                } else {
                    acc *= n;
                }
            }
            Ok(store.num_value(acc))
        }
        Primitive::Sub => {
            let (first, rest) = args
                .split_first()
                .ok_or_else(|| type_err("expected at least one argument".into()))?;
            let mut acc = expect_num(store, prim, *first, span)?;
            if rest.is_empty() {
                return Ok(store.num_value(-acc));
            }
            for &a in rest {
                acc -= expect_num(store, prim, a, span)?;
            }
            Ok(store.num_value(acc))
        }
        Primitive::Div => {
            let (first, rest) = args
                .split_first()
                .ok_or_else(|| type_err("expected at least one argument".into()))?;
            let mut acc = expect_num(store, prim, *first, span)?;
            if rest.is_empty() {
                if acc.is_zero() {
                    return Err(RuntimeError::DivisionByZero { span });
                }
                return Ok(store.num_value(acc.recip()));
            }
            for &a in rest {
                let d = expect_num(store, prim, a, span)?;
                if d.is_zero() {
                    return Err(RuntimeError::DivisionByZero { span });
                }
                acc /= d;
            }
            Ok(store.num_value(acc))
        }
        Primitive::List => Ok(store.list_value(args)),
        Primitive::ListRef => {
            arity(2, args, span)?;
            let items = store
                .list_elements(args[0])
                .ok_or_else(|| type_err("first argument must be a proper list".into()))?;
            let idx = expect_num(store, prim, args[1], span)?;
            if !idx.is_integer() || idx.is_negative() {
                return Err(type_err(format!("index {idx} is not a natural number")));
            }
            let idx: usize = idx
                .to_integer()
                .try_into()
                .map_err(|_| type_err("index out of range".into()))?;
            items.get(idx).copied().ok_or_else(|| {
                type_err(format!("index {idx} out of range (length {})", items.len()))
            })
        }
        Primitive::Sum => {
            arity(1, args, span)?;
            let items = store
                .list_elements(args[0])
                .ok_or_else(|| type_err("argument must be a proper list".into()))?;
            let mut acc = BigRational::zero();
            for v in items {
                acc += expect_num(store, prim, v, span)?;
            }
            Ok(store.num_value(acc))
        }
        Primitive::NullP => {
            arity(1, args, span)?;
            let isnil = matches!(store.value(args[0]), Value::Nil);
            Ok(store.bool_value(isnil))
        }
        Primitive::Car | Primitive::Cdr => {
            arity(1, args, span)?;
            match store.value(args[0]) {
                Value::Pair(car, cdr) => Ok(if prim == Primitive::Car { *car } else { *cdr }),
                _ => Err(type_err("expected a pair".into())),
            }
        }
        Primitive::Cons => {
            arity(2, args, span)?;
            Ok(store.cons_value(args[0], args[1]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_program;
    use num::rational::Ratio;
    use num::BigInt;

    fn rat(n: i64, d: i64) -> BigRational {
        Ratio::new(BigInt::from(n), BigInt::from(d))
    }

    fn program_arg(store: &mut Store, text: &str) -> InterpreterArg {
        let body = parse_program(store, text).unwrap();
        let env = store.empty_env();
        InterpreterArg { expr: body, env }
    }

    #[test]
    fn constant_terminates() {
        let mut st = Store::new();
        let arg = program_arg(&mut st, "5");
        let r = Interpreter::default().interpret(&mut st, arg).unwrap();
        let five = st.num_value(rat(5, 1));
        assert_eq!(r, PartialResult::Terminal(five));
    }

    #[test]
    fn flip_yields_choice() {
        let mut st = Store::new();
        let arg = program_arg(&mut st, "(flip .6)");
        let r = Interpreter::default().interpret(&mut st, arg).unwrap();
        match r {
            PartialResult::RandomChoice { values, probs, .. } => {
                let t = st.bool_value(true);
                let f = st.bool_value(false);
                assert_eq!(values, vec![t, f]);
                assert_eq!(probs, vec![rat(3, 5), rat(2, 5)]);
            }
            other => panic!("expected a random choice, got {other:?}"),
        }
    }

    #[test]
    fn branch_resumption_is_deterministic() {
        let mut st = Store::new();
        let arg = program_arg(&mut st, "(if (flip .5) 1 2)");
        let interp = Interpreter::default();
        let r = interp.interpret(&mut st, arg).unwrap();
        let PartialResult::RandomChoice { k, .. } = r else {
            panic!("expected a choice");
        };
        let f = st.bool_value(false);
        let two = st.num_value(rat(2, 1));
        let a = interp.resume(&mut st, &k, f).unwrap();
        assert_eq!(a, PartialResult::Terminal(two));
        let b = interp.resume(&mut st, &k, f).unwrap();
        assert_eq!(a, b);
        // and with a different value
        let t = st.bool_value(true);
        let one = st.num_value(rat(1, 1));
        assert_eq!(
            interp.resume(&mut st, &k, t).unwrap(),
            PartialResult::Terminal(one)
        );
    }

    const GAME: &str = "\
(define (game player)
  (if (flip .6)
      (not (game (not player)))
      (if player
          (flip .2)
          (flip .7))))
(game true)
";

    #[test]
    fn game_call_is_a_subcall_with_restricted_env() {
        let mut st = Store::new();
        let arg = program_arg(&mut st, GAME);
        let interp = Interpreter::default();
        let r = interp.interpret(&mut st, arg).unwrap();
        let PartialResult::Subcall { arg: sub, .. } = r else {
            panic!("expected a subcall, got {r:?}");
        };
        // env binds exactly the non-primitive free variables: game, player
        let bound: Vec<&str> = st
            .env(sub.env)
            .bindings
            .iter()
            .map(|&(s, _)| st.symbol_name(s))
            .collect();
        assert_eq!(bound, vec!["game", "player"]);
    }

    #[test]
    fn recursive_subcall_arg_matches_entry_arg() {
        // deep in the recursion, (game true) must produce the same
        // interpreter argument (by id) as the program's first call
        let mut st = Store::new();
        let arg = program_arg(&mut st, GAME);
        let interp = Interpreter::default();
        let PartialResult::Subcall { arg: entry_t, .. } = interp.interpret(&mut st, arg).unwrap()
        else {
            panic!("expected subcall");
        };
        // descend: interpret game-body@true, take the flip=true branch,
        // reaching the subcall for (game false)
        let PartialResult::RandomChoice { k, .. } = interp.interpret(&mut st, entry_t).unwrap()
        else {
            panic!("expected choice");
        };
        let t = st.bool_value(true);
        let PartialResult::Subcall {
            arg: entry_f,
            k: k2,
        } = interp.resume(&mut st, &k, t).unwrap()
        else {
            panic!("expected subcall");
        };
        assert_eq!(entry_f.expr, entry_t.expr);
        assert_ne!(entry_f.env, entry_t.env);
        // descend once more inside game-body@false
        let PartialResult::RandomChoice { k: kf, .. } = interp.interpret(&mut st, entry_f).unwrap()
        else {
            panic!("expected choice");
        };
        let PartialResult::Subcall { arg: again_t, .. } = interp.resume(&mut st, &kf, t).unwrap()
        else {
            panic!("expected subcall");
        };
        assert_eq!(again_t, entry_t, "subproblem ids must collide");
        // the outer continuation applies `not` to the callee's value
        let f = st.bool_value(false);
        let PartialResult::Terminal(out) = interp.resume(&mut st, &k2, f).unwrap() else {
            panic!("expected terminal");
        };
        assert_eq!(out, t);
    }

    #[test]
    fn erp_flip_third() {
        let mut st = Store::new();
        let p = st.num_value(rat(1, 3));
        let (vs, ps) = erp_support(&mut st, Primitive::Flip, &[p], Span::synthetic()).unwrap();
        let t = st.bool_value(true);
        let f = st.bool_value(false);
        assert_eq!(vs, vec![t, f]);
        assert_eq!(ps, vec![rat(1, 3), rat(2, 3)]);
    }

    #[test]
    fn erp_flip_defaults_to_fair() {
        let mut st = Store::new();
        let (vs, ps) = erp_support(&mut st, Primitive::Flip, &[], Span::synthetic()).unwrap();
        assert_eq!(vs.len(), 2);
        assert_eq!(ps, vec![rat(1, 2), rat(1, 2)]);
    }

    #[test]
    fn erp_uniform_merges_duplicates() {
        let mut st = Store::new();
        let a = st.sym_value("a");
        let b = st.sym_value("b");
        let lst = st.list_value(&[a, a, b]);
        let (vs, ps) =
            erp_support(&mut st, Primitive::UniformDraw, &[lst], Span::synthetic()).unwrap();
        assert_eq!(vs, vec![a, b]);
        assert_eq!(ps, vec![rat(2, 3), rat(1, 3)]);
    }

    #[test]
    fn erp_flip_zero_drops_branch() {
        let mut st = Store::new();
        let p = st.num_value(rat(0, 1));
        let (vs, ps) = erp_support(&mut st, Primitive::Flip, &[p], Span::synthetic()).unwrap();
        let f = st.bool_value(false);
        assert_eq!(vs, vec![f]);
        assert_eq!(ps, vec![rat(1, 1)]);
    }

    #[test]
    fn erp_rejects_bad_weight() {
        let mut st = Store::new();
        let p = st.num_value(rat(3, 2));
        assert!(erp_support(&mut st, Primitive::Flip, &[p], Span::synthetic()).is_err());
    }

    #[test]
    fn primitives_do_not_cede() {
        let mut st = Store::new();
        let arg = program_arg(&mut st, "(+ 1 (* 2 3) (/ 1 2))");
        let r = Interpreter::default().interpret(&mut st, arg).unwrap();
        let expect = st.num_value(rat(15, 2));
        assert_eq!(r, PartialResult::Terminal(expect));
    }

    #[test]
    fn list_primitives() {
        let mut st = Store::new();
        let arg = program_arg(&mut st, "(list-ref (list 1 2 3) 2)");
        let r = Interpreter::default().interpret(&mut st, arg).unwrap();
        let three = st.num_value(rat(3, 1));
        assert_eq!(r, PartialResult::Terminal(three));

        let arg = program_arg(&mut st, "(sum (list 1 2 (/ 1 2)))");
        let r = Interpreter::default().interpret(&mut st, arg).unwrap();
        let v = st.num_value(rat(7, 2));
        assert_eq!(r, PartialResult::Terminal(v));
    }

    #[test]
    fn unbound_variable_reports_name() {
        let mut st = Store::new();
        let arg = program_arg(&mut st, "(mystery 1)");
        let err = Interpreter::default().interpret(&mut st, arg).unwrap_err();
        match err {
            RuntimeError::UnboundVariable { name, .. } => assert_eq!(name, "mystery"),
            other => panic!("expected unbound variable, got {other}"),
        }
    }

    #[test]
    fn step_budget_trips_on_deterministic_loops() {
        // a deterministic loop that never applies a procedure cannot be
        // written (applications cede), but a long primitive chain can
        // exhaust a tiny budget
        let mut st = Store::new();
        let arg = program_arg(&mut st, "(+ 1 2 3 4 5 6 7 8)");
        let interp = Interpreter::new(3);
        match interp.interpret(&mut st, arg) {
            Err(RuntimeError::StepBudget { budget }) => assert_eq!(budget, 3),
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn shadowing_a_primitive_is_respected() {
        let mut st = Store::new();
        let arg = program_arg(&mut st, "(define (not x) x) (not 5)");
        let interp = Interpreter::default();
        let PartialResult::Subcall { arg: sub, .. } = interp.interpret(&mut st, arg).unwrap()
        else {
            panic!("user `not` is a procedure call now");
        };
        let PartialResult::Terminal(v) = interp.interpret(&mut st, sub).unwrap() else {
            panic!("expected terminal");
        };
        let five = st.num_value(rat(5, 1));
        assert_eq!(v, five);
    }
}
