//! Shared test utilities: the truncated enumeration oracle and the query
//! program corpus.
//!
//! The oracle explores the coroutine tree depth-first, accumulating path
//! probabilities, memoized per (subproblem, remaining depth). It never
//! touches the network or the equation solver, so it is an independent
//! check of the compile-and-solve path. `lost` is the probability mass of
//! paths cut off by the depth bound; for non-recursive programs a
//! generous bound makes it exactly zero.

use std::collections::HashMap;
use std::rc::Rc;

use indexmap::IndexMap;
use marginal::interp::{Interpreter, InterpreterArg, PartialResult};
use marginal::syntax::{parse_program, Store, ValueId};
use num::ToPrimitive;

pub struct Enumerated {
    pub dist: IndexMap<ValueId, f64>,
    pub lost: f64,
}

type Memo = HashMap<(InterpreterArg, u32), Rc<Enumerated>>;

pub fn program_arg(store: &mut Store, text: &str) -> InterpreterArg {
    let expr = parse_program(store, text).expect("test program parses");
    let env = store.empty_env();
    InterpreterArg { expr, env }
}

/// Enumerate a program's outcome distribution, truncating subcall
/// nesting at `depth`.
///
/// Filled bottom-up by depth so that deep truncation bounds do not
/// recurse deeply: at stage `d` every subproblem reached at stage `d-1`
/// is already memoized.
pub fn enumerate_program(store: &mut Store, text: &str, depth: u32) -> Enumerated {
    let arg = program_arg(store, text);
    let interp = Interpreter::default();
    let mut memo = Memo::new();
    for stage in 1..=depth {
        enumerate(store, &interp, arg, stage, &mut memo);
    }
    let out = enumerate(store, &interp, arg, depth, &mut memo);
    Enumerated {
        dist: out.dist.clone(),
        lost: out.lost,
    }
}

fn enumerate(
    store: &mut Store,
    interp: &Interpreter,
    arg: InterpreterArg,
    depth: u32,
    memo: &mut Memo,
) -> Rc<Enumerated> {
    if let Some(hit) = memo.get(&(arg, depth)) {
        return Rc::clone(hit);
    }
    let mut dist = IndexMap::new();
    let mut lost = 0.0;
    if depth == 0 {
        lost = 1.0;
    } else {
        let first = interp.interpret(store, arg).expect("oracle programs run");
        explore(store, interp, first, 1.0, depth, &mut dist, &mut lost, memo);
    }
    let out = Rc::new(Enumerated { dist, lost });
    memo.insert((arg, depth), Rc::clone(&out));
    out
}

#[allow(clippy::too_many_arguments)]
fn explore(
    store: &mut Store,
    interp: &Interpreter,
    result: PartialResult,
    weight: f64,
    depth: u32,
    dist: &mut IndexMap<ValueId, f64>,
    lost: &mut f64,
    memo: &mut Memo,
) {
    match result {
        PartialResult::Terminal(v) => {
            *dist.entry(v).or_insert(0.0) += weight;
        }
        PartialResult::RandomChoice { k, values, probs } => {
            for (v, p) in values.into_iter().zip(probs) {
                let p = p.to_f64().expect("probability fits f64");
                let next = interp.resume(store, &k, v).expect("oracle programs run");
                explore(store, interp, next, weight * p, depth, dist, lost, memo);
            }
        }
        PartialResult::Subcall { k, arg } => {
            let sub = enumerate(store, interp, arg, depth - 1, memo);
            *lost += weight * sub.lost;
            let outcomes: Vec<(ValueId, f64)> = sub.dist.iter().map(|(&v, &q)| (v, q)).collect();
            for (v, q) in outcomes {
                if q == 0.0 {
                    continue;
                }
                let next = interp.resume(store, &k, v).expect("oracle programs run");
                explore(store, interp, next, weight * q, depth, dist, lost, memo);
            }
        }
    }
}

/// One conditioning benchmark: shared definitions, a query expression and
/// a condition expression.
pub struct QueryCase {
    pub name: &'static str,
    pub defs: &'static str,
    pub query: &'static str,
    pub condition: &'static str,
}

impl QueryCase {
    /// The program whose marginal is under test.
    pub fn query_program(&self) -> String {
        format!("(query {} {} {})", self.defs, self.query, self.condition)
    }

    /// The unconditioned joint for the oracle: evaluates to
    /// `(queryValue . conditionValue)`.
    pub fn joint_program(&self) -> String {
        format!("{} (cons {} {})", self.defs, self.query, self.condition)
    }
}

/// Finite-support query programs (2-6 flips, acceptance probability at
/// least 1/64) for the rejection-equivalence suite.
pub const QUERY_CORPUS: &[QueryCase] = &[
    QueryCase {
        name: "two-coins-or",
        defs: "(define a (flip 0.5)) (define b (flip 0.5))",
        query: "(list a b)",
        condition: "(or a b)",
    },
    QueryCase {
        name: "biased-or",
        defs: "(define a (flip 0.6)) (define b (flip 0.3))",
        query: "a",
        condition: "(or a b)",
    },
    QueryCase {
        name: "three-coins-and-or",
        defs: "(define a (flip 0.5)) (define b (flip 0.5)) (define c (flip 0.5))",
        query: "(list a b c)",
        condition: "(and a (or b c))",
    },
    QueryCase {
        name: "boundary-1-in-64",
        defs: "(define a (flip 1/4)) (define b (flip 1/4)) (define c (flip 1/4))",
        query: "(list a b)",
        condition: "(and a b c)",
    },
    QueryCase {
        name: "equality-query",
        defs: "(define a (flip 0.5)) (define b (flip 0.5))",
        query: "(eq? a b)",
        condition: "(or a (not b))",
    },
    QueryCase {
        name: "count-of-four",
        defs: "(define a (flip 0.5)) (define b (flip 0.5)) (define c (flip 0.5)) \
               (define d (flip 0.5)) \
               (define total (sum (list (if a 1 0) (if b 1 0) (if c 1 0) (if d 1 0))))",
        query: "total",
        condition: "(< 1 total)",
    },
    QueryCase {
        name: "dependent-flip",
        defs: "(define a (flip 0.5)) (define b (flip (if a 0.9 0.1)))",
        query: "(list a b)",
        condition: "b",
    },
    QueryCase {
        name: "uniform-plus-flip",
        defs: "(define d (uniform-draw '(1 2 3))) (define a (flip 0.5))",
        query: "(+ d (if a 1 0))",
        condition: "(< d 3)",
    },
    QueryCase {
        name: "multinomial-mix",
        defs: "(define m (multinomial '(x y z) '(0.2 0.3 0.5))) (define a (flip 0.25))",
        query: "(list m a)",
        condition: "(or a (eq? m 'z))",
    },
    QueryCase {
        name: "agreement",
        defs: "(define a (flip 0.3)) (define b (flip 0.7))",
        query: "a",
        condition: "(eq? a b)",
    },
    QueryCase {
        name: "repeat-map-count",
        defs: "(define xs (repeat 3 (lambda () (flip 0.5))))",
        query: "(sum (map (lambda (x) (if x 1 0)) xs))",
        condition: "(car xs)",
    },
    QueryCase {
        name: "boolean-query",
        defs: "(define a (flip 0.5)) (define b (flip 0.5))",
        query: "(and a b)",
        condition: "(or a b)",
    },
];

/// Enumerate-and-renormalize: the conditioning oracle for finite joints.
/// Panics if any mass was truncated (the corpus is loop-free).
pub fn conditioned_oracle(store: &mut Store, case: &QueryCase) -> IndexMap<ValueId, f64> {
    let joint = enumerate_program(store, &case.joint_program(), 64);
    assert_eq!(joint.lost, 0.0, "{}: joint must be finite", case.name);
    let f = store.bool_value(false);
    let mut accepted: IndexMap<ValueId, f64> = IndexMap::new();
    let mut accept_mass = 0.0;
    for (&pair, &w) in &joint.dist {
        let marginal::syntax::Value::Pair(q, c) = *store.value(pair) else {
            panic!("joint returns pairs");
        };
        if c != f {
            *accepted.entry(q).or_insert(0.0) += w;
            accept_mass += w;
        }
    }
    assert!(
        accept_mass > 0.0,
        "{}: condition must be satisfiable",
        case.name
    );
    for w in accepted.values_mut() {
        *w /= accept_mass;
    }
    accepted
}
