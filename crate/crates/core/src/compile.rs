//! Compilation of a program to a factored sum-product network.
//!
//! A FIFO queue of tasks drives the coroutine interpreter over every
//! execution path exactly once per distinct subproblem. Each task forces a
//! thunk to a partial result and extends the graph:
//!
//! * a terminal adds an indicator and, when the value is new for its
//!   root, notifies every context waiting on that root;
//! * a random choice adds a sum with one pending task per outcome;
//! * a subcall adds a sum, registers (or reuses) the callee's root, and
//!   leaves a callback so future return values extend this context too.
//!
//! Subproblem identity is the interned (expression, environment) pair, so
//! the lookup is a single hash on two integers. FIFO order makes builds
//! breadth-first and reproducible: mutually recursive subproblems are all
//! registered before any deep path runs.

use std::collections::VecDeque;

use indexmap::{IndexMap, IndexSet};
use num::ToPrimitive;

use crate::error::CompileError;
use crate::fspn::{Fspn, NodeId, NodeKind};
use crate::interp::{Continuation, Interpreter, InterpreterArg, PartialResult};
use crate::syntax::{ExprId, Store, ValueId};

pub const DEFAULT_TASK_BUDGET: u64 = 10_000_000;
pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, Copy)]
pub struct CompileOptions {
    /// Cap on popped tasks before compilation aborts.
    pub task_budget: u64,
    /// Cap on graph nodes before compilation aborts.
    pub node_budget: u64,
    /// Cap on deterministic reductions per interpreter step.
    pub step_budget: u64,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            task_budget: DEFAULT_TASK_BUDGET,
            node_budget: DEFAULT_NODE_BUDGET,
            step_budget: crate::interp::DEFAULT_STEP_BUDGET,
        }
    }
}

enum Thunk {
    Interpret(InterpreterArg),
    Resume(Continuation, ValueId),
}

struct Task {
    thunk: Thunk,
    prev: NodeId,
    weight: f64,
}

/// Bookkeeping produced alongside the graph.
#[derive(Debug, Default)]
pub struct CompileState {
    /// Known terminal values per root, in discovery order.
    pub terminals: IndexMap<NodeId, IndexSet<ValueId>>,
    /// Waiting contexts per root: the sum node to extend and the
    /// continuation to resume per new terminal.
    pub callbacks: IndexMap<NodeId, Vec<(NodeId, Continuation)>>,
    /// Distinct subproblems and their roots, in registration order.
    pub subproblem: IndexMap<InterpreterArg, NodeId>,
    /// Tasks popped from the queue.
    pub tasks_popped: u64,
}

/// Run the full compilation loop on a program body.
pub fn build_fspn(
    store: &mut Store,
    program: ExprId,
    opts: &CompileOptions,
) -> Result<(Fspn, CompileState), CompileError> {
    let interp = Interpreter::new(opts.step_budget);
    let mut g = Fspn::new();
    let global = g.global_root();
    let mut state = CompileState::default();
    state.terminals.insert(global, IndexSet::new());

    let env = store.empty_env();
    let init = InterpreterArg { expr: program, env };
    let mut queue: VecDeque<Task> = VecDeque::new();
    queue.push_back(Task {
        thunk: Thunk::Interpret(init),
        prev: global,
        weight: 1.0,
    });

    while let Some(task) = queue.pop_front() {
        state.tasks_popped += 1;
        if state.tasks_popped > opts.task_budget {
            return Err(budget_error("task", opts.task_budget, &g, &state));
        }
        if g.node_count() as u64 > opts.node_budget {
            return Err(budget_error("node", opts.node_budget, &g, &state));
        }
        let result = match &task.thunk {
            Thunk::Interpret(arg) => interp.interpret(store, *arg)?,
            Thunk::Resume(k, v) => interp.resume(store, k, *v)?,
        };
        let n_cur = match result {
            PartialResult::Terminal(v) => {
                let n_cur = g.add_node(NodeKind::Indicator(v), task.prev);
                let root = g.root_of(task.prev);
                let known = state.terminals.entry(root).or_default().contains(&v);
                if !known {
                    if let Some(cbs) = state.callbacks.get(&root) {
                        for &(n_waiting, ref k) in cbs {
                            process_terminal(&mut g, &mut queue, root, v, n_waiting, k);
                        }
                    }
                    state.terminals.get_mut(&root).expect("entry").insert(v);
                }
                n_cur
            }
            PartialResult::RandomChoice { k, values, probs } => {
                let n_cur = g.add_node(NodeKind::Sum, task.prev);
                let mut weight_sum = 0.0;
                for (v, p) in values.into_iter().zip(probs) {
                    let w = p.to_f64().expect("probability fits f64");
                    debug_assert!(w > 0.0, "zero-probability branches are pre-dropped");
                    weight_sum += w;
                    queue.push_back(Task {
                        thunk: Thunk::Resume(k.clone(), v),
                        prev: n_cur,
                        weight: w,
                    });
                }
                debug_assert!(
                    (weight_sum - 1.0).abs() < 1e-12,
                    "choice weights sum to 1, got {weight_sum}"
                );
                n_cur
            }
            PartialResult::Subcall { k, arg } => {
                let n_cur = g.add_node(NodeKind::Sum, task.prev);
                let root = match state.subproblem.get(&arg) {
                    None => {
                        let root = g.add_root();
                        state.subproblem.insert(arg, root);
                        state.terminals.entry(root).or_default();
                        queue.push_back(Task {
                            thunk: Thunk::Interpret(arg),
                            prev: root,
                            weight: 1.0,
                        });
                        root
                    }
                    Some(&root) => {
                        let known: Vec<ValueId> = state.terminals[&root].iter().copied().collect();
                        for v in known {
                            process_terminal(&mut g, &mut queue, root, v, n_cur, &k);
                        }
                        root
                    }
                };
                state.callbacks.entry(root).or_default().push((n_cur, k));
                n_cur
            }
        };
        g.add_edge(task.prev, n_cur, task.weight)
            .expect("compiler only builds edges out of internal nodes");
    }
    Ok((g, state))
}

/// Extend a waiting context with a newly known terminal `v` of `root`:
/// a product of the reference `P(root = v)` with whatever the resumed
/// continuation builds next.
fn process_terminal(
    g: &mut Fspn,
    queue: &mut VecDeque<Task>,
    root: NodeId,
    v: ValueId,
    n_prev: NodeId,
    k: &Continuation,
) {
    let prod = g.add_node(NodeKind::Product, n_prev);
    let rf = g.add_node(NodeKind::Ref { root, value: v }, prod);
    g.add_edge(n_prev, prod, 1.0).expect("product edge");
    g.add_edge(prod, rf, 1.0).expect("ref edge");
    queue.push_back(Task {
        thunk: Thunk::Resume(k.clone(), v),
        prev: prod,
        weight: 1.0,
    });
}

fn budget_error(which: &'static str, budget: u64, g: &Fspn, state: &CompileState) -> CompileError {
    // the subproblem with the most waiting contexts is the best hint at
    // what is blowing up
    let frontier = state
        .callbacks
        .iter()
        .max_by_key(|(_, cbs)| cbs.len())
        .map(|(&root, cbs)| {
            format!(
                "root {} with {} waiting contexts and {} terminals",
                root.0,
                cbs.len(),
                state.terminals.get(&root).map_or(0, IndexSet::len)
            )
        })
        .unwrap_or_else(|| "none".to_owned());
    let _ = g;
    CompileError::BudgetExceeded {
        which,
        budget,
        frontier: format!("{frontier}; {} subproblems total", state.subproblem.len()),
    }
}

/// Structural audit: every (callback, terminal) pair of every root must
/// have exactly one product/reference structure under the callback node.
pub fn audit_callbacks(g: &Fspn, state: &CompileState) -> Result<(), String> {
    for (&root, cbs) in &state.callbacks {
        let terms = state.terminals.get(&root).cloned().unwrap_or_default();
        for &(waiting, _) in cbs {
            let mut seen: IndexMap<ValueId, usize> = IndexMap::new();
            for &(child, _) in g.children(waiting) {
                if !matches!(g.kind(child), NodeKind::Product) {
                    continue;
                }
                for &(leaf, _) in g.children(child) {
                    if let NodeKind::Ref { root: r, value } = g.kind(leaf) {
                        if r == root {
                            *seen.entry(value).or_insert(0) += 1;
                        }
                    }
                }
            }
            for &v in &terms {
                match seen.get(&v) {
                    Some(1) => {}
                    Some(n) => {
                        return Err(format!(
                            "callback node {} has {n} structures for one terminal of root {}",
                            waiting.0, root.0
                        ))
                    }
                    None => {
                        return Err(format!(
                            "callback node {} is missing a terminal of root {}",
                            waiting.0, root.0
                        ))
                    }
                }
            }
            if seen.len() != terms.len() {
                return Err(format!(
                    "callback node {} references values that are not terminals of root {}",
                    waiting.0, root.0
                ));
            }
        }
    }
    Ok(())
}
