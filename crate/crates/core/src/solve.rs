//! Turning the network into equations and solving them.
//!
//! One variable per (root, terminal value) pair, with the sparse
//! polynomial right-hand side read off the root's subgraph. All
//! coefficients are nonnegative, so the system is monotone: iterating
//! from zero converges to the least fixed point, which is the mass of
//! halting computations and the probabilistically meaningful solution.
//!
//! Variables are clustered into strongly connected components and the
//! components solved in dependency order: constants by direct
//! substitution, cyclic components by fixed-point iteration or,
//! optionally, Newton's method with the analytic Jacobian.

use std::collections::HashMap;

use indexmap::IndexMap;
use serde::Serialize;

use crate::compile::CompileState;
use crate::error::SolveError;
use crate::fspn::{Distribution, Fspn, NodeId, NodeKind};
use crate::syntax::ValueId;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: u64 = 1_000_000;
pub const DEFAULT_MONOMIAL_BUDGET: usize = 1_000_000;

/// A product of variables with a coefficient; exponents are implicit in
/// the (sorted) repetition of indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub vars: Vec<usize>,
}

/// Sparse polynomial in canonical form: monomials sorted by variable
/// list, one monomial per distinct list, no zero coefficients.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Poly {
    pub monomials: Vec<Monomial>,
}

impl Poly {
    pub fn zero() -> Poly {
        Poly::default()
    }

    pub fn constant(c: f64) -> Poly {
        if c == 0.0 {
            return Poly::zero();
        }
        Poly {
            monomials: vec![Monomial {
                coeff: c,
                vars: vec![],
            }],
        }
    }

    pub fn var(i: usize) -> Poly {
        Poly {
            monomials: vec![Monomial {
                coeff: 1.0,
                vars: vec![i],
            }],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    fn canonicalize(mut monomials: Vec<Monomial>) -> Poly {
        for m in &mut monomials {
            m.vars.sort_unstable();
        }
        monomials.sort_by(|a, b| a.vars.cmp(&b.vars));
        let mut out: Vec<Monomial> = Vec::with_capacity(monomials.len());
        for m in monomials {
            if m.coeff == 0.0 {
                continue;
            }
            match out.last_mut() {
                Some(last) if last.vars == m.vars => last.coeff += m.coeff,
                _ => out.push(m),
            }
        }
        out.retain(|m| m.coeff != 0.0);
        Poly { monomials: out }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut all = self.monomials.clone();
        all.extend(other.monomials.iter().cloned());
        Poly::canonicalize(all)
    }

    pub fn scale(&self, c: f64) -> Poly {
        if c == 0.0 {
            return Poly::zero();
        }
        Poly {
            monomials: self
                .monomials
                .iter()
                .map(|m| Monomial {
                    coeff: m.coeff * c,
                    vars: m.vars.clone(),
                })
                .collect(),
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let mut all = Vec::with_capacity(self.monomials.len() * other.monomials.len());
        for a in &self.monomials {
            for b in &other.monomials {
                let mut vars = a.vars.clone();
                vars.extend(b.vars.iter().copied());
                all.push(Monomial {
                    coeff: a.coeff * b.coeff,
                    vars,
                });
            }
        }
        Poly::canonicalize(all)
    }

    /// Evaluate with `point[i]` as the value of variable `i`.
    pub fn eval(&self, point: &dyn Fn(usize) -> f64) -> f64 {
        self.monomials
            .iter()
            .map(|m| m.vars.iter().fold(m.coeff, |acc, &v| acc * point(v)))
            .sum()
    }

    /// Partial derivative with respect to variable `j`, evaluated at
    /// `point`.
    pub fn deriv_at(&self, j: usize, point: &dyn Fn(usize) -> f64) -> f64 {
        let mut total = 0.0;
        for m in &self.monomials {
            let e = m.vars.iter().filter(|&&v| v == j).count();
            if e == 0 {
                continue;
            }
            let mut term = m.coeff * e as f64;
            let mut skipped = false;
            for &v in &m.vars {
                if v == j && !skipped {
                    skipped = true; // one factor of x_j removed
                    continue;
                }
                term *= point(v);
            }
            total += term;
        }
        total
    }

    /// Replace every solved variable by its value, folding it into the
    /// coefficients; remaining variables are re-indexed by `local`.
    fn specialize(&self, solved: &[Option<f64>], local: &HashMap<usize, usize>) -> Poly {
        let monomials = self
            .monomials
            .iter()
            .map(|m| {
                let mut coeff = m.coeff;
                let mut vars = Vec::new();
                for &v in &m.vars {
                    match solved[v] {
                        Some(x) => coeff *= x,
                        None => vars.push(local[&v]),
                    }
                }
                Monomial { coeff, vars }
            })
            .collect();
        Poly::canonicalize(monomials)
    }

    fn mentioned_vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.monomials.iter().flat_map(|m| m.vars.iter().copied())
    }
}

/// The polynomial system `m[root, value] = rhs` over all (root, terminal)
/// pairs of the compiled graph.
#[derive(Debug)]
pub struct EquationSystem {
    pub variables: Vec<(NodeId, ValueId)>,
    pub index: HashMap<(NodeId, ValueId), usize>,
    pub rhs: Vec<Poly>,
}

impl EquationSystem {
    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }
}

/// Read the equation system off the graph: for each root and terminal
/// value, traverse the root's subgraph with indicators resolved against
/// the selected value and references turned into variables. Shared
/// subgraphs are combined through a per-traversal memo.
pub fn extract_equations(
    g: &Fspn,
    state: &CompileState,
    monomial_budget: usize,
) -> Result<EquationSystem, SolveError> {
    let mut variables = Vec::new();
    let mut index = HashMap::new();
    for (&root, terms) in &state.terminals {
        for &v in terms {
            index.insert((root, v), variables.len());
            variables.push((root, v));
        }
    }
    let mut rhs = Vec::with_capacity(variables.len());
    let mut total_monomials = 0usize;
    for &(root, selected) in &variables {
        let poly = node_poly(g, root, selected, &index, monomial_budget)?;
        debug_assert!(
            poly.monomials.iter().all(|m| m.coeff >= 0.0),
            "the system is monotone: coefficients are products of probabilities"
        );
        total_monomials += poly.len();
        if total_monomials > monomial_budget {
            return Err(SolveError::EquationBudget {
                budget: monomial_budget,
            });
        }
        rhs.push(poly);
    }
    Ok(EquationSystem {
        variables,
        index,
        rhs,
    })
}

/// Polynomial value of one node under one selected value. Iterative
/// post-order so deep graphs cannot overflow the stack.
fn node_poly(
    g: &Fspn,
    start: NodeId,
    selected: ValueId,
    index: &HashMap<(NodeId, ValueId), usize>,
    monomial_budget: usize,
) -> Result<Poly, SolveError> {
    let mut memo: HashMap<NodeId, Poly> = HashMap::new();
    let mut stack: Vec<(NodeId, bool)> = vec![(start, false)];
    while let Some((n, ready)) = stack.pop() {
        if memo.contains_key(&n) {
            continue;
        }
        match g.kind(n) {
            NodeKind::Indicator(v) => {
                let p = if v == selected {
                    Poly::constant(1.0)
                } else {
                    Poly::zero()
                };
                memo.insert(n, p);
            }
            NodeKind::Ref { root, value } => {
                let var = index[&(root, value)];
                memo.insert(n, Poly::var(var));
            }
            kind @ (NodeKind::Root | NodeKind::Sum | NodeKind::Product) => {
                if !ready {
                    stack.push((n, true));
                    for &(c, _) in g.children(n) {
                        if !memo.contains_key(&c) {
                            stack.push((c, false));
                        }
                    }
                    continue;
                }
                let children = g.children(n);
                let p = if matches!(kind, NodeKind::Product) {
                    let mut acc = Poly::constant(1.0);
                    for &(c, w) in children {
                        if acc.is_zero() {
                            break;
                        }
                        acc = acc.mul(&memo[&c].scale(w));
                        if acc.len() > monomial_budget {
                            return Err(SolveError::EquationBudget {
                                budget: monomial_budget,
                            });
                        }
                    }
                    acc
                } else {
                    let mut acc = Poly::zero();
                    for &(c, w) in children {
                        acc = acc.add(&memo[&c].scale(w));
                        if acc.len() > monomial_budget {
                            return Err(SolveError::EquationBudget {
                                budget: monomial_budget,
                            });
                        }
                    }
                    acc
                };
                memo.insert(n, p);
            }
        }
    }
    Ok(memo.remove(&start).expect("start node evaluated"))
}

/// Strongly connected components of the variable dependency graph, in
/// dependency-first order: every component appears after everything it
/// references. Iterative Tarjan.
pub fn scc_decompose(sys: &EquationSystem) -> Vec<Vec<usize>> {
    let n = sys.len();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|u| {
            let mut deps: Vec<usize> = sys.rhs[u].mentioned_vars().collect();
            deps.sort_unstable();
            deps.dedup();
            deps
        })
        .collect();

    let mut idx = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut counter = 0usize;
    // explicit DFS frames: (node, next child position)
    let mut frames: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if idx[root] != usize::MAX {
            continue;
        }
        frames.push((root, 0));
        idx[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut child)) = frames.last_mut() {
            if *child < adj[v].len() {
                let w = adj[v][*child];
                *child += 1;
                if idx[w] == usize::MAX {
                    idx[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(idx[w]);
                }
            } else {
                frames.pop();
                if let Some(&mut (parent, _)) = frames.last_mut() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == idx[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Fixpoint,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentMethod {
    Direct,
    Fixpoint,
    Newton,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub method: SolveMethod,
    pub tol: f64,
    pub max_iter: u64,
    pub normalize: bool,
    pub monomial_budget: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            method: SolveMethod::Fixpoint,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            normalize: false,
            monomial_budget: DEFAULT_MONOMIAL_BUDGET,
        }
    }
}

/// Per-component solver record.
#[derive(Debug, Clone, Serialize)]
pub struct ComponentReport {
    /// Global variable indices, ascending.
    #[serde(skip)]
    pub variables: Vec<usize>,
    pub size: usize,
    pub method: ComponentMethod,
    pub iterations: u64,
    pub residual: f64,
    /// Fixed-point iterates never decreased (vacuously true otherwise).
    pub monotone: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SolveReport {
    /// Values per variable, ordered like `EquationSystem::variables`.
    #[serde(skip)]
    pub assignment: Vec<f64>,
    pub components: Vec<ComponentReport>,
}

/// Solve one component, with everything outside it already solved.
pub fn solve_component(
    comp: &[usize],
    sys: &EquationSystem,
    solved: &[Option<f64>],
    opts: &SolveOptions,
) -> Result<(Vec<f64>, ComponentReport), SolveError> {
    let local: HashMap<usize, usize> = comp.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let polys: Vec<Poly> = comp
        .iter()
        .map(|&v| sys.rhs[v].specialize(solved, &local))
        .collect();

    // substitution simplifier: a singleton with no self-reference is a
    // constant once its dependencies are in
    if comp.len() == 1 && polys[0].mentioned_vars().next().is_none() {
        let value = polys[0].eval(&|_| unreachable!("constant polynomial"));
        return Ok((
            vec![value],
            ComponentReport {
                variables: comp.to_vec(),
                size: 1,
                method: ComponentMethod::Direct,
                iterations: 0,
                residual: 0.0,
                monotone: true,
            },
        ));
    }

    match opts.method {
        SolveMethod::Fixpoint => fixpoint(comp, &polys, opts),
        SolveMethod::Newton => newton(comp, &polys, opts),
    }
}

fn residual_of(polys: &[Poly], x: &[f64]) -> f64 {
    polys
        .iter()
        .enumerate()
        .map(|(i, p)| (p.eval(&|v| x[v]) - x[i]).abs())
        .fold(0.0, f64::max)
}

fn fixpoint(
    comp: &[usize],
    polys: &[Poly],
    opts: &SolveOptions,
) -> Result<(Vec<f64>, ComponentReport), SolveError> {
    let n = comp.len();
    let mut x = vec![0.0f64; n];
    let mut monotone = true;
    let mut iterations = 0u64;
    let mut prev_delta = f64::INFINITY;
    loop {
        let next: Vec<f64> = polys.iter().map(|p| p.eval(&|v| x[v])).collect();
        iterations += 1;
        let mut delta = 0.0f64;
        for i in 0..n {
            if next[i] < x[i] {
                monotone = false;
            }
            delta = delta.max((next[i] - x[i]).abs());
        }
        x = next;
        // stop on the geometric-tail estimate of the remaining error,
        // delta * b / (1 - b), not on the step size alone: for slowly
        // contracting loops (acceptance probability 1/64 gives b = 63/64)
        // the step underestimates the distance to the fixed point by 1/(1-b)
        let rate = if prev_delta.is_finite() && prev_delta > 0.0 {
            delta / prev_delta
        } else {
            1.0
        };
        prev_delta = delta;
        let tail = if rate < 1.0 {
            delta * rate / (1.0 - rate)
        } else {
            f64::INFINITY
        };
        // below ~machine epsilon the float iteration has stopped moving
        // and no further progress is possible
        if delta < 1e-15 || (delta < opts.tol && tail < opts.tol) {
            return Ok((
                x.clone(),
                ComponentReport {
                    variables: comp.to_vec(),
                    size: n,
                    method: ComponentMethod::Fixpoint,
                    iterations,
                    residual: residual_of(polys, &x),
                    monotone,
                },
            ));
        }
        if iterations >= opts.max_iter {
            return Err(SolveError::NoConvergence {
                size: n,
                iterations,
                residual: delta,
            });
        }
    }
}

fn newton(
    comp: &[usize],
    polys: &[Poly],
    opts: &SolveOptions,
) -> Result<(Vec<f64>, ComponentReport), SolveError> {
    let n = comp.len();
    let mut x = vec![0.0f64; n];
    let mut iterations = 0u64;
    loop {
        let f: Vec<f64> = polys.iter().map(|p| p.eval(&|v| x[v])).collect();
        let residual = (0..n).map(|i| (f[i] - x[i]).abs()).fold(0.0, f64::max);
        if residual <= opts.tol {
            return Ok((
                x.clone(),
                ComponentReport {
                    variables: comp.to_vec(),
                    size: n,
                    method: ComponentMethod::Newton,
                    iterations,
                    residual,
                    monotone: true,
                },
            ));
        }
        if iterations >= opts.max_iter {
            return Err(SolveError::NoConvergence {
                size: n,
                iterations,
                residual,
            });
        }
        // (I - J) d = f(x) - x
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let jac = polys[i].deriv_at(j, &|v| x[v]);
                        (if i == j { 1.0 } else { 0.0 }) - jac
                    })
                    .collect()
            })
            .collect();
        let b: Vec<f64> = (0..n).map(|i| f[i] - x[i]).collect();
        let step = match solve_dense(a.clone(), b.clone()) {
            Some(d) => d,
            None => {
                // one diagonal perturbation, then give up on Newton
                for (i, row) in a.iter_mut().enumerate() {
                    row[i] += 1e-12;
                }
                match solve_dense(a, b) {
                    Some(d) => d,
                    None => {
                        let (values, mut report) = fixpoint(comp, polys, opts)?;
                        report.method = ComponentMethod::Fixpoint;
                        return Ok((values, report));
                    }
                }
            }
        };
        for i in 0..n {
            x[i] += step[i];
        }
        iterations += 1;
    }
}

/// Gaussian elimination with partial pivoting; `None` on singularity.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty");
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let pivot_row = a[col].clone();
        for row in col + 1..n {
            let factor = a[row][col] / pivot_row[col];
            if factor == 0.0 {
                continue;
            }
            for (k, p) in pivot_row.iter().enumerate().skip(col) {
                a[row][k] -= factor * p;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Some(x)
}

/// Full pipeline from a compiled graph to the program's distribution on
/// return values: extract equations, cluster, solve in order, then read
/// the global root's variables.
pub fn marginal(
    g: &Fspn,
    state: &CompileState,
    opts: &SolveOptions,
) -> Result<(Distribution, SolveReport), SolveError> {
    let sys = extract_equations(g, state, opts.monomial_budget)?;
    let comps = scc_decompose(&sys);
    let mut solved: Vec<Option<f64>> = vec![None; sys.len()];
    let mut report = SolveReport::default();
    for comp in &comps {
        let (values, comp_report) = solve_component(comp, &sys, &solved, opts)?;
        for (&var, &value) in comp.iter().zip(values.iter()) {
            solved[var] = Some(value);
        }
        report.components.push(comp_report);
    }
    report.assignment = solved.iter().map(|v| v.unwrap_or(0.0)).collect();

    let mut mass: IndexMap<ValueId, f64> = IndexMap::new();
    if let Some(terms) = state.terminals.get(&g.global_root()) {
        for &v in terms {
            let var = sys.index[&(g.global_root(), v)];
            mass.insert(v, report.assignment[var]);
        }
    }
    let mut dist = Distribution::from_masses(mass);
    if opts.normalize {
        if dist.total_mass < opts.tol {
            return Err(SolveError::ZeroMass {
                total: dist.total_mass,
            });
        }
        dist = dist.normalized().expect("positive mass");
    }
    Ok((dist, report))
}
