//! The shared append-only intern store.
//!
//! Symbols, values, expressions, environments and recursive definition
//! groups all live here. Ids are dense indices in insertion order, so two
//! runs over the same program text produce identical ids. Hashing is on
//! component ids only, which keeps interning cost independent of the size
//! of the structures being compared.

use std::collections::HashMap;
use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use indexmap::{IndexMap, IndexSet};
use num::BigRational;

use super::types::{EnvId, ExprId, ExprKind, GroupId, Primitive, Span, SymbolId, Value, ValueId};

/// An interned environment: bindings sorted by symbol id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Env {
    pub bindings: Vec<(SymbolId, ValueId)>,
}

impl Env {
    pub fn lookup(&self, sym: SymbolId) -> Option<ValueId> {
        self.bindings
            .binary_search_by_key(&sym, |&(s, _)| s)
            .ok()
            .map(|i| self.bindings[i].1)
    }
}

/// Analysis results for one recursive definition group: for each member,
/// the set of ambient symbols its closure must capture. The set is
/// transitive through sibling references, so a closure carries everything
/// needed to reconstruct any sibling it can reach.
#[derive(Debug)]
pub struct GroupInfo {
    pub members: Vec<(SymbolId, ExprId)>,
    /// Per member: ambient (non-group) symbols relevant to it.
    pub relevant: Vec<Rc<BTreeSet<SymbolId>>>,
    /// Per member: whether its lambda mentions any group name. Members
    /// that do not can be plain closures with no group component.
    pub uses_group: Vec<bool>,
}

#[derive(Debug, Default)]
pub struct Store {
    symbols: IndexSet<String>,
    values: IndexSet<Value>,
    exprs: IndexMap<ExprKind, Span>,
    envs: IndexSet<Env>,
    groups: IndexSet<Vec<(SymbolId, ExprId)>>,
    free_vars: HashMap<ExprId, Rc<BTreeSet<SymbolId>>>,
    group_info: HashMap<GroupId, Rc<GroupInfo>>,
}

impl Store {
    pub fn new() -> Self {
        Store::default()
    }

    // ------------------------------------------------------------------
    // Symbols

    pub fn symbol(&mut self, name: &str) -> SymbolId {
        if let Some(i) = self.symbols.get_index_of(name) {
            return SymbolId(i as u32);
        }
        let (i, _) = self.symbols.insert_full(name.to_owned());
        SymbolId(i as u32)
    }

    pub fn symbol_name(&self, sym: SymbolId) -> &str {
        self.symbols.get_index(sym.0 as usize).expect("symbol id")
    }

    // ------------------------------------------------------------------
    // Values

    /// Intern a value. Returns the existing id when the structure has been
    /// seen before, otherwise a fresh one.
    pub fn intern_value(&mut self, v: Value) -> ValueId {
        let (i, _) = self.values.insert_full(v);
        ValueId(i as u32)
    }

    pub fn value(&self, id: ValueId) -> &Value {
        self.values.get_index(id.0 as usize).expect("value id")
    }

    pub fn value_count(&self) -> usize {
        self.values.len()
    }

    pub fn bool_value(&mut self, b: bool) -> ValueId {
        self.intern_value(Value::Bool(b))
    }

    pub fn num_value(&mut self, n: BigRational) -> ValueId {
        self.intern_value(Value::Num(n))
    }

    pub fn sym_value(&mut self, name: &str) -> ValueId {
        let s = self.symbol(name);
        self.intern_value(Value::Sym(s))
    }

    pub fn nil_value(&mut self) -> ValueId {
        self.intern_value(Value::Nil)
    }

    pub fn cons_value(&mut self, car: ValueId, cdr: ValueId) -> ValueId {
        self.intern_value(Value::Pair(car, cdr))
    }

    pub fn list_value(&mut self, items: &[ValueId]) -> ValueId {
        let mut acc = self.nil_value();
        for &v in items.iter().rev() {
            acc = self.cons_value(v, acc);
        }
        acc
    }

    /// Unfold a proper list value into its elements; `None` when the value
    /// is not a proper list.
    pub fn list_elements(&self, mut v: ValueId) -> Option<Vec<ValueId>> {
        let mut out = Vec::new();
        loop {
            match self.value(v) {
                Value::Nil => return Some(out),
                Value::Pair(car, cdr) => {
                    out.push(*car);
                    v = *cdr;
                }
                _ => return None,
            }
        }
    }

    // ------------------------------------------------------------------
    // Expressions

    /// Intern an expression. The span of the first occurrence is kept.
    pub fn intern_expr(&mut self, kind: ExprKind, span: Span) -> ExprId {
        if let Some(i) = self.exprs.get_index_of(&kind) {
            return ExprId(i as u32);
        }
        let (i, _) = self.exprs.insert_full(kind, span);
        ExprId(i as u32)
    }

    pub fn expr(&self, id: ExprId) -> &ExprKind {
        self.exprs.get_index(id.0 as usize).expect("expr id").0
    }

    pub fn expr_span(&self, id: ExprId) -> Span {
        *self.exprs.get_index(id.0 as usize).expect("expr id").1
    }

    pub fn expr_count(&self) -> usize {
        self.exprs.len()
    }

    // ------------------------------------------------------------------
    // Environments

    pub fn intern_env(&mut self, mut bindings: Vec<(SymbolId, ValueId)>) -> EnvId {
        bindings.sort_unstable_by_key(|&(s, _)| s);
        bindings.dedup_by_key(|&mut (s, _)| s);
        let (i, _) = self.envs.insert_full(Env { bindings });
        EnvId(i as u32)
    }

    pub fn empty_env(&mut self) -> EnvId {
        self.intern_env(Vec::new())
    }

    pub fn env(&self, id: EnvId) -> &Env {
        self.envs.get_index(id.0 as usize).expect("env id")
    }

    /// Extend an environment, later bindings shadowing earlier ones.
    pub fn extend_env(&mut self, base: EnvId, extra: &[(SymbolId, ValueId)]) -> EnvId {
        if extra.is_empty() {
            return base;
        }
        let mut map: BTreeMap<SymbolId, ValueId> =
            self.env(base).bindings.iter().copied().collect();
        for &(s, v) in extra {
            map.insert(s, v);
        }
        let (i, _) = self.envs.insert_full(Env {
            bindings: map.into_iter().collect(),
        });
        EnvId(i as u32)
    }

    /// Keep only the bindings whose symbol is in `keep`.
    pub fn restrict_env(&mut self, env: EnvId, keep: &BTreeSet<SymbolId>) -> EnvId {
        let bindings: Vec<_> = self
            .env(env)
            .bindings
            .iter()
            .copied()
            .filter(|(s, _)| keep.contains(s))
            .collect();
        if bindings.len() == self.env(env).bindings.len() {
            return env;
        }
        let (i, _) = self.envs.insert_full(Env { bindings });
        EnvId(i as u32)
    }

    // ------------------------------------------------------------------
    // Recursive definition groups

    pub fn intern_group(&mut self, members: Vec<(SymbolId, ExprId)>) -> GroupId {
        let (i, _) = self.groups.insert_full(members);
        GroupId(i as u32)
    }

    pub fn group(&self, id: GroupId) -> &[(SymbolId, ExprId)] {
        self.groups.get_index(id.0 as usize).expect("group id")
    }

    /// Per-member relevant-capture sets for a group, memoized.
    ///
    /// Member `i` needs the free variables of every group lambda reachable
    /// from it through group names, minus the group names themselves:
    /// exactly what is required to rebuild any sibling closure at
    /// application time.
    pub fn group_info(&mut self, id: GroupId) -> Rc<GroupInfo> {
        if let Some(info) = self.group_info.get(&id) {
            return Rc::clone(info);
        }
        let members: Vec<(SymbolId, ExprId)> = self.group(id).to_vec();
        let names: BTreeSet<SymbolId> = members.iter().map(|&(n, _)| n).collect();
        let frees: Vec<Rc<BTreeSet<SymbolId>>> = members
            .iter()
            .map(|&(_, lam)| self.free_vars(lam))
            .collect();
        // reachability over the sibling-reference graph
        let n = members.len();
        let mut reach: Vec<BTreeSet<usize>> = (0..n).map(|i| BTreeSet::from([i])).collect();
        let edges: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| frees[i].contains(&members[j].0))
                    .collect()
            })
            .collect();
        let mut changed = true;
        while changed {
            changed = false;
            for r in &mut reach {
                let mut add = Vec::new();
                for &j in r.iter() {
                    for &k in &edges[j] {
                        if !r.contains(&k) {
                            add.push(k);
                        }
                    }
                }
                if !add.is_empty() {
                    changed = true;
                    r.extend(add);
                }
            }
        }
        let relevant: Vec<Rc<BTreeSet<SymbolId>>> = (0..n)
            .map(|i| {
                let mut set = BTreeSet::new();
                for &j in &reach[i] {
                    set.extend(frees[j].iter().copied());
                }
                for name in &names {
                    set.remove(name);
                }
                Rc::new(set)
            })
            .collect();
        let uses_group = (0..n)
            .map(|i| frees[i].iter().any(|s| names.contains(s)))
            .collect();
        let info = Rc::new(GroupInfo {
            members,
            relevant,
            uses_group,
        });
        self.group_info.insert(id, Rc::clone(&info));
        info
    }

    // ------------------------------------------------------------------
    // Free variables

    /// Free variables of an expression, memoized per id. Primitive names
    /// count as free variables like any other symbol; resolution against
    /// the built-in table happens at lookup time.
    pub fn free_vars(&mut self, e: ExprId) -> Rc<BTreeSet<SymbolId>> {
        if let Some(set) = self.free_vars.get(&e) {
            return Rc::clone(set);
        }
        let set = match self.expr(e).clone() {
            ExprKind::Const(_) | ExprKind::Quote(_) => BTreeSet::new(),
            ExprKind::Var(s) => BTreeSet::from([s]),
            ExprKind::Lambda { params, body } => {
                let mut set = (*self.free_vars(body)).clone();
                for p in params {
                    set.remove(&p);
                }
                set
            }
            ExprKind::Apply { func, args } => {
                let mut set = (*self.free_vars(func)).clone();
                for a in args {
                    set.extend(self.free_vars(a).iter().copied());
                }
                set
            }
            ExprKind::If { cond, then_, else_ } => {
                let mut set = (*self.free_vars(cond)).clone();
                set.extend(self.free_vars(then_).iter().copied());
                set.extend(self.free_vars(else_).iter().copied());
                set
            }
            ExprKind::Body { defines, exprs } => {
                let mut set = BTreeSet::new();
                for &(_, rhs) in &defines {
                    set.extend(self.free_vars(rhs).iter().copied());
                }
                for &x in &exprs {
                    set.extend(self.free_vars(x).iter().copied());
                }
                for (name, _) in &defines {
                    set.remove(name);
                }
                set
            }
        };
        let set = Rc::new(set);
        self.free_vars.insert(e, Rc::clone(&set));
        set
    }

    // ------------------------------------------------------------------
    // Printing

    /// Canonical s-expression text of a value: `#t`/`#f` booleans, exact
    /// rationals as `p/q`, lists in parentheses.
    pub fn value_text(&self, id: ValueId) -> String {
        let mut out = String::new();
        self.write_value(id, &mut out);
        out
    }

    fn write_value(&self, id: ValueId, out: &mut String) {
        match self.value(id) {
            Value::Bool(true) => out.push_str("#t"),
            Value::Bool(false) => out.push_str("#f"),
            Value::Num(n) => {
                if n.is_integer() {
                    out.push_str(&n.numer().to_string());
                } else {
                    out.push_str(&format!("{}/{}", n.numer(), n.denom()));
                }
            }
            Value::Sym(s) => out.push_str(self.symbol_name(*s)),
            Value::Str(s) => {
                out.push('"');
                for c in s.chars() {
                    match c {
                        '"' => out.push_str("\\\""),
                        '\\' => out.push_str("\\\\"),
                        '\n' => out.push_str("\\n"),
                        _ => out.push(c),
                    }
                }
                out.push('"');
            }
            Value::Nil => out.push_str("()"),
            Value::Pair(car, cdr) => {
                out.push('(');
                self.write_value(*car, out);
                let mut rest = *cdr;
                loop {
                    match self.value(rest) {
                        Value::Nil => break,
                        Value::Pair(a, d) => {
                            out.push(' ');
                            self.write_value(*a, out);
                            rest = *d;
                        }
                        _ => {
                            out.push_str(" . ");
                            self.write_value(rest, out);
                            break;
                        }
                    }
                }
                out.push(')');
            }
            Value::Closure { .. } => out.push_str("#<procedure>"),
            Value::Prim(p) => {
                out.push_str("#<primitive:");
                out.push_str(p.name());
                out.push('>');
            }
        }
    }
}

/// Resolve a name against the built-in primitive table. Used as a
/// fallback after environment lookup fails.
pub fn primitive_for(name: &str) -> Option<Primitive> {
    Primitive::from_name(name)
}
