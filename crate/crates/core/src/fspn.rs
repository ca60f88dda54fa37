//! The factored sum-product network.
//!
//! A directed graph of roots, sums, products, indicators and reference
//! nodes. Reference nodes point at the probability of a value under
//! another root, which is what lets the graph express mutually dependent
//! subdistributions; evaluating it means solving the induced equation
//! system (see [`crate::solve`]).
//!
//! Node ids are dense and assigned in insertion order, so identical
//! compilations produce byte-identical graphs.

use indexmap::IndexMap;
use serde::Serialize;
use std::collections::HashMap;

use crate::error::FspnError;
use crate::syntax::{Store, ValueId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Entry point of one subproblem; behaves like a weight-1 sum.
    Root,
    Sum,
    Product,
    /// Evaluates to 1 when the selected value equals the carried value.
    Indicator(ValueId),
    /// The probability that `root` yields `value`; a sink.
    Ref {
        root: NodeId,
        value: ValueId,
    },
}

impl NodeKind {
    fn is_sink(self) -> bool {
        matches!(self, NodeKind::Indicator(_) | NodeKind::Ref { .. })
    }
}

#[derive(Debug)]
pub struct Fspn {
    kinds: Vec<NodeKind>,
    edges: Vec<Vec<(NodeId, f64)>>,
    root_of: Vec<NodeId>,
    global_root: NodeId,
}

impl Fspn {
    /// A graph containing only the global root (node 0).
    pub fn new() -> Fspn {
        Fspn {
            kinds: vec![NodeKind::Root],
            edges: vec![Vec::new()],
            root_of: vec![NodeId(0)],
            global_root: NodeId(0),
        }
    }

    pub fn global_root(&self) -> NodeId {
        self.global_root
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn root_count(&self) -> usize {
        self.kinds
            .iter()
            .filter(|k| matches!(k, NodeKind::Root))
            .count()
    }

    pub fn kind(&self, n: NodeId) -> NodeKind {
        self.kinds[n.index()]
    }

    pub fn children(&self, n: NodeId) -> &[(NodeId, f64)] {
        &self.edges[n.index()]
    }

    /// The root that owns `n`: every node belongs to exactly one
    /// subproblem; roots own themselves.
    pub fn root_of(&self, n: NodeId) -> NodeId {
        self.root_of[n.index()]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, NodeKind)> + '_ {
        self.kinds
            .iter()
            .enumerate()
            .map(|(i, &k)| (NodeId(i as u32), k))
    }

    /// Add a fresh root node (owns itself).
    pub fn add_root(&mut self) -> NodeId {
        let id = NodeId(self.kinds.len() as u32);
        self.kinds.push(NodeKind::Root);
        self.edges.push(Vec::new());
        self.root_of.push(id);
        id
    }

    /// Add a non-root node owned by `owner`'s root.
    pub fn add_node(&mut self, kind: NodeKind, owner: NodeId) -> NodeId {
        debug_assert!(!matches!(kind, NodeKind::Root), "roots use add_root");
        let id = NodeId(self.kinds.len() as u32);
        self.kinds.push(kind);
        self.edges.push(Vec::new());
        let root = self.root_of[owner.index()];
        self.root_of.push(root);
        id
    }

    /// Append an edge. Indicators and references are sinks; weights are
    /// probabilities.
    pub fn add_edge(&mut self, from: NodeId, to: NodeId, w: f64) -> Result<(), FspnError> {
        if self.kinds[from.index()].is_sink() {
            return Err(FspnError::EdgeFromSink { node: from.index() });
        }
        if !(0.0..=1.0).contains(&w) || w.is_nan() {
            return Err(FspnError::BadWeight { weight: w });
        }
        self.edges[from.index()].push((to, w));
        Ok(())
    }

    /// Evaluate node `y` for the indicator assignment that selects
    /// `selected`, reading reference nodes from `ref_values`. Memoized per
    /// call; linear in the reachable subgraph.
    ///
    /// Roots and sums are weighted sums of their children; products are
    /// weighted products; an indicator is 1 exactly when it carries the
    /// selected value.
    pub fn evaluate(
        &self,
        store: &Store,
        y: NodeId,
        selected: ValueId,
        ref_values: &HashMap<(NodeId, ValueId), f64>,
    ) -> Result<f64, FspnError> {
        let mut memo: HashMap<NodeId, f64> = HashMap::new();
        let mut stack: Vec<(NodeId, bool)> = vec![(y, false)];
        while let Some((n, ready)) = stack.pop() {
            if memo.contains_key(&n) {
                continue;
            }
            let kind = self.kinds[n.index()];
            match kind {
                NodeKind::Indicator(v) => {
                    memo.insert(n, if v == selected { 1.0 } else { 0.0 });
                }
                NodeKind::Ref { root, value } => {
                    let got = ref_values.get(&(root, value)).copied().ok_or_else(|| {
                        FspnError::MissingReference {
                            root: root.index(),
                            value: store.value_text(value),
                        }
                    })?;
                    memo.insert(n, got);
                }
                NodeKind::Root | NodeKind::Sum | NodeKind::Product => {
                    if ready {
                        let children = &self.edges[n.index()];
                        let v = if matches!(kind, NodeKind::Product) {
                            children.iter().map(|&(c, w)| w * memo[&c]).product::<f64>()
                        } else {
                            children.iter().map(|&(c, w)| w * memo[&c]).sum::<f64>()
                        };
                        memo.insert(n, v);
                    } else {
                        stack.push((n, true));
                        for &(c, _) in &self.edges[n.index()] {
                            if !memo.contains_key(&c) {
                                stack.push((c, false));
                            }
                        }
                    }
                }
            }
        }
        Ok(memo[&y])
    }

    /// Deterministic DOT rendering of the graph.
    pub fn emit_dot(&self, store: &Store) -> String {
        let mut out = String::from("digraph fspn {\n  rankdir=TB;\n");
        for (id, kind) in self.nodes() {
            let (label, shape) = match kind {
                NodeKind::Root => (format!("root {}", id.0), "doublecircle"),
                NodeKind::Sum => ("+".to_owned(), "circle"),
                NodeKind::Product => ("*".to_owned(), "circle"),
                NodeKind::Indicator(v) => (format!("[{}]", escape(&store.value_text(v))), "box"),
                NodeKind::Ref { root, value } => (
                    format!("P({} = {})", root.0, escape(&store.value_text(value))),
                    "box",
                ),
            };
            out.push_str(&format!(
                "  n{} [label=\"{}\" shape={}];\n",
                id.0, label, shape
            ));
        }
        for (id, _) in self.nodes() {
            for &(child, w) in self.children(id) {
                out.push_str(&format!(
                    "  n{} -> n{} [label=\"{}\"];\n",
                    id.0,
                    child.0,
                    sig6(w)
                ));
            }
        }
        out.push_str("}\n");
        out
    }

    /// Serializable dump of the full graph.
    pub fn dump(&self, store: &Store) -> FspnDump {
        let nodes = self
            .nodes()
            .map(|(id, kind)| {
                let (kind_name, value, root) = match kind {
                    NodeKind::Root => ("root", None, None),
                    NodeKind::Sum => ("sum", None, None),
                    NodeKind::Product => ("product", None, None),
                    NodeKind::Indicator(v) => ("indicator", Some(store.value_text(v)), None),
                    NodeKind::Ref { root, value } => {
                        ("ref", Some(store.value_text(value)), Some(root.0))
                    }
                };
                NodeDump {
                    id: id.0,
                    kind: kind_name,
                    value,
                    root,
                }
            })
            .collect();
        let edges = self
            .nodes()
            .flat_map(|(id, _)| {
                self.children(id).iter().map(move |&(to, w)| EdgeDump {
                    from: id.0,
                    to: to.0,
                    w,
                })
            })
            .collect();
        FspnDump {
            nodes,
            edges,
            global_root: self.global_root.0,
        }
    }
}

impl Default for Fspn {
    fn default() -> Self {
        Fspn::new()
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Weight label: up to six digits after the point, trailing zeros trimmed.
fn sig6(w: f64) -> String {
    let s = format!("{w:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() {
        "0".to_owned()
    } else {
        s.to_owned()
    }
}

#[derive(Debug, Serialize)]
pub struct FspnDump {
    pub nodes: Vec<NodeDump>,
    pub edges: Vec<EdgeDump>,
    #[serde(rename = "globalRoot")]
    pub global_root: u32,
}

#[derive(Debug, Serialize)]
pub struct NodeDump {
    pub id: u32,
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root: Option<u32>,
}

#[derive(Debug, Serialize)]
pub struct EdgeDump {
    pub from: u32,
    pub to: u32,
    pub w: f64,
}

/// A finite distribution over program values. Masses within round-off
/// below zero are clamped at construction; anything more negative is a
/// solver bug and panics in debug builds.
#[derive(Debug, Clone)]
pub struct Distribution {
    pub mass: IndexMap<ValueId, f64>,
    pub total_mass: f64,
}

impl Distribution {
    pub fn from_masses(masses: IndexMap<ValueId, f64>) -> Distribution {
        let mass: IndexMap<ValueId, f64> = masses
            .into_iter()
            .map(|(v, m)| {
                debug_assert!(m >= -1e-12, "mass {m} below clamp threshold");
                (v, m.max(0.0))
            })
            .collect();
        let total_mass = mass.values().sum();
        Distribution { mass, total_mass }
    }

    /// Divide by total mass. `None` when the total is not positive.
    pub fn normalized(&self) -> Option<Distribution> {
        if self.total_mass <= 0.0 {
            return None;
        }
        let mass: IndexMap<ValueId, f64> = self
            .mass
            .iter()
            .map(|(&v, &m)| (v, m / self.total_mass))
            .collect();
        Some(Distribution {
            mass,
            total_mass: 1.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn store_with_bools() -> (Store, ValueId, ValueId) {
        let mut st = Store::new();
        let t = st.bool_value(true);
        let f = st.bool_value(false);
        (st, t, f)
    }

    #[test]
    fn first_node_is_the_global_root() {
        let g = Fspn::new();
        assert_eq!(g.global_root(), NodeId(0));
        assert_eq!(g.node_count(), 1);
        assert!(matches!(g.kind(NodeId(0)), NodeKind::Root));
    }

    #[test]
    fn flip_network_evaluates() {
        let (st, t, f) = store_with_bools();
        let mut g = Fspn::new();
        let root = g.global_root();
        let sum = g.add_node(NodeKind::Sum, root);
        let it = g.add_node(NodeKind::Indicator(t), sum);
        let if_ = g.add_node(NodeKind::Indicator(f), sum);
        g.add_edge(root, sum, 1.0).unwrap();
        g.add_edge(sum, it, 0.6).unwrap();
        g.add_edge(sum, if_, 0.4).unwrap();
        let refs = HashMap::new();
        assert_eq!(g.evaluate(&st, root, t, &refs).unwrap(), 0.6);
        assert_eq!(g.evaluate(&st, root, f, &refs).unwrap(), 0.4);
    }

    #[test]
    fn sinks_reject_out_edges() {
        let (_, t, _) = store_with_bools();
        let mut g = Fspn::new();
        let root = g.global_root();
        let ind = g.add_node(NodeKind::Indicator(t), root);
        let err = g.add_edge(ind, root, 1.0).unwrap_err();
        assert!(matches!(err, FspnError::EdgeFromSink { .. }));
    }

    #[test]
    fn weights_outside_unit_interval_rejected() {
        let mut g = Fspn::new();
        let root = g.global_root();
        let sum = g.add_node(NodeKind::Sum, root);
        assert!(g.add_edge(root, sum, 1.5).is_err());
        assert!(g.add_edge(root, sum, -0.1).is_err());
    }

    #[test]
    fn product_of_reference_and_indicator() {
        let (st, t, _) = store_with_bools();
        let mut g = Fspn::new();
        let root = g.global_root();
        let other = g.add_root();
        let prod = g.add_node(NodeKind::Product, root);
        let rf = g.add_node(
            NodeKind::Ref {
                root: other,
                value: t,
            },
            prod,
        );
        let ind = g.add_node(NodeKind::Indicator(t), prod);
        g.add_edge(root, prod, 1.0).unwrap();
        g.add_edge(prod, rf, 1.0).unwrap();
        g.add_edge(prod, ind, 1.0).unwrap();
        let mut refs = HashMap::new();
        refs.insert((other, t), 0.25);
        assert_eq!(g.evaluate(&st, root, t, &refs).unwrap(), 0.25);
    }

    #[test]
    fn missing_reference_is_reported() {
        let (st, t, _) = store_with_bools();
        let mut g = Fspn::new();
        let root = g.global_root();
        let other = g.add_root();
        let rf = g.add_node(
            NodeKind::Ref {
                root: other,
                value: t,
            },
            root,
        );
        g.add_edge(root, rf, 1.0).unwrap();
        let err = g.evaluate(&st, root, t, &HashMap::new()).unwrap_err();
        assert!(matches!(err, FspnError::MissingReference { .. }));
    }

    #[test]
    fn dot_is_deterministic() {
        let (st, t, f) = store_with_bools();
        let build = || {
            let mut g = Fspn::new();
            let root = g.global_root();
            let sum = g.add_node(NodeKind::Sum, root);
            let it = g.add_node(NodeKind::Indicator(t), sum);
            let if_ = g.add_node(NodeKind::Indicator(f), sum);
            g.add_edge(root, sum, 1.0).unwrap();
            g.add_edge(sum, it, 0.6).unwrap();
            g.add_edge(sum, if_, 0.4).unwrap();
            g
        };
        let a = build().emit_dot(&st);
        let b = build().emit_dot(&st);
        assert_eq!(a, b);
        assert!(a.contains("\"0.6\""));
        assert!(a.contains("\"0.4\""));
        assert_eq!(a.matches("->").count(), 3);
    }

    #[test]
    fn dump_shape() {
        let (st, t, _) = store_with_bools();
        let mut g = Fspn::new();
        let root = g.global_root();
        let ind = g.add_node(NodeKind::Indicator(t), root);
        g.add_edge(root, ind, 1.0).unwrap();
        let dump = g.dump(&st);
        let json = serde_json::to_value(&dump).unwrap();
        assert_eq!(json["globalRoot"], 0);
        assert_eq!(json["nodes"][1]["kind"], "indicator");
        assert_eq!(json["nodes"][1]["value"], "#t");
        assert_eq!(json["edges"][0]["w"], 1.0);
    }

    #[test]
    fn distribution_clamps_round_off() {
        let mut st = Store::new();
        let t = st.bool_value(true);
        let f = st.bool_value(false);
        let mut m = IndexMap::new();
        m.insert(t, 1.0);
        m.insert(f, -1e-13);
        let d = Distribution::from_masses(m);
        assert_eq!(d.mass[&f], 0.0);
        assert!((d.total_mass - 1.0).abs() < 1e-9);
    }

    // random acyclic graphs: memoized evaluation equals naive recursion,
    // and evaluation is monotone in the reference values
    fn naive_eval(
        g: &Fspn,
        n: NodeId,
        selected: ValueId,
        refs: &HashMap<(NodeId, ValueId), f64>,
    ) -> f64 {
        match g.kind(n) {
            NodeKind::Indicator(v) => {
                if v == selected {
                    1.0
                } else {
                    0.0
                }
            }
            NodeKind::Ref { root, value } => refs[&(root, value)],
            NodeKind::Product => g
                .children(n)
                .iter()
                .map(|&(c, w)| w * naive_eval(g, c, selected, refs))
                .product(),
            _ => g
                .children(n)
                .iter()
                .map(|&(c, w)| w * naive_eval(g, c, selected, refs))
                .sum(),
        }
    }

    proptest! {
        #[test]
        fn memoized_matches_naive_and_is_monotone(
            kinds in proptest::collection::vec(0u8..4, 1..24),
            edge_picks in proptest::collection::vec((0usize..24, 0usize..24, 0.0f64..=1.0), 0..48),
            ref_value in 0.0f64..=1.0,
            bump in 0.0f64..=0.5,
        ) {
            let mut st = Store::new();
            let t = st.bool_value(true);
            let mut g = Fspn::new();
            let aux = g.add_root();
            let base = g.node_count();
            for &k in &kinds {
                let kind = match k {
                    0 => NodeKind::Sum,
                    1 => NodeKind::Product,
                    2 => NodeKind::Indicator(t),
                    _ => NodeKind::Ref { root: aux, value: t },
                };
                g.add_node(kind, g.global_root());
            }
            let n = g.node_count();
            // edges only from lower to higher id: acyclic by construction
            for &(a, b, w) in &edge_picks {
                let from = NodeId((base + a.min(kinds.len() - 1)) as u32);
                let to = NodeId((base + b.min(kinds.len() - 1)) as u32);
                if from >= to || to.index() >= n {
                    continue;
                }
                let _ = g.add_edge(from, to, w);
            }
            // attach everything under the global root so it is reachable
            for i in base..n {
                let _ = g.add_edge(g.global_root(), NodeId(i as u32), 1.0);
            }
            let mut refs = HashMap::new();
            refs.insert((aux, t), ref_value);
            let fast = g.evaluate(&st, g.global_root(), t, &refs).unwrap();
            let slow = naive_eval(&g, g.global_root(), t, &refs);
            prop_assert!((fast - slow).abs() <= 1e-9 * (1.0 + slow.abs()));
            // monotone in the reference value
            let mut refs_up = HashMap::new();
            refs_up.insert((aux, t), (ref_value + bump).min(1.0));
            let up = g.evaluate(&st, g.global_root(), t, &refs_up).unwrap();
            prop_assert!(up >= fast - 1e-12);
        }
    }
}
