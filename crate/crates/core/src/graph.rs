//! Directed acyclic graphs with decision and utility roles.
//!
//! [`Dag`] is a plain labeled DAG carrying the reachability queries
//! (descendants, ancestors, d-separation). [`DagGraph`] wraps a `Dag` with
//! exactly one decision node and one utility node and adds the operations
//! specific to influence diagrams: replacing the decision's parents and the
//! graphical value-of-information criterion.
//!
//! Graphs are immutable after construction; every transformation returns a
//! new value.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interned node name. Ordering is lexicographic on the name.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(Arc<str>);

impl NodeId {
    pub fn new(name: &str) -> Self {
        NodeId(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId::new(s)
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(Arc::from(s))
    }
}

impl std::borrow::Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

pub type NodeSet = BTreeSet<NodeId>;

/// Builds a [`NodeSet`] from anything string-like.
pub fn node_set<I, S>(items: I) -> NodeSet
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    items.into_iter().map(|s| NodeId::new(s.as_ref())).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Feature,
    Decision,
    Utility,
}

/// A labeled directed acyclic graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dag {
    names: Vec<NodeId>,
    index: BTreeMap<NodeId, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl Dag {
    /// Builds a DAG. Duplicate edges are collapsed; self-loops and cycles are
    /// rejected, as are edges naming undeclared nodes.
    pub fn new<N, E>(nodes: N, edges: E) -> Result<Self>
    where
        N: IntoIterator<Item = NodeId>,
        E: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let names: Vec<NodeId> = nodes.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let index: BTreeMap<NodeId, usize> = names.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect();
        let mut parents = vec![BTreeSet::new(); names.len()];
        let mut children = vec![BTreeSet::new(); names.len()];
        for (from, to) in edges {
            let f = *index.get(&from).ok_or_else(|| Error::UnknownNode(from.to_string()))?;
            let t = *index.get(&to).ok_or_else(|| Error::UnknownNode(to.to_string()))?;
            if f == t {
                return Err(Error::Cyclic(from.to_string()));
            }
            parents[t].insert(f);
            children[f].insert(t);
        }
        let dag = Dag {
            names,
            index,
            parents: parents.into_iter().map(|s| s.into_iter().collect()).collect(),
            children: children.into_iter().map(|s| s.into_iter().collect()).collect(),
        };
        dag.check_acyclic()?;
        Ok(dag)
    }

    fn check_acyclic(&self) -> Result<()> {
        let order = self.topological_indices();
        if order.len() == self.names.len() {
            return Ok(());
        }
        let placed: BTreeSet<usize> = order.into_iter().collect();
        let stuck = (0..self.names.len()).find(|i| !placed.contains(i)).unwrap_or(0);
        Err(Error::Cyclic(self.names[stuck].to_string()))
    }

    // Kahn's algorithm with the smallest available index first, so the order
    // is lexicographic among nodes that are free at the same time.
    fn topological_indices(&self) -> Vec<usize> {
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..self.names.len()).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(self.names.len());
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &c in &self.children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        order
    }

    pub fn topological_order(&self) -> Vec<NodeId> {
        self.topological_indices().into_iter().map(|i| self.names[i].clone()).collect()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.names.iter()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, v: &str) -> bool {
        self.index.contains_key(v)
    }

    /// All edges, sorted by (from, to).
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for (f, cs) in self.children.iter().enumerate() {
            for &t in cs {
                out.push((self.names[f].clone(), self.names[t].clone()));
            }
        }
        out
    }

    pub(crate) fn idx(&self, v: &str) -> Result<usize> {
        self.index.get(v).copied().ok_or_else(|| Error::UnknownNode(v.to_string()))
    }

    fn to_set(&self, idx: impl IntoIterator<Item = usize>) -> NodeSet {
        idx.into_iter().map(|i| self.names[i].clone()).collect()
    }

    pub fn parents(&self, v: &str) -> Result<NodeSet> {
        let i = self.idx(v)?;
        Ok(self.to_set(self.parents[i].iter().copied()))
    }

    pub fn children(&self, v: &str) -> Result<NodeSet> {
        let i = self.idx(v)?;
        Ok(self.to_set(self.children[i].iter().copied()))
    }

    fn reach(&self, start: usize, next: &[Vec<usize>]) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = next[start].clone();
        while let Some(v) = stack.pop() {
            if seen.insert(v) {
                stack.extend(next[v].iter().copied());
            }
        }
        seen
    }

    /// Nodes reachable from `v` along directed paths, excluding `v`.
    pub fn descendants(&self, v: &str) -> Result<NodeSet> {
        let i = self.idx(v)?;
        Ok(self.to_set(self.reach(i, &self.children)))
    }

    /// Nodes with a directed path into `v`, excluding `v`.
    pub fn ancestors(&self, v: &str) -> Result<NodeSet> {
        let i = self.idx(v)?;
        Ok(self.to_set(self.reach(i, &self.parents)))
    }

    fn indices(&self, set: &NodeSet) -> Result<BTreeSet<usize>> {
        set.iter().map(|v| self.idx(v.as_str())).collect()
    }

    /// d-separation of `a` and `b` given `z`, by the reachable-trail
    /// (Bayes-ball) algorithm.
    ///
    /// The three sets must be pairwise disjoint.
    pub fn d_separated(&self, a: &NodeSet, b: &NodeSet, z: &NodeSet) -> Result<bool> {
        let ai = self.indices(a)?;
        let bi = self.indices(b)?;
        let zi = self.indices(z)?;
        for (x, y) in [(&a, &b), (&a, &z), (&b, &z)] {
            if let Some(v) = x.intersection(y).next() {
                return Err(Error::OverlappingSets(v.to_string()));
            }
        }

        // Z together with its ancestors: a collider is open iff it is in here.
        let mut z_anc = zi.clone();
        for &v in &zi {
            z_anc.extend(self.reach(v, &self.parents));
        }

        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
        enum Dir {
            // arrived from a child
            Up,
            // arrived from a parent
            Down,
        }

        let mut visited: BTreeSet<(usize, Dir)> = BTreeSet::new();
        let mut queue: VecDeque<(usize, Dir)> = ai.iter().map(|&v| (v, Dir::Up)).collect();
        while let Some((v, dir)) = queue.pop_front() {
            if !visited.insert((v, dir)) {
                continue;
            }
            let observed = zi.contains(&v);
            if !observed && bi.contains(&v) {
                return Ok(false);
            }
            match dir {
                Dir::Up if !observed => {
                    queue.extend(self.parents[v].iter().map(|&p| (p, Dir::Up)));
                    queue.extend(self.children[v].iter().map(|&c| (c, Dir::Down)));
                }
                Dir::Up => {}
                Dir::Down => {
                    if !observed {
                        queue.extend(self.children[v].iter().map(|&c| (c, Dir::Down)));
                    }
                    if z_anc.contains(&v) {
                        queue.extend(self.parents[v].iter().map(|&p| (p, Dir::Up)));
                    }
                }
            }
        }
        Ok(true)
    }
}

/// An influence-diagram graph: a DAG over features, one decision node and
/// one utility node. The utility node has no children and is a descendant of
/// the decision.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DagGraph {
    dag: Dag,
    roles: BTreeMap<NodeId, Role>,
    decision: NodeId,
    utility: NodeId,
}

impl Deref for DagGraph {
    type Target = Dag;

    fn deref(&self) -> &Dag {
        &self.dag
    }
}

impl DagGraph {
    pub fn new<N, E>(nodes: N, edges: E) -> Result<Self>
    where
        N: IntoIterator<Item = (NodeId, Role)>,
        E: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let roles: BTreeMap<NodeId, Role> = nodes.into_iter().collect();
        let pick = |role: Role| -> Result<NodeId> {
            let mut found = roles.iter().filter(|(_, r)| **r == role).map(|(n, _)| n.clone());
            let first = found.next().ok_or_else(|| Error::InvalidGraph(format!("no node with role {role:?}")))?;
            if let Some(second) = found.next() {
                return Err(Error::InvalidGraph(format!("more than one {role:?} node: `{first}` and `{second}`")));
            }
            Ok(first)
        };
        let decision = pick(Role::Decision)?;
        let utility = pick(Role::Utility)?;
        let dag = Dag::new(roles.keys().cloned(), edges)?;
        if !dag.children(utility.as_str())?.is_empty() {
            return Err(Error::InvalidGraph(format!("utility `{utility}` has children")));
        }
        if !dag.descendants(decision.as_str())?.contains(&utility) {
            return Err(Error::InvalidGraph(format!(
                "utility `{utility}` is not a descendant of decision `{decision}`"
            )));
        }
        Ok(DagGraph { dag, roles, decision, utility })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn decision(&self) -> &NodeId {
        &self.decision
    }

    pub fn utility(&self) -> &NodeId {
        &self.utility
    }

    pub fn role(&self, v: &str) -> Result<Role> {
        self.roles.get(v).copied().ok_or_else(|| Error::UnknownNode(v.to_string()))
    }

    /// Descendants of the decision node (always contains the utility).
    pub fn decision_descendants(&self) -> NodeSet {
        self.dag.descendants(self.decision.as_str()).expect("decision node is part of the graph")
    }

    /// Returns a copy of the graph whose decision node has exactly the
    /// parents `m`. All other edges are kept.
    pub fn surgery_set_decision_parents(&self, m: &NodeSet) -> Result<DagGraph> {
        let de = self.decision_descendants();
        for v in m {
            self.dag.idx(v.as_str())?;
            if *v == self.decision || de.contains(v) {
                return Err(Error::InvalidSurgery(format!("`{v}` is the decision or one of its descendants")));
            }
        }
        let edges = self
            .dag
            .edges()
            .into_iter()
            .filter(|(_, to)| *to != self.decision)
            .chain(m.iter().map(|v| (v.clone(), self.decision.clone())));
        DagGraph::new(self.roles.iter().map(|(n, r)| (n.clone(), *r)), edges)
    }

    /// Graphical criterion: the graph admits value of information for `s`
    /// relative to `m` iff `s` and the utility are d-connected given `m` once
    /// the decision's parents are replaced by `m`.
    pub fn admits_voi(&self, s: &NodeId, m: &NodeSet) -> Result<bool> {
        self.dag.idx(s.as_str())?;
        let de = self.decision_descendants();
        if *s == self.decision || de.contains(s) {
            return Err(Error::Validation(format!(
                "protected attribute `{s}` must not be the decision or a descendant of it"
            )));
        }
        if m.contains(s) {
            return Err(Error::OverlappingSets(s.to_string()));
        }
        let surged = self.surgery_set_decision_parents(m)?;
        let separated = surged.d_separated(&NodeSet::from([s.clone()]), &NodeSet::from([self.utility.clone()]), m)?;
        Ok(!separated)
    }

    /// Graphviz rendering. Edges into the decision node (the usable decision
    /// inputs) are drawn dashed.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph influence_diagram {\n  rankdir=LR;\n");
        for v in self.dag.nodes() {
            let style = match self.roles[v] {
                Role::Feature => "shape=box",
                Role::Decision => "shape=box, style=filled, fillcolor=cyan",
                Role::Utility => "shape=box, style=filled, fillcolor=yellow",
            };
            out.push_str(&format!("  \"{v}\" [{style}];\n"));
        }
        for (from, to) in self.dag.edges() {
            if to == self.decision {
                out.push_str(&format!("  \"{from}\" -> \"{to}\" [style=dashed, color=darkred];\n"));
            } else {
                out.push_str(&format!("  \"{from}\" -> \"{to}\";\n"));
            }
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(s: &str) -> NodeId {
        NodeId::new(s)
    }

    fn dag(nodes: &[&str], edges: &[(&str, &str)]) -> Dag {
        Dag::new(nodes.iter().map(|s| n(s)), edges.iter().map(|(a, b)| (n(a), n(b)))).unwrap()
    }

    fn influence(features: &[&str], edges: &[(&str, &str)]) -> DagGraph {
        let nodes =
            features.iter().map(|s| (n(s), Role::Feature)).chain([(n("D"), Role::Decision), (n("U"), Role::Utility)]);
        DagGraph::new(nodes, edges.iter().map(|(a, b)| (n(a), n(b)))).unwrap()
    }

    fn fig1() -> DagGraph {
        influence(
            &["H", "Qual", "A", "P", "Q", "W"],
            &[
                ("H", "Qual"),
                ("H", "A"),
                ("H", "P"),
                ("Qual", "A"),
                ("P", "A"),
                ("A", "D"),
                ("Qual", "Q"),
                ("P", "W"),
                ("Q", "U"),
                ("W", "U"),
                ("D", "U"),
            ],
        )
    }

    fn fig3() -> DagGraph {
        influence(
            &["Effort", "Grade", "S"],
            &[("Effort", "Grade"), ("S", "Grade"), ("Grade", "D"), ("S", "D"), ("Effort", "U"), ("D", "U")],
        )
    }

    #[test]
    fn descendants_of_chain() {
        let g = dag(&["A", "B", "C"], &[("A", "B"), ("B", "C")]);
        assert_eq!(g.descendants("A").unwrap(), node_set(["B", "C"]));
        assert!(g.descendants("C").unwrap().is_empty());
        assert!(matches!(g.descendants("Z"), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn utility_has_no_descendants() {
        assert!(fig1().descendants("U").unwrap().is_empty());
        assert_eq!(fig1().descendants("D").unwrap(), node_set(["U"]));
    }

    #[test]
    fn rejects_cycles_and_bad_roles() {
        let err = Dag::new(node_set(["A", "B"]), [(n("A"), n("B")), (n("B"), n("A"))]);
        assert!(matches!(err, Err(Error::Cyclic(_))));

        // U with a child
        let nodes = [(n("X"), Role::Feature), (n("D"), Role::Decision), (n("U"), Role::Utility)];
        let err = DagGraph::new(nodes.clone(), [(n("D"), n("U")), (n("U"), n("X"))]);
        assert!(matches!(err, Err(Error::InvalidGraph(_))));

        // U not downstream of D
        let err = DagGraph::new(nodes.clone(), [(n("X"), n("U"))]);
        assert!(matches!(err, Err(Error::InvalidGraph(_))));

        let two_decisions = [(n("X"), Role::Decision), (n("D"), Role::Decision), (n("U"), Role::Utility)];
        let err = DagGraph::new(two_decisions, [(n("D"), n("U"))]);
        assert!(matches!(err, Err(Error::InvalidGraph(_))));
    }

    #[test]
    fn chain_and_collider_separation() {
        let chain = dag(&["A", "B", "C"], &[("A", "B"), ("B", "C")]);
        assert!(chain.d_separated(&node_set(["A"]), &node_set(["C"]), &node_set(["B"])).unwrap());
        assert!(!chain.d_separated(&node_set(["A"]), &node_set(["C"]), &NodeSet::new()).unwrap());

        let collider = dag(&["A", "B", "C"], &[("A", "C"), ("B", "C")]);
        assert!(collider.d_separated(&node_set(["A"]), &node_set(["B"]), &NodeSet::new()).unwrap());
        assert!(!collider.d_separated(&node_set(["A"]), &node_set(["B"]), &node_set(["C"])).unwrap());
    }

    #[test]
    fn conditioning_on_collider_descendant_opens_path() {
        let g = dag(&["A", "B", "C", "E"], &[("A", "C"), ("B", "C"), ("C", "E")]);
        assert!(!g.d_separated(&node_set(["A"]), &node_set(["B"]), &node_set(["E"])).unwrap());
    }

    #[test]
    fn overlapping_sets_rejected() {
        let g = dag(&["A", "B"], &[("A", "B")]);
        let r = g.d_separated(&node_set(["A"]), &node_set(["A", "B"]), &NodeSet::new());
        assert!(matches!(r, Err(Error::OverlappingSets(_))));
    }

    #[test]
    fn surgery_replaces_decision_parents() {
        let g = fig1();
        assert_eq!(g.surgery_set_decision_parents(&node_set(["A"])).unwrap(), g);

        let s = g.surgery_set_decision_parents(&node_set(["Q"])).unwrap();
        assert_eq!(s.parents("D").unwrap(), node_set(["Q"]));
        let before: BTreeSet<_> = g.edges().into_iter().collect();
        let after: BTreeSet<_> = s.edges().into_iter().collect();
        let removed: Vec<_> = before.difference(&after).cloned().collect();
        let added: Vec<_> = after.difference(&before).cloned().collect();
        assert_eq!(removed, vec![(n("A"), n("D"))]);
        assert_eq!(added, vec![(n("Q"), n("D"))]);

        let s3 = fig3().surgery_set_decision_parents(&node_set(["Effort"])).unwrap();
        assert_eq!(s3.parents("D").unwrap(), node_set(["Effort"]));
        assert!(!s3.edges().contains(&(n("Grade"), n("D"))));
        assert!(!s3.edges().contains(&(n("S"), n("D"))));

        assert!(matches!(g.surgery_set_decision_parents(&node_set(["U"])), Err(Error::InvalidSurgery(_))));
    }

    #[test]
    fn figure_claims() {
        let g1 = fig1();
        assert!(g1.admits_voi(&n("P"), &node_set(["A"])).unwrap());
        assert!(g1.admits_voi(&n("P"), &node_set(["Q"])).unwrap());

        let g3 = fig3();
        let surged = g3.surgery_set_decision_parents(&node_set(["Effort"])).unwrap();
        assert!(surged.d_separated(&node_set(["S"]), &node_set(["U"]), &node_set(["Effort"])).unwrap());
        assert!(!g3.admits_voi(&n("S"), &node_set(["Effort"])).unwrap());
        assert!(g3.admits_voi(&n("S"), &node_set(["Grade"])).unwrap());
    }

    #[test]
    fn admits_voi_preconditions() {
        let g = fig3();
        assert!(g.admits_voi(&n("S"), &node_set(["S"])).is_err());
        assert!(g.admits_voi(&n("U"), &NodeSet::new()).is_err());
    }

    #[test]
    fn dot_marks_decision_inputs() {
        let dot = fig3().to_dot();
        assert!(dot.contains("\"Grade\" -> \"D\" [style=dashed, color=darkred];"));
        assert!(dot.contains("\"Effort\" -> \"U\";"));
    }
}
