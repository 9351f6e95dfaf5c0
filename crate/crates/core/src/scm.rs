//! Structural causal models with one decision and one utility node.
//!
//! Feature nodes carry a [`Mechanism`]; the decision node takes values in a
//! finite domain and is set by a policy; the utility node is a deterministic
//! function of its parents given by a [`UtilityMechanism`].

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::expr::{parse_expression, Expr};
use crate::graph::{Dag, DagGraph, NodeId, NodeSet, Role};
use crate::rng::RowRng;

/// Distribution of an exogenous noise term.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseSpec {
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Uniform over a finite set of values.
    Uniform {
        values: Vec<f64>,
    },
    /// Takes the value 1 with probability `p`, else 0.
    Bernoulli {
        p: f64,
    },
    Categorical {
        values: Vec<f64>,
        probs: Vec<f64>,
    },
}

impl NoiseSpec {
    pub fn standard_normal() -> Self {
        NoiseSpec::Normal { mean: 0.0, sd: 1.0 }
    }

    pub fn normal(mean: f64, sd: f64) -> Self {
        NoiseSpec::Normal { mean, sd }
    }

    pub fn uniform(values: &[f64]) -> Self {
        NoiseSpec::Uniform { values: values.to_vec() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        match self {
            NoiseSpec::Normal { mean, sd } => {
                if !mean.is_finite() || !sd.is_finite() || *sd < 0.0 {
                    return bad(format!("normal noise needs finite mean and sd >= 0, got ({mean}, {sd})"));
                }
            }
            NoiseSpec::Uniform { values } => {
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return bad("uniform noise needs a non-empty set of finite values".into());
                }
            }
            NoiseSpec::Bernoulli { p } => {
                if !(0.0..=1.0).contains(p) {
                    return bad(format!("Bernoulli p must lie in [0, 1], got {p}"));
                }
            }
            NoiseSpec::Categorical { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return bad("categorical noise needs matching non-empty values and probs".into());
                }
                if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || values.iter().any(|v| !v.is_finite()) {
                    return bad("categorical probabilities must lie in [0, 1]".into());
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("categorical probabilities sum to {total}"));
                }
            }
        }
        Ok(())
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self, NoiseSpec::Normal { .. })
    }

    /// `(value, probability)` pairs of a discrete distribution, with
    /// zero-probability values dropped. Empty for normal noise.
    pub fn support(&self) -> Vec<(f64, f64)> {
        match self {
            NoiseSpec::Normal { .. } => Vec::new(),
            NoiseSpec::Uniform { values } => {
                let p = 1.0 / values.len() as f64;
                values.iter().map(|v| (*v, p)).collect()
            }
            NoiseSpec::Bernoulli { p } => [(0.0, 1.0 - p), (1.0, *p)].into_iter().filter(|(_, q)| *q > 0.0).collect(),
            NoiseSpec::Categorical { values, probs } => {
                values.iter().zip(probs).filter(|(_, q)| **q > 0.0).map(|(v, q)| (*v, *q)).collect()
            }
        }
    }

    pub fn sample(&self, rng: &mut RowRng) -> f64 {
        match self {
            NoiseSpec::Normal { mean, sd } => mean + sd * rng.normal(),
            NoiseSpec::Uniform { values } => values[rng.index(values.len())],
            NoiseSpec::Bernoulli { p } => {
                if rng.uniform() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseSpec::Categorical { values, probs } => {
                let u = rng.uniform();
                let mut acc = 0.0;
                for (v, q) in values.iter().zip(probs) {
                    acc += q;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("validated non-empty")
            }
        }
    }
}

/// Name of the noise term of single-noise mechanisms.
pub const EPS: &str = "eps";

#[derive(Clone, Debug, PartialEq)]
pub enum Mechanism {
    /// `intercept + Σ weight·parent + noise`.
    LinearGaussian { weights: BTreeMap<NodeId, f64>, intercept: f64, noise: NoiseSpec },
    /// The node equals its noise term.
    DiscreteNoise { noise: NoiseSpec },
    /// An expression over parents and named noise symbols.
    Expression { expr: Expr, noises: BTreeMap<String, NoiseSpec> },
    /// `1(source > q̂)` with `q̂` the empirical quantile (type 7) of the
    /// realized `source` column.
    QuantileIndicator { source: NodeId, quantile: f64 },
}

impl Mechanism {
    /// Parent nodes (excluding noise symbols).
    pub fn parents(&self) -> NodeSet {
        match self {
            Mechanism::LinearGaussian { weights, .. } => weights.keys().cloned().collect(),
            Mechanism::DiscreteNoise { .. } => NodeSet::new(),
            Mechanism::Expression { expr, noises } => {
                expr.free_symbols().into_iter().filter(|s| !noises.contains_key(s)).map(NodeId::from).collect()
            }
            Mechanism::QuantileIndicator { source, .. } => NodeSet::from([source.clone()]),
        }
    }

    /// Noise symbols with their distributions.
    pub fn noises(&self) -> Vec<(String, &NoiseSpec)> {
        match self {
            Mechanism::LinearGaussian { noise, .. } | Mechanism::DiscreteNoise { noise } => {
                vec![(EPS.to_string(), noise)]
            }
            Mechanism::Expression { noises, .. } => noises.iter().map(|(k, v)| (k.clone(), v)).collect(),
            Mechanism::QuantileIndicator { .. } => Vec::new(),
        }
    }
}

/// The utility's structural assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct UtilityMechanism {
    expr: Expr,
}

impl UtilityMechanism {
    pub fn parse(text: &str, constants: &BTreeMap<String, f64>) -> Result<Self> {
        Ok(UtilityMechanism { expr: parse_expression(text)?.bind(constants) })
    }

    pub fn from_expr(expr: Expr) -> Self {
        UtilityMechanism { expr }
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    /// Symbols appearing in the expression (the utility's parents).
    pub fn parents(&self) -> NodeSet {
        self.expr.free_symbols().into_iter().map(NodeId::from).collect()
    }

    /// The expression with the decision fixed to `d`, simplified.
    pub fn at_decision(&self, decision: &str, d: f64) -> Expr {
        self.expr.map_vars(&|v| (v == decision).then_some(Expr::Num(d))).simplify()
    }
}

/// A validated structural causal model.
#[derive(Clone, Debug)]
pub struct Scm {
    mechanisms: BTreeMap<NodeId, Mechanism>,
    decision: NodeId,
    utility: NodeId,
    domain: Vec<f64>,
    decision_inputs: NodeSet,
    utility_inputs: NodeSet,
    protected: NodeId,
    constants: BTreeMap<String, f64>,
    /// features and decision in topological order
    order: Vec<NodeId>,
    decision_descendants: NodeSet,
}

#[derive(Clone, Debug, Default)]
pub struct ScmBuilder {
    nodes: Vec<(NodeId, Mechanism)>,
    constants: BTreeMap<String, f64>,
    domain: Vec<f64>,
    decision_inputs: NodeSet,
    utility_inputs: Option<NodeSet>,
    protected: Option<NodeId>,
    decision: Option<NodeId>,
    utility: Option<NodeId>,
    error: Option<String>,
}

impl ScmBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds a named constant for expressions added afterwards.
    pub fn constant(mut self, name: &str, value: f64) -> Self {
        self.constants.insert(name.to_string(), value);
        self
    }

    pub fn constants(&self) -> &BTreeMap<String, f64> {
        &self.constants
    }

    pub fn mechanism(mut self, name: &str, mechanism: Mechanism) -> Self {
        self.nodes.push((NodeId::new(name), mechanism));
        self
    }

    pub fn linear(self, name: &str, weights: &[(&str, f64)], intercept: f64, noise: NoiseSpec) -> Self {
        let weights = weights.iter().map(|(p, w)| (NodeId::new(p), *w)).collect();
        self.mechanism(name, Mechanism::LinearGaussian { weights, intercept, noise })
    }

    pub fn discrete(self, name: &str, noise: NoiseSpec) -> Self {
        self.mechanism(name, Mechanism::DiscreteNoise { noise })
    }

    /// Adds an expression node; parse errors surface from [`build`](Self::build).
    pub fn expression(mut self, name: &str, text: &str, noises: &[(&str, NoiseSpec)]) -> Self {
        match parse_expression(text) {
            Ok(expr) => {
                let expr = expr.bind(&self.constants);
                let noises = noises.iter().map(|(s, n)| (s.to_string(), n.clone())).collect();
                self.mechanism(name, Mechanism::Expression { expr, noises })
            }
            Err(e) => {
                self.error.get_or_insert(format!("node `{name}`: {e}"));
                self
            }
        }
    }

    pub fn quantile_indicator(self, name: &str, source: &str, quantile: f64) -> Self {
        self.mechanism(name, Mechanism::QuantileIndicator { source: NodeId::new(source), quantile })
    }

    pub fn names(mut self, decision: &str, utility: &str) -> Self {
        self.decision = Some(NodeId::new(decision));
        self.utility = Some(NodeId::new(utility));
        self
    }

    pub fn decision(mut self, domain: &[f64], inputs: &[&str]) -> Self {
        self.domain = domain.to_vec();
        self.decision_inputs = inputs.iter().map(|s| NodeId::new(s)).collect();
        self
    }

    pub fn utility_inputs(mut self, inputs: &[&str]) -> Self {
        self.utility_inputs = Some(inputs.iter().map(|s| NodeId::new(s)).collect());
        self
    }

    pub fn protected(mut self, s: &str) -> Self {
        self.protected = Some(NodeId::new(s));
        self
    }

    pub fn build(self) -> Result<Scm> {
        if let Some(e) = self.error {
            return Err(Error::Validation(e));
        }
        let decision = self.decision.unwrap_or_else(|| NodeId::new("D"));
        let utility = self.utility.unwrap_or_else(|| NodeId::new("U"));
        if decision == utility {
            return Err(Error::Validation("decision and utility need distinct names".into()));
        }
        let mut mechanisms = BTreeMap::new();
        for (name, mech) in self.nodes {
            if name == decision || name == utility {
                return Err(Error::Validation(format!("`{name}` is reserved for the decision or utility")));
            }
            if mechanisms.insert(name.clone(), mech).is_some() {
                return Err(Error::Validation(format!("duplicate node `{name}`")));
            }
        }
        let known = |v: &NodeId| mechanisms.contains_key(v) || *v == decision;
        let mut edges = Vec::new();
        for (name, mech) in &mechanisms {
            for (sym, noise) in mech.noises() {
                noise.validate().map_err(|e| Error::Validation(format!("node `{name}`, noise `{sym}`: {e}")))?;
                if mechanisms.contains_key(sym.as_str()) || sym == decision.as_str() {
                    return Err(Error::Validation(format!("node `{name}`: noise symbol `{sym}` shadows a node")));
                }
            }
            if let Mechanism::QuantileIndicator { quantile, .. } = mech {
                if !(0.0..=1.0).contains(quantile) {
                    return Err(Error::Validation(format!("node `{name}`: quantile {quantile} outside [0, 1]")));
                }
            }
            if let Mechanism::LinearGaussian { weights, intercept, .. } = mech {
                if !intercept.is_finite() || weights.values().any(|w| !w.is_finite()) {
                    return Err(Error::Validation(format!("node `{name}`: non-finite coefficient")));
                }
            }
            for p in mech.parents() {
                if !known(&p) {
                    return Err(Error::Validation(format!("node `{name}` references unknown symbol `{p}`")));
                }
                edges.push((p, name.clone()));
            }
        }
        if self.domain.is_empty() {
            return Err(Error::Validation("decision domain is empty".into()));
        }
        let distinct: BTreeSet<u64> = self.domain.iter().map(|d| d.to_bits()).collect();
        if distinct.len() != self.domain.len() || self.domain.iter().any(|d| !d.is_finite()) {
            return Err(Error::Validation("decision domain must hold distinct finite values".into()));
        }
        for v in &self.decision_inputs {
            if !mechanisms.contains_key(v) {
                return Err(Error::Validation(format!("decision input `{v}` is not a feature")));
            }
            edges.push((v.clone(), decision.clone()));
        }
        let nodes: Vec<NodeId> = mechanisms.keys().cloned().chain([decision.clone()]).collect();
        let dag = Dag::new(nodes, edges)?;
        let decision_descendants = dag.descendants(decision.as_str())?;

        let utility_inputs = match self.utility_inputs {
            Some(set) => set,
            None => mechanisms.keys().cloned().chain([decision.clone()]).collect(),
        };
        for v in &utility_inputs {
            if !known(v) {
                return Err(Error::Validation(format!("utility input `{v}` is not a node")));
            }
        }
        if !self.decision_inputs.is_subset(&utility_inputs) {
            return Err(Error::Validation("usable decision inputs must be usable utility inputs".into()));
        }
        for v in &self.decision_inputs {
            if decision_descendants.contains(v) {
                return Err(Error::Validation(format!("decision input `{v}` is a descendant of the decision")));
            }
        }
        let protected = self.protected.ok_or_else(|| Error::Validation("no protected attribute".into()))?;
        if !mechanisms.contains_key(&protected) {
            return Err(Error::Validation(format!("protected attribute `{protected}` is not a feature")));
        }
        if decision_descendants.contains(&protected) {
            return Err(Error::Validation(format!(
                "protected attribute `{protected}` is a descendant of the decision"
            )));
        }
        let (after, mut order): (Vec<NodeId>, Vec<NodeId>) = dag
            .topological_order()
            .into_iter()
            .filter(|v| *v != decision)
            .partition(|v| decision_descendants.contains(v));
        order.push(decision.clone());
        order.extend(after);
        Ok(Scm {
            order,
            mechanisms,
            decision,
            utility,
            domain: self.domain,
            decision_inputs: self.decision_inputs,
            utility_inputs,
            protected,
            constants: self.constants,
            decision_descendants,
        })
    }
}

impl Scm {
    pub fn builder() -> ScmBuilder {
        ScmBuilder::new()
    }

    pub fn decision(&self) -> &NodeId {
        &self.decision
    }

    pub fn utility(&self) -> &NodeId {
        &self.utility
    }

    pub fn domain(&self) -> &[f64] {
        &self.domain
    }

    pub fn decision_inputs(&self) -> &NodeSet {
        &self.decision_inputs
    }

    pub fn utility_inputs(&self) -> &NodeSet {
        &self.utility_inputs
    }

    pub fn protected(&self) -> &NodeId {
        &self.protected
    }

    pub fn constants(&self) -> &BTreeMap<String, f64> {
        &self.constants
    }

    pub fn mechanisms(&self) -> &BTreeMap<NodeId, Mechanism> {
        &self.mechanisms
    }

    pub fn mechanism(&self, v: &str) -> Result<&Mechanism> {
        self.mechanisms.get(v).ok_or_else(|| Error::UnknownNode(v.to_string()))
    }

    pub fn features(&self) -> impl Iterator<Item = &NodeId> {
        self.mechanisms.keys()
    }

    pub fn is_feature(&self, v: &str) -> bool {
        self.mechanisms.contains_key(v)
    }

    /// Features and the decision node in topological order, with the
    /// decision placed after every feature that is not its descendant.
    pub fn topological_order(&self) -> &[NodeId] {
        &self.order
    }

    /// Features that are descendants of the decision.
    pub fn decision_descendants(&self) -> &NodeSet {
        &self.decision_descendants
    }

    /// Features that are not descendants of the decision.
    pub fn pre_decision_features(&self) -> NodeSet {
        self.mechanisms.keys().filter(|v| !self.decision_descendants.contains(*v)).cloned().collect()
    }

    /// Returns a copy with different usable decision inputs.
    pub fn with_decision_inputs(&self, inputs: &NodeSet) -> Result<Scm> {
        let mut b = self.to_builder();
        b.decision_inputs = inputs.clone();
        if let Some(u) = &mut b.utility_inputs {
            u.extend(inputs.iter().cloned());
        }
        b.build()
    }

    /// Returns a copy with a different protected attribute.
    pub fn with_protected(&self, s: &str) -> Result<Scm> {
        self.to_builder().protected(s).build()
    }

    fn to_builder(&self) -> ScmBuilder {
        ScmBuilder {
            nodes: self.mechanisms.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            constants: self.constants.clone(),
            domain: self.domain.clone(),
            decision_inputs: self.decision_inputs.clone(),
            utility_inputs: Some(self.utility_inputs.clone()),
            protected: Some(self.protected.clone()),
            decision: Some(self.decision.clone()),
            utility: Some(self.utility.clone()),
            error: None,
        }
    }

    /// Whether a node takes finitely many values, judged from its mechanism.
    pub fn is_discrete(&self, v: &str) -> bool {
        if v == self.decision.as_str() {
            return true;
        }
        let Some(mech) = self.mechanisms.get(v) else {
            return false;
        };
        let parents_discrete = || mech.parents().iter().all(|p| self.is_discrete(p.as_str()));
        match mech {
            Mechanism::DiscreteNoise { .. } | Mechanism::QuantileIndicator { .. } => true,
            Mechanism::LinearGaussian { noise, .. } => noise.is_discrete() && parents_discrete(),
            Mechanism::Expression { expr, noises } => {
                let boolean = matches!(expr, Expr::Cmp(..) | Expr::Call(crate::expr::Func::Indicator, _));
                boolean || (noises.values().all(NoiseSpec::is_discrete) && parents_discrete())
            }
        }
    }

    /// Checks that a utility only reads usable utility inputs and the
    /// decision.
    pub fn validate_utility(&self, utility: &UtilityMechanism) -> Result<()> {
        for v in utility.parents() {
            if v != self.decision && !self.utility_inputs.contains(&v) {
                if self.is_feature(v.as_str()) {
                    return Err(Error::Validation(format!("utility reads `{v}`, which is not a usable utility input")));
                }
                return Err(Error::Validation(format!("utility references unknown symbol `{v}`")));
            }
        }
        Ok(())
    }

    /// The graph over features, decision and utility. Edges come from the
    /// mechanisms, the usable decision inputs, and the utility's parents;
    /// the decision is always a parent of the utility.
    pub fn induced_graph(&self, utility: &UtilityMechanism) -> Result<DagGraph> {
        self.validate_utility(utility)?;
        let mut nodes: Vec<(NodeId, Role)> = self.mechanisms.keys().map(|k| (k.clone(), Role::Feature)).collect();
        nodes.push((self.decision.clone(), Role::Decision));
        nodes.push((self.utility.clone(), Role::Utility));
        let mut edges = Vec::new();
        for (name, mech) in &self.mechanisms {
            edges.extend(mech.parents().into_iter().map(|p| (p, name.clone())));
        }
        edges.extend(self.decision_inputs.iter().map(|v| (v.clone(), self.decision.clone())));
        edges.extend(utility.parents().into_iter().map(|v| (v, self.utility.clone())));
        edges.push((self.decision.clone(), self.utility.clone()));
        DagGraph::new(nodes, edges)
    }

    /// Checks that `inputs` only contains pre-decision features.
    pub fn check_policy_inputs(&self, inputs: &NodeSet) -> Result<()> {
        for v in inputs {
            if !self.is_feature(v.as_str()) {
                return Err(Error::UnknownNode(v.to_string()));
            }
            if self.decision_descendants.contains(v) {
                return Err(Error::PolicyUsesDescendant(v.to_string()));
            }
        }
        Ok(())
    }

    /// Index of a decision value in the domain.
    pub fn decision_index(&self, d: f64) -> Option<usize> {
        self.domain.iter().position(|x| *x == d)
    }
}
