//! Policies: maps from an input set to a distribution over the decision
//! domain.
//!
//! Decisions are referred to by their index in the model's decision domain.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeId, NodeSet};

/// `intercept + Σ coefficient·input`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearScore {
    pub intercept: f64,
    pub terms: BTreeMap<NodeId, f64>,
}

impl LinearScore {
    pub fn constant(c: f64) -> Self {
        LinearScore { intercept: c, terms: BTreeMap::new() }
    }

    pub fn variable(v: &str) -> Self {
        LinearScore { intercept: 0.0, terms: BTreeMap::from([(NodeId::new(v), 1.0)]) }
    }

    pub fn new(intercept: f64, terms: &[(&str, f64)]) -> Self {
        LinearScore { intercept, terms: terms.iter().map(|(v, c)| (NodeId::new(v), *c)).collect() }
    }

    pub fn eval(&self, value: &dyn Fn(&str) -> f64) -> f64 {
        self.terms.iter().fold(self.intercept, |acc, (v, c)| acc + c * value(v.as_str()))
    }

    pub fn sub(&self, other: &LinearScore) -> LinearScore {
        let mut terms = self.terms.clone();
        for (v, c) in &other.terms {
            *terms.entry(v.clone()).or_insert(0.0) -= c;
        }
        LinearScore { intercept: self.intercept - other.intercept, terms }
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.terms.keys()
    }
}

/// One Gaussian component of a mixture score: a prior log weight, the
/// conditional density of the continuous inputs, and the conditional mean
/// of the utility given those inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    /// `ln p − ½ ln det Σ`
    pub log_weight: f64,
    pub mean: Vec<f64>,
    /// Inverse covariance of the continuous inputs.
    pub precision: Vec<Vec<f64>>,
    pub value: LinearScore,
}

/// Expected utility of one decision as a function of the inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Score {
    Affine {
        score: LinearScore,
    },
    /// Posterior-weighted average over hidden discrete configurations.
    Mixture {
        inputs: Vec<NodeId>,
        components: Vec<MixtureComponent>,
    },
}

impl Score {
    pub fn eval(&self, value: &dyn Fn(&str) -> f64) -> f64 {
        match self {
            Score::Affine { score } => score.eval(value),
            Score::Mixture { inputs, components } => {
                let x: Vec<f64> = inputs.iter().map(|v| value(v.as_str())).collect();
                let logs: Vec<f64> = components
                    .iter()
                    .map(|c| {
                        let d: Vec<f64> = x.iter().zip(&c.mean).map(|(a, b)| a - b).collect();
                        let q: f64 = c
                            .precision
                            .iter()
                            .zip(&d)
                            .map(|(row, di)| di * row.iter().zip(&d).map(|(p, dj)| p * dj).sum::<f64>())
                            .sum();
                        c.log_weight - 0.5 * q
                    })
                    .collect();
                let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let (mut num, mut den) = (0.0, 0.0);
                for (c, l) in components.iter().zip(&logs) {
                    let w = (l - top).exp();
                    num += w * c.value.eval(value);
                    den += w;
                }
                num / den
            }
        }
    }

    fn nodes(&self) -> Vec<NodeId> {
        match self {
            Score::Affine { score } => score.nodes().cloned().collect(),
            Score::Mixture { inputs, components } => {
                inputs.iter().cloned().chain(components.iter().flat_map(|c| c.value.nodes().cloned())).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum DecisionRule {
    /// Ignores the inputs; `probs[i]` is the probability of decision `i`.
    Constant { probs: Vec<f64> },
    /// `at_or_above` when `score ≥ cut`, else `below`.
    Threshold { score: LinearScore, cut: f64, below: usize, at_or_above: usize },
    /// Decision with the largest score; ties go to the lowest index.
    ScoreArgmax { scores: Vec<Score> },
    /// Lookup on exact input values; `inputs` fixes the key order.
    Tabular { inputs: Vec<NodeId>, entries: Vec<(Vec<f64>, Vec<f64>)>, default: Vec<f64> },
    /// Chooses a sub-rule by the exact values of `by`.
    Stratified { by: Vec<NodeId>, branches: Vec<(Vec<f64>, DecisionRule)>, fallback: Box<DecisionRule> },
}

impl DecisionRule {
    pub fn always(index: usize, n_decisions: usize) -> Self {
        let mut probs = vec![0.0; n_decisions];
        probs[index] = 1.0;
        DecisionRule::Constant { probs }
    }

    pub fn uniform(n_decisions: usize) -> Self {
        DecisionRule::Constant { probs: vec![1.0 / n_decisions as f64; n_decisions] }
    }

    /// Nodes the rule reads.
    pub fn nodes(&self) -> NodeSet {
        let mut out = NodeSet::new();
        self.collect_nodes(&mut out);
        out
    }

    fn collect_nodes(&self, out: &mut NodeSet) {
        match self {
            DecisionRule::Constant { .. } => {}
            DecisionRule::Threshold { score, .. } => out.extend(score.nodes().cloned()),
            DecisionRule::ScoreArgmax { scores } => out.extend(scores.iter().flat_map(Score::nodes)),
            DecisionRule::Tabular { inputs, .. } => out.extend(inputs.iter().cloned()),
            DecisionRule::Stratified { by, branches, fallback } => {
                out.extend(by.iter().cloned());
                for (_, b) in branches {
                    b.collect_nodes(out);
                }
                fallback.collect_nodes(out);
            }
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let check_probs = |p: &[f64]| -> Result<()> {
            let total: f64 = p.iter().sum();
            if p.len() != n || p.iter().any(|x| !(0.0..=1.0).contains(x)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "decision distribution {p:?} is not a distribution over {n} decisions"
                )));
            }
            Ok(())
        };
        let check_index = |i: usize| -> Result<()> {
            if i >= n {
                return Err(Error::InvalidParameter(format!("decision index {i} out of range")));
            }
            Ok(())
        };
        match self {
            DecisionRule::Constant { probs } => check_probs(probs),
            DecisionRule::Threshold { below, at_or_above, cut, .. } => {
                if cut.is_nan() {
                    return Err(Error::InvalidParameter("threshold cut is NaN".into()));
                }
                check_index(*below)?;
                check_index(*at_or_above)
            }
            DecisionRule::ScoreArgmax { scores } => {
                if scores.len() != n {
                    return Err(Error::InvalidParameter(format!("{} scores for {n} decisions", scores.len())));
                }
                Ok(())
            }
            DecisionRule::Tabular { inputs, entries, default } => {
                check_probs(default)?;
                for (k, p) in entries {
                    if k.len() != inputs.len() {
                        return Err(Error::InvalidParameter("tabular key length mismatch".into()));
                    }
                    check_probs(p)?;
                }
                Ok(())
            }
            DecisionRule::Stratified { by, branches, fallback } => {
                for (k, b) in branches {
                    if k.len() != by.len() {
                        return Err(Error::InvalidParameter("stratification key length mismatch".into()));
                    }
                    b.validate(n)?;
                }
                fallback.validate(n)
            }
        }
    }

    /// Decision index given input values and a uniform draw `u` used only
    /// by randomized rules.
    pub fn choose(&self, value: &dyn Fn(&str) -> f64, u: f64) -> usize {
        match self {
            DecisionRule::Constant { probs } => invert(probs, u),
            DecisionRule::Threshold { score, cut, below, at_or_above } => {
                if score.eval(value) >= *cut {
                    *at_or_above
                } else {
                    *below
                }
            }
            DecisionRule::ScoreArgmax { scores } => argmax(scores.iter().map(|s| s.eval(value))),
            DecisionRule::Tabular { inputs, entries, default } => {
                let key: Vec<f64> = inputs.iter().map(|v| value(v.as_str())).collect();
                let probs = entries.iter().find(|(k, _)| *k == key).map_or(default, |(_, p)| p);
                invert(probs, u)
            }
            DecisionRule::Stratified { by, branches, fallback } => {
                let key: Vec<f64> = by.iter().map(|v| value(v.as_str())).collect();
                branches.iter().find(|(k, _)| *k == key).map_or(fallback.as_ref(), |(_, r)| r).choose(value, u)
            }
        }
    }

    /// The distribution over decisions given input values.
    pub fn distribution(&self, value: &dyn Fn(&str) -> f64, n: usize) -> Vec<f64> {
        match self {
            DecisionRule::Constant { probs } => probs.clone(),
            DecisionRule::Tabular { inputs, entries, default } => {
                let key: Vec<f64> = inputs.iter().map(|v| value(v.as_str())).collect();
                entries.iter().find(|(k, _)| *k == key).map_or(default, |(_, p)| p).clone()
            }
            DecisionRule::Stratified { by, branches, fallback } => {
                let key: Vec<f64> = by.iter().map(|v| value(v.as_str())).collect();
                branches.iter().find(|(k, _)| *k == key).map_or(fallback.as_ref(), |(_, r)| r).distribution(value, n)
            }
            _ => {
                let mut p = vec![0.0; n];
                p[self.choose(value, 0.0)] = 1.0;
                p
            }
        }
    }
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Greedy rule for per-decision scores. Two affine scores become a
/// threshold on their difference; a difference without slope becomes a
/// constant choice.
pub fn rule_from_scores(scores: Vec<Score>) -> DecisionRule {
    let n = scores.len();
    let affine: Option<Vec<&LinearScore>> = scores
        .iter()
        .map(|s| match s {
            Score::Affine { score } => Some(score),
            Score::Mixture { .. } => None,
        })
        .collect();
    let Some(affine) = affine else {
        return DecisionRule::ScoreArgmax { scores };
    };
    if affine.iter().all(|s| s.terms.values().all(|c| *c == 0.0)) {
        return DecisionRule::always(argmax(affine.iter().map(|s| s.intercept)), n);
    }
    if n != 2 {
        return DecisionRule::ScoreArgmax { scores };
    }
    let diff = affine[1].sub(affine[0]);
    let scale = diff.terms.values().fold(diff.intercept.abs().max(1.0), |m, c| m.max(c.abs()));
    let terms: BTreeMap<NodeId, f64> = diff.terms.into_iter().filter(|(_, c)| c.abs() > 1e-12 * scale).collect();
    let a = diff.intercept;
    match terms.len() {
        0 => DecisionRule::always(if a > 0.0 { 1 } else { 0 }, 2),
        1 => {
            let (v, b) = terms.into_iter().next().unwrap();
            if b > 0.0 {
                DecisionRule::Threshold {
                    score: LinearScore { intercept: 0.0, terms: BTreeMap::from([(v, 1.0)]) },
                    cut: -a / b + 0.0,
                    below: 0,
                    at_or_above: 1,
                }
            } else {
                DecisionRule::Threshold {
                    score: LinearScore { intercept: 0.0, terms: BTreeMap::from([(v, -1.0)]) },
                    cut: a / b + 0.0,
                    below: 0,
                    at_or_above: 1,
                }
            }
        }
        _ => DecisionRule::Threshold {
            score: LinearScore { intercept: 0.0, terms },
            cut: -a + 0.0,
            below: 0,
            at_or_above: 1,
        },
    }
}

/// Wraps per-stratum rules in a `Stratified` rule; unseen strata take
/// decision 0.
pub fn stratify(by: Vec<NodeId>, mut branches: Vec<(Vec<f64>, DecisionRule)>, n: usize) -> DecisionRule {
    if by.is_empty() {
        return branches.pop().map_or(DecisionRule::always(0, n), |(_, r)| r);
    }
    branches.sort_by(|a, b| {
        a.0.iter().zip(&b.0).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    DecisionRule::Stratified { by, branches, fallback: Box::new(DecisionRule::always(0, n)) }
}

fn invert(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            last = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// A policy taking `inputs` as input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub inputs: NodeSet,
    pub rule: DecisionRule,
}

impl Policy {
    /// Checks that the rule reads only declared inputs and is well formed
    /// for `n_decisions` decisions.
    pub fn new(inputs: NodeSet, rule: DecisionRule, n_decisions: usize) -> Result<Self> {
        for v in rule.nodes() {
            if !inputs.contains(&v) {
                return Err(Error::InvalidParameter(format!("policy reads `{v}`, which is not one of its inputs")));
            }
        }
        rule.validate(n_decisions)?;
        Ok(Policy { inputs, rule })
    }

    pub fn constant(index: usize, n_decisions: usize) -> Self {
        Policy { inputs: NodeSet::new(), rule: DecisionRule::always(index, n_decisions) }
    }

    pub fn uniform(n_decisions: usize) -> Self {
        Policy { inputs: NodeSet::new(), rule: DecisionRule::uniform(n_decisions) }
    }

    /// `at_or_above` iff `var ≥ cut`.
    pub fn threshold(var: &str, cut: f64, below: usize, at_or_above: usize) -> Self {
        Policy {
            inputs: NodeSet::from([NodeId::new(var)]),
            rule: DecisionRule::Threshold { score: LinearScore::variable(var), cut, below, at_or_above },
        }
    }

    pub fn choose(&self, value: &dyn Fn(&str) -> f64, u: f64) -> usize {
        self.rule.choose(value, u)
    }
    /// Per-stratum cut of a binary policy that thresholds one input in each
    /// stratum, as `(stratum key, cut)`. Never acting maps to `+∞` and
    /// always acting to `−∞`. `None` for rules of any other shape.
    pub fn stratum_cuts(&self) -> Option<Vec<(Vec<f64>, f64)>> {
        fn cut(rule: &DecisionRule) -> Option<f64> {
            match rule {
                DecisionRule::Constant { probs } if probs.len() == 2 && probs[1] == 0.0 => Some(f64::INFINITY),
                DecisionRule::Constant { probs } if probs.len() == 2 && probs[1] == 1.0 => Some(f64::NEG_INFINITY),
                DecisionRule::Threshold { score, cut, below: 0, at_or_above: 1 }
                    if score.intercept == 0.0 && score.terms.len() == 1 && score.terms.values().all(|c| *c == 1.0) =>
                {
                    Some(*cut)
                }
                _ => None,
            }
        }
        match &self.rule {
            DecisionRule::Stratified { branches, .. } => {
                branches.iter().map(|(k, r)| cut(r).map(|c| (k.clone(), c))).collect()
            }
            other => cut(other).map(|c| vec![(Vec::new(), c)]),
        }
    }
}
