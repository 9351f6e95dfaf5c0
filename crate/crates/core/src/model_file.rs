//! JSON model files.
//!
//! ```json
//! {
//!   "schema": 1,
//!   "constants": { "alpha": 1.0 },
//!   "nodes": [
//!     { "name": "S", "kind": "discrete", "noise": { "dist": "uniform", "values": [-1, 1] } },
//!     { "name": "Effort", "kind": "linear", "parents": {}, "noise": { "dist": "normal", "mean": 0, "sd": 1 } },
//!     { "name": "Grade", "kind": "expression", "mechanism": "Effort + alpha * S" }
//!   ],
//!   "decision": { "domain": [0, 1], "inputs": ["Grade", "S"] },
//!   "utility": { "expression": "indicator(D = 1) * Effort" },
//!   "protected": "S"
//! }
//! ```
//!
//! Node kinds are `linear` (weights keyed by parent, optional `intercept`,
//! `noise`), `discrete` (the node is its `noise`), `expression` (a
//! `mechanism` over parents and the symbols named in `noises`; an optional
//! `parents` list is checked against the expression) and
//! `quantile_indicator` (`source`, `quantile`).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::scm::{Mechanism, NoiseSpec, Scm, ScmBuilder, UtilityMechanism};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseFile {
    Normal {
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        sd: f64,
    },
    Uniform {
        values: Vec<f64>,
    },
    Bernoulli {
        p: f64,
    },
    Categorical {
        values: Vec<f64>,
        probs: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

fn standard_normal() -> NoiseFile {
    NoiseFile::Normal { mean: 0.0, sd: 1.0 }
}

impl From<&NoiseFile> for NoiseSpec {
    fn from(n: &NoiseFile) -> Self {
        match n {
            NoiseFile::Normal { mean, sd } => NoiseSpec::Normal { mean: *mean, sd: *sd },
            NoiseFile::Uniform { values } => NoiseSpec::Uniform { values: values.clone() },
            NoiseFile::Bernoulli { p } => NoiseSpec::Bernoulli { p: *p },
            NoiseFile::Categorical { values, probs } => {
                NoiseSpec::Categorical { values: values.clone(), probs: probs.clone() }
            }
        }
    }
}

impl From<&NoiseSpec> for NoiseFile {
    fn from(n: &NoiseSpec) -> Self {
        match n {
            NoiseSpec::Normal { mean, sd } => NoiseFile::Normal { mean: *mean, sd: *sd },
            NoiseSpec::Uniform { values } => NoiseFile::Uniform { values: values.clone() },
            NoiseSpec::Bernoulli { p } => NoiseFile::Bernoulli { p: *p },
            NoiseSpec::Categorical { values, probs } => {
                NoiseFile::Categorical { values: values.clone(), probs: probs.clone() }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NodeKind {
    Linear {
        #[serde(default)]
        parents: BTreeMap<String, f64>,
        #[serde(default)]
        intercept: f64,
        #[serde(default = "standard_normal")]
        noise: NoiseFile,
    },
    Discrete {
        noise: NoiseFile,
    },
    Expression {
        mechanism: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        parents: Option<Vec<String>>,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        noises: BTreeMap<String, NoiseFile>,
    },
    QuantileIndicator {
        source: String,
        quantile: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeFile {
    pub name: String,
    #[serde(flatten)]
    pub kind: NodeKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionFile {
    #[serde(default = "default_decision")]
    pub name: String,
    pub domain: Vec<f64>,
    #[serde(default)]
    pub inputs: Vec<String>,
}

fn default_decision() -> String {
    "D".into()
}

fn default_utility() -> String {
    "U".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityFile {
    #[serde(default = "default_utility")]
    pub name: String,
    pub expression: String,
    /// Usable utility inputs; all nodes when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema: u32,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    pub nodes: Vec<NodeFile>,
    pub decision: DecisionFile,
    pub utility: UtilityFile,
    pub protected: String,
}

/// A loaded model.
#[derive(Clone, Debug)]
pub struct Model {
    pub scm: Scm,
    pub utility: UtilityMechanism,
}

impl ModelFile {
    /// Parses JSON text; syntax errors carry line and column.
    pub fn parse(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            schema: Option<serde_json::Value>,
        }
        let v: Version = serde_json::from_str(text)?;
        match v.schema {
            Some(serde_json::Value::Number(n)) if n.as_u64() == Some(SCHEMA_VERSION as u64) => {}
            Some(other) => {
                return Err(Error::Validation(format!("unsupported schema {other}, expected {SCHEMA_VERSION}")))
            }
            None => return Err(Error::Validation(format!("missing `schema: {SCHEMA_VERSION}`"))),
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Validates and resolves into a model.
    pub fn resolve(&self) -> Result<Model> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Validation(format!("unsupported schema {}, expected {SCHEMA_VERSION}", self.schema)));
        }
        let mut b = ScmBuilder::new();
        for (k, v) in &self.constants {
            b = b.constant(k, *v);
        }
        for node in &self.nodes {
            let name = node.name.as_str();
            b = match &node.kind {
                NodeKind::Linear { parents, intercept, noise } => {
                    let w: Vec<(&str, f64)> = parents.iter().map(|(p, c)| (p.as_str(), *c)).collect();
                    b.linear(name, &w, *intercept, noise.into())
                }
                NodeKind::Discrete { noise } => b.discrete(name, noise.into()),
                NodeKind::Expression { mechanism, parents, noises } => {
                    let ns: Vec<(&str, NoiseSpec)> = noises.iter().map(|(k, v)| (k.as_str(), v.into())).collect();
                    let b = b.expression(name, mechanism, &ns);
                    if let Some(declared) = parents {
                        let expr = crate::expr::parse_expression(mechanism)
                            .map_err(|e| Error::Validation(format!("node `{name}`: {e}")))?
                            .bind(&self.constants);
                        let found: Vec<String> =
                            expr.free_symbols().into_iter().filter(|s| !noises.contains_key(s)).collect();
                        let mut declared = declared.clone();
                        declared.sort();
                        declared.dedup();
                        if declared != found {
                            return Err(Error::Validation(format!(
                                "node `{name}`: declared parents {declared:?} differ from the mechanism's {found:?}"
                            )));
                        }
                    }
                    b
                }
                NodeKind::QuantileIndicator { source, quantile } => b.quantile_indicator(name, source, *quantile),
            };
        }
        let inputs: Vec<&str> = self.decision.inputs.iter().map(String::as_str).collect();
        b = b
            .names(&self.decision.name, &self.utility.name)
            .decision(&self.decision.domain, &inputs)
            .protected(&self.protected);
        if let Some(ui) = &self.utility.inputs {
            let ui: Vec<&str> = ui.iter().map(String::as_str).collect();
            b = b.utility_inputs(&ui);
        }
        let scm = b.build()?;
        let utility = UtilityMechanism::parse(&self.utility.expression, scm.constants())
            .map_err(|e| Error::Validation(format!("utility: {e}")))?;
        scm.validate_utility(&utility)?;
        Ok(Model { scm, utility })
    }

    /// The file describing `scm` and `utility`. Constants are already
    /// folded into the expressions.
    pub fn from_model(scm: &Scm, utility: &UtilityMechanism) -> Self {
        let nodes = scm
            .topological_order()
            .iter()
            .filter(|v| *v != scm.decision())
            .map(|v| {
                let kind = match scm.mechanism(v.as_str()).expect("ordered nodes have mechanisms") {
                    Mechanism::LinearGaussian { weights, intercept, noise } => NodeKind::Linear {
                        parents: weights.iter().map(|(p, c)| (p.to_string(), *c)).collect(),
                        intercept: *intercept,
                        noise: noise.into(),
                    },
                    Mechanism::DiscreteNoise { noise } => NodeKind::Discrete { noise: noise.into() },
                    Mechanism::Expression { expr, noises } => NodeKind::Expression {
                        mechanism: expr.to_string(),
                        parents: None,
                        noises: noises.iter().map(|(k, n)| (k.clone(), n.into())).collect(),
                    },
                    Mechanism::QuantileIndicator { source, quantile } => {
                        NodeKind::QuantileIndicator { source: source.to_string(), quantile: *quantile }
                    }
                };
                NodeFile { name: v.to_string(), kind }
            })
            .collect();
        let all: Vec<NodeId> = scm.features().cloned().chain([scm.decision().clone()]).collect();
        let ui: Vec<String> = scm.utility_inputs().iter().map(NodeId::to_string).collect();
        let full = all.len() == ui.len();
        ModelFile {
            schema: SCHEMA_VERSION,
            constants: BTreeMap::new(),
            nodes,
            decision: DecisionFile {
                name: scm.decision().to_string(),
                domain: scm.domain().to_vec(),
                inputs: scm.decision_inputs().iter().map(NodeId::to_string).collect(),
            },
            utility: UtilityFile {
                name: scm.utility().to_string(),
                expression: utility.expr().to_string(),
                inputs: (!full).then_some(ui),
            },
            protected: scm.protected().to_string(),
        }
    }
}

/// Reads and resolves a model file.
pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path)?;
    ModelFile::parse(&text)?.resolve()
}
