//! Value-of-information fairness for decision policies in structural causal models.
//!
//! A model is a structural causal model with one decision node `D`, set by a
//! policy reading chosen inputs, and one utility node `U`. A utility is fair
//! relative to essential features `F` when the protected attribute `S` has no
//! value of information relative to `F`: knowing `S` in addition to `F` does
//! not raise the best achievable expected utility.
//!
//! ```
//! use voifair::graph::node_set;
//! use voifair::policy_opt::{Backend, ANALYTIC_TOLERANCE};
//! use voifair::scenarios::{example, ExampleId};
//!
//! let spec = example(ExampleId::Medical);
//! let audit = voifair::is_voi_fair(&spec.scm, &spec.utility, &node_set(["M"]), &Backend::Analytic, ANALYTIC_TOLERANCE)
//!     .unwrap();
//! assert!(!audit.fair);
//! ```

pub mod analytic;
pub mod baselines;
pub mod cli;
pub mod college;
pub mod error;
pub mod expr;
pub mod fairness;
pub mod gaussian;
pub mod graph;
pub mod model_file;
pub mod policy;
pub mod policy_opt;
pub mod regression;
pub mod reproduce;
pub mod rng;
pub mod sample;
pub mod scenarios;
pub mod scm;
pub mod stats;

pub use error::{Error, Result};
pub use fairness::{corresponding_fair_utility, is_voi_fair, UtilityFamily};
pub use graph::{Dag, DagGraph, NodeId, NodeSet};
pub use policy::Policy;
pub use policy_opt::{has_voi, Backend};
pub use scm::{NoiseSpec, Scm, UtilityMechanism};
