//! Forward sampling of a model under a policy.
//!
//! Columns are filled in topological order; within a column every row is
//! independent, so rows are processed in parallel. All draws come from
//! [`Substreams`] keyed by node, noise symbol and row index.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::Compiled;
use crate::graph::NodeId;
use crate::policy::Policy;
use crate::rng::Substreams;
use crate::scm::{Mechanism, Scm, UtilityMechanism, EPS};
use crate::stats::quantile_type7;

/// Column-oriented sample: features in topological order, then the
/// decision, then the utility.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    names: Vec<NodeId>,
    columns: Vec<Vec<f64>>,
    seed: u64,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn names(&self) -> &[NodeId] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n.as_str() == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    /// Writes a CSV file with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.names.iter().map(NodeId::as_str))?;
        let mut buf: Vec<String> = Vec::with_capacity(self.columns.len());
        for i in 0..self.n() {
            buf.clear();
            for c in &self.columns {
                buf.push(format!("{}", c[i] + 0.0));
            }
            w.write_record(&buf)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A compiled node assignment reading parent columns by slot.
enum NodeProgram {
    Linear { parents: Vec<(usize, f64)>, intercept: f64 },
    Discrete,
    Expression { code: Compiled, parents: Vec<usize>, n_noises: usize },
    Quantile { source: usize, quantile: f64 },
}

/// Samples `n` rows under `policy` with randomness derived from `seed`.
pub fn sample(scm: &Scm, utility: &UtilityMechanism, policy: &Policy, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be at least 1".into()));
    }
    scm.check_policy_inputs(&policy.inputs)?;
    scm.validate_utility(utility)?;
    let order: Vec<NodeId> = scm.topological_order().to_vec();
    let slot: BTreeMap<NodeId, usize> = order.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
    let decision = scm.decision();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); order.len()];

    for (idx, name) in order.iter().enumerate() {
        let col = if name == decision {
            let inputs: Vec<(&NodeId, usize)> = policy.inputs.iter().map(|v| (v, slot[v])).collect();
            let stream = Substreams::new(seed, name.as_str(), "policy");
            let domain = scm.domain();
            let cols = &columns;
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let value =
                        |v: &str| inputs.iter().find(|(k, _)| k.as_str() == v).map_or(f64::NAN, |(_, s)| cols[*s][i]);
                    let u = stream.row(i as u64).uniform();
                    domain[policy.choose(&value, u)]
                })
                .collect()
        } else {
            let mech = scm.mechanism(name.as_str())?;
            sample_node(name, mech, &slot, &columns, n, seed)?
        };
        columns[idx] = col;
    }

    // utility
    let pa: Vec<String> = utility.expr().free_symbols().into_iter().collect();
    let code = utility.expr().compile(&|v| pa.iter().position(|p| p == v))?;
    let pa_slots: Vec<usize> = pa.iter().map(|p| slot[p.as_str()]).collect();
    let u: Vec<f64> = (0..n)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(vals, stack), i| {
                vals.clear();
                vals.extend(pa_slots.iter().map(|s| columns[*s][i]));
                code.eval_with(vals, stack)
            },
        )
        .collect();

    let mut names: Vec<NodeId> = order.iter().filter(|v| *v != decision).cloned().collect();
    let d_idx = slot[decision];
    let mut ordered: Vec<Vec<f64>> = Vec::with_capacity(order.len() + 1);
    let mut d_col = Vec::new();
    for (i, c) in columns.into_iter().enumerate() {
        if i == d_idx {
            d_col = c;
        } else {
            ordered.push(c);
        }
    }
    names.push(decision.clone());
    names.push(scm.utility().clone());
    ordered.push(d_col);
    ordered.push(u);
    Ok(Dataset { names, columns: ordered, seed })
}

fn sample_node(
    name: &NodeId,
    mech: &Mechanism,
    slot: &BTreeMap<NodeId, usize>,
    columns: &[Vec<f64>],
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let noises = mech.noises();
    let streams: Vec<Substreams> = noises.iter().map(|(s, _)| Substreams::new(seed, name.as_str(), s)).collect();
    let program = match mech {
        Mechanism::LinearGaussian { weights, intercept, .. } => {
            NodeProgram::Linear { parents: weights.iter().map(|(p, w)| (slot[p], *w)).collect(), intercept: *intercept }
        }
        Mechanism::DiscreteNoise { .. } => NodeProgram::Discrete,
        Mechanism::Expression { expr, noises: noise_map } => {
            let parents: Vec<NodeId> = mech.parents().into_iter().collect();
            let noise_names: Vec<&String> = noise_map.keys().collect();
            let code = expr.compile(&|v| {
                noise_names
                    .iter()
                    .position(|s| s.as_str() == v)
                    .or_else(|| parents.iter().position(|p| p.as_str() == v).map(|i| i + noise_names.len()))
            })?;
            NodeProgram::Expression {
                code,
                parents: parents.iter().map(|p| slot[p]).collect(),
                n_noises: noise_names.len(),
            }
        }
        Mechanism::QuantileIndicator { source, quantile } => {
            NodeProgram::Quantile { source: slot[source], quantile: *quantile }
        }
    };
    debug_assert!(noises.iter().all(|(s, _)| matches!(mech, Mechanism::Expression { .. }) || s == EPS));

    Ok(match program {
        NodeProgram::Linear { parents, intercept } => (0..n)
            .into_par_iter()
            .map(|i| {
                let e = noises[0].1.sample(&mut streams[0].row(i as u64));
                parents.iter().fold(intercept + e, |acc, (s, w)| acc + w * columns[*s][i])
            })
            .collect(),
        NodeProgram::Discrete => {
            (0..n).into_par_iter().map(|i| noises[0].1.sample(&mut streams[0].row(i as u64))).collect()
        }
        NodeProgram::Expression { code, parents, n_noises } => (0..n)
            .into_par_iter()
            .map_init(
                || (Vec::new(), Vec::new()),
                |(vals, stack), i| {
                    vals.clear();
                    for k in 0..n_noises {
                        vals.push(noises[k].1.sample(&mut streams[k].row(i as u64)));
                    }
                    vals.extend(parents.iter().map(|s| columns[*s][i]));
                    code.eval_with(vals, stack)
                },
            )
            .collect(),
        NodeProgram::Quantile { source, quantile } => {
            let mut sorted = columns[source].clone();
            sorted.sort_by(f64::total_cmp);
            let q = quantile_type7(&sorted, quantile);
            columns[source].iter().map(|x| if *x > q { 1.0 } else { 0.0 }).collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::NoiseSpec;

    fn example4() -> (Scm, UtilityMechanism) {
        let scm = Scm::builder()
            .discrete("S", NoiseSpec::Bernoulli { p: 0.99 })
            .linear("M", &[], 0.0, NoiseSpec::standard_normal())
            .expression(
                "G",
                "indicator(S = 0) * (M + sqrt(2) * e0) + indicator(S = 1) * (M + e1)",
                &[("e0", NoiseSpec::standard_normal()), ("e1", NoiseSpec::standard_normal())],
            )
            .decision(&[0.0, 1.0], &["G", "S"])
            .protected("S")
            .build()
            .unwrap();
        let u = UtilityMechanism::parse("indicator(D = 1) * (M - 1)", &BTreeMap::new()).unwrap();
        (scm, u)
    }

    #[test]
    fn policy_may_read_features_declared_after_the_decision_inputs() {
        let scm = Scm::builder()
            .linear("A", &[], 0.0, NoiseSpec::standard_normal())
            .linear("Z", &[("A", 1.0)], 0.0, NoiseSpec::standard_normal())
            .decision(&[0.0, 1.0], &["A"])
            .protected("A")
            .build()
            .unwrap();
        let u = UtilityMechanism::parse("D * Z", &BTreeMap::new()).unwrap();
        let data = sample(&scm, &u, &Policy::threshold("Z", 0.0, 0, 1), 200, 1).unwrap();
        let (z, d) = (data.column("Z").unwrap(), data.column("D").unwrap());
        assert!(z.iter().zip(d).all(|(z, d)| (*z >= 0.0) == (*d == 1.0)));
    }

    #[test]
    fn header_order_and_row_count() {
        let (scm, u) = example4();
        let ds = sample(&scm, &u, &Policy::constant(1, 2), 10, 3).unwrap();
        let names: Vec<&str> = ds.names().iter().map(NodeId::as_str).collect();
        assert_eq!(names, ["M", "S", "G", "D", "U"]);
        assert_eq!(ds.n(), 10);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.starts_with("M,S,G,D,U\n"));
    }

    #[test]
    fn mean_of_m_under_always_hire() {
        let (scm, u) = example4();
        let n = 1_000_000;
        let ds = sample(&scm, &u, &Policy::constant(1, 2), n, 42).unwrap();
        let m = ds.column("M").unwrap();
        let mean = m.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn determinism_and_seed_sensitivity() {
        let (scm, u) = example4();
        let a = sample(&scm, &u, &Policy::uniform(2), 500, 9).unwrap();
        let b = sample(&scm, &u, &Policy::uniform(2), 500, 9).unwrap();
        let c = sample(&scm, &u, &Policy::uniform(2), 500, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.column("M").unwrap(), c.column("M").unwrap());
    }

    #[test]
    fn declaration_order_does_not_matter() {
        let (scm, u) = example4();
        let permuted = Scm::builder()
            .expression(
                "G",
                "indicator(S = 0) * (M + sqrt(2) * e0) + indicator(S = 1) * (M + e1)",
                &[("e1", NoiseSpec::standard_normal()), ("e0", NoiseSpec::standard_normal())],
            )
            .linear("M", &[], 0.0, NoiseSpec::standard_normal())
            .discrete("S", NoiseSpec::Bernoulli { p: 0.99 })
            .decision(&[0.0, 1.0], &["S", "G"])
            .protected("S")
            .build()
            .unwrap();
        let a = sample(&scm, &u, &Policy::uniform(2), 300, 5).unwrap();
        let b = sample(&permuted, &u, &Policy::uniform(2), 300, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn utility_column_recomputes() {
        let (scm, u) = example4();
        let ds = sample(&scm, &u, &Policy::threshold("G", 0.5, 0, 1), 1000, 1).unwrap();
        let (d, m, uu) = (ds.column("D").unwrap(), ds.column("M").unwrap(), ds.column("U").unwrap());
        for i in 0..ds.n() {
            let v = u
                .expr()
                .eval(&|s| match s {
                    "D" => Some(d[i]),
                    "M" => Some(m[i]),
                    _ => None,
                })
                .unwrap();
            assert_eq!(v.to_bits(), uu[i].to_bits());
        }
    }

    #[test]
    fn rejects_zero_rows_and_descendant_inputs() {
        let (scm, u) = example4();
        assert!(sample(&scm, &u, &Policy::constant(1, 2), 0, 1).is_err());
        let scm2 = Scm::builder()
            .discrete("S", NoiseSpec::Bernoulli { p: 0.5 })
            .linear("Y", &[("D", 1.0)], 0.0, NoiseSpec::standard_normal())
            .decision(&[0.0, 1.0], &[])
            .protected("S")
            .build()
            .unwrap();
        let p = Policy::threshold("Y", 0.0, 0, 1);
        let r = sample(&scm2, &u, &p, 10, 1);
        assert!(matches!(r, Err(Error::PolicyUsesDescendant(_))));
    }
}
