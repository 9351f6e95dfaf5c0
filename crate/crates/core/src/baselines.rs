//! Classical fairness constraints on the group-dependent grade noise model,
//! and the utility comparison on the parental-status model.
//!
//! The constrained searches run over the two-threshold class
//! `1(S=1, G ≥ c₁) + 1(S=0, G ≥ c₀)` with `c₀, c₁` on a grid plus `±∞`.
//! Counterfactual fairness asks that the decision be unchanged when `S` is
//! switched with all noise held fixed. Counterfactual equalized odds asks
//! that `P(D = 1 | M = m, S = s)` not depend on `s`.

use serde::{Deserialize, Serialize};

use crate::analytic;
use crate::error::{Error, Result};
use crate::fairness::{is_voi_fair, AuditReport};
use crate::graph::{node_set, NodeId};
use crate::policy::{DecisionRule, LinearScore, Policy};
use crate::policy_opt::{has_voi, Backend, VoiVerdict};
use crate::scenarios::{
    example, parental_status_footnote_utility, parental_status_modified_utility, ExampleId, ExampleSpec,
};
use crate::scm::UtilityMechanism;
use crate::stats::norm_sf;

/// Grid of finite cuts: −5 to 5 in steps of 0.1.
pub fn cut_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (0..=100).map(|k| (k as f64 - 50.0) / 10.0).collect();
    g.insert(0, f64::NEG_INFINITY);
    g.push(f64::INFINITY);
    g
}

fn rule(cut: f64) -> DecisionRule {
    if cut == f64::NEG_INFINITY {
        DecisionRule::always(1, 2)
    } else if cut == f64::INFINITY {
        DecisionRule::always(0, 2)
    } else {
        DecisionRule::Threshold { score: LinearScore::variable("G"), cut, below: 0, at_or_above: 1 }
    }
}

/// The two-threshold policy on `{G, S}`.
pub fn threshold_policy(c0: f64, c1: f64) -> Result<Policy> {
    let rule = DecisionRule::Stratified {
        by: vec![NodeId::new("S")],
        branches: vec![(vec![0.0], rule(c0)), (vec![1.0], rule(c1))],
        fallback: Box::new(DecisionRule::always(0, 2)),
    };
    Policy::new(node_set(["G", "S"]), rule, 2)
}

/// Grade noise scales of the two groups.
struct Noise {
    sd0: f64,
    sd1: f64,
}

impl Noise {
    fn of(spec: &ExampleSpec) -> Self {
        Noise { sd0: spec.params["var0"].sqrt(), sd1: spec.params["var1"].sqrt() }
    }

    /// `P(G ≥ c | M = m)` in group `s`.
    fn accept(&self, s: u8, c: f64, m: f64) -> f64 {
        let sd = if s == 0 { self.sd0 } else { self.sd1 };
        if c == f64::NEG_INFINITY {
            1.0
        } else if c == f64::INFINITY {
            0.0
        } else {
            norm_sf((c - m) / sd)
        }
    }
}

const QUAD_HALF_WIDTH: f64 = 10.0;
const QUAD_CELLS: usize = 800;

/// Simpson's rule for `∫ φ(m) f(m) dm` over `±10`.
fn gauss_expect(f: impl Fn(f64) -> f64) -> f64 {
    let h = 2.0 * QUAD_HALF_WIDTH / QUAD_CELLS as f64;
    let mut total = 0.0;
    for i in 0..=QUAD_CELLS {
        let m = -QUAD_HALF_WIDTH + i as f64 * h;
        let w = if i == 0 || i == QUAD_CELLS {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        total += w * crate::stats::norm_pdf(m) * f(m);
    }
    total * h / 3.0
}

/// `P(D_{S:=0} ≠ D_{S:=1})` for the two-threshold policy.
fn counterfactual_mismatch(noise: &Noise, c0: f64, c1: f64) -> f64 {
    gauss_expect(|m| {
        let (p0, p1) = (noise.accept(0, c0, m), noise.accept(1, c1, m));
        p0 + p1 - 2.0 * p0 * p1
    })
}

/// `sup_m |P(D=1 | M=m, S=0) − P(D=1 | M=m, S=1)|` over a grid of `m`.
fn odds_gap(noise: &Noise, c0: f64, c1: f64) -> f64 {
    (0..=QUAD_CELLS)
        .map(|i| -QUAD_HALF_WIDTH + 2.0 * QUAD_HALF_WIDTH * i as f64 / QUAD_CELLS as f64)
        .map(|m| (noise.accept(0, c0, m) - noise.accept(1, c1, m)).abs())
        .fold(0.0, f64::max)
}

/// Constraint violations below this count as satisfied.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Cuts serialize as numbers, or as `"inf"` and `"-inf"`.
mod cut_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(c: &f64, s: S) -> Result<S::Ok, S::Error> {
        if c.is_infinite() {
            s.serialize_str(if *c > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*c)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("invalid cut `{t}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    #[serde(with = "cut_serde")]
    pub c0: f64,
    #[serde(with = "cut_serde")]
    pub c1: f64,
    pub value: f64,
}

impl ThresholdPair {
    pub fn is_never_hire(&self) -> bool {
        self.c0 == f64::INFINITY && self.c1 == f64::INFINITY
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    /// Best feasible pair under counterfactual equalized odds.
    pub equalized_odds: ThresholdPair,
    pub equalized_odds_feasible: usize,
    /// Best feasible pair under counterfactual fairness.
    pub counterfactual_fairness: ThresholdPair,
    pub counterfactual_fairness_feasible: usize,
    /// Best pair on the grid without constraints.
    pub unconstrained_grid: ThresholdPair,
    /// The exact optimum from the analytic backend.
    pub unconstrained: ThresholdPair,
    pub admission_rate_s0: f64,
    pub admission_rate_s1: f64,
    /// `P(D=1 | S=1) − P(D=1 | S=0)` under the unconstrained optimum.
    pub demographic_parity_gap: f64,
    pub pairs_searched: usize,
}

fn best(pairs: impl Iterator<Item = ThresholdPair>) -> Option<ThresholdPair> {
    pairs.fold(None, |acc: Option<ThresholdPair>, p| match acc {
        Some(a) if a.value >= p.value => Some(a),
        _ => Some(p),
    })
}

/// Admission rate in group `s` under the two-threshold policy.
fn admission_rate(noise: &Noise, s: u8, c: f64) -> f64 {
    gauss_expect(|m| noise.accept(s, c, m))
}

/// Searches the two-threshold class on the grade-uncertainty model under
/// both counterfactual constraints and without constraints.
pub fn example4_baselines() -> Result<BaselineReport> {
    let spec = example(ExampleId::Uncertainty);
    let noise = Noise::of(&spec);
    let grid = cut_grid();
    let mut all = Vec::with_capacity(grid.len() * grid.len());
    for &c0 in &grid {
        for &c1 in &grid {
            let value = analytic::expected_utility(&spec.scm, &spec.utility, &threshold_policy(c0, c1)?)?;
            all.push(ThresholdPair { c0, c1, value: value + 0.0 });
        }
    }
    let eo: Vec<ThresholdPair> =
        all.iter().copied().filter(|p| odds_gap(&noise, p.c0, p.c1) <= FEASIBILITY_TOL).collect();
    let cf: Vec<ThresholdPair> =
        all.iter().copied().filter(|p| counterfactual_mismatch(&noise, p.c0, p.c1) <= FEASIBILITY_TOL).collect();
    let none = || Error::Validation("no feasible threshold pair".into());

    let (policy, value) = analytic::max_expected_utility(&spec.scm, &spec.utility, &node_set(["G", "S"]))?;
    let cuts = policy.stratum_cuts().ok_or_else(|| Error::Validation("optimum is not a threshold policy".into()))?;
    let cut_of = |s: f64| cuts.iter().find(|(k, _)| k == &[s]).map_or(f64::INFINITY, |(_, c)| *c);
    let unconstrained = ThresholdPair { c0: cut_of(0.0), c1: cut_of(1.0), value };
    let rate0 = admission_rate(&noise, 0, unconstrained.c0);
    let rate1 = admission_rate(&noise, 1, unconstrained.c1);
    Ok(BaselineReport {
        equalized_odds: best(eo.iter().copied()).ok_or_else(none)?,
        equalized_odds_feasible: eo.len(),
        counterfactual_fairness: best(cf.iter().copied()).ok_or_else(none)?,
        counterfactual_fairness_feasible: cf.len(),
        unconstrained_grid: best(all.iter().copied()).ok_or_else(none)?,
        unconstrained,
        admission_rate_s0: rate0,
        admission_rate_s1: rate1,
        demographic_parity_gap: rate1 - rate0,
        pairs_searched: all.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityComparison {
    pub admits_voi_given_a: bool,
    pub admits_voi_given_q: bool,
    pub original_fair: AuditReport,
    pub modified_fair: AuditReport,
    pub footnote_voi: VoiVerdict,
}

/// The parental-status model under `D·Q·W`, the modified `D·Q`, and the
/// footnote variant `Q·W + D`. Numeric tests use Monte Carlo with `n` rows.
pub fn fig1_utility_comparison(n: usize, seed: u64) -> Result<UtilityComparison> {
    let spec = example(ExampleId::ParentalStatus);
    let s = spec.scm.protected().clone();
    let graph = spec.scm.induced_graph(&spec.utility)?;
    let backend = Backend::mc(n, seed);
    let q = node_set(["Q"]);
    let modified: UtilityMechanism = parental_status_modified_utility();
    let footnote: UtilityMechanism = parental_status_footnote_utility();
    Ok(UtilityComparison {
        admits_voi_given_a: graph.admits_voi(&s, &node_set(["A"]))?,
        admits_voi_given_q: graph.admits_voi(&s, &q)?,
        original_fair: is_voi_fair(&spec.scm, &spec.utility, &q, &backend, 0.0)?,
        modified_fair: is_voi_fair(&spec.scm, &modified, &q, &backend, 0.0)?,
        footnote_voi: has_voi(&spec.scm, &footnote, &s, &q, &backend, 0.0)?,
    })
}
