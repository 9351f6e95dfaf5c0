//! Expected utilities, optimal policies and value-of-information tests.
//!
//! Two backends are offered. The analytic backend is exact for
//! linear-Gaussian models. The Monte Carlo backend explores under the
//! uniform random policy, fits per-decision outcome regressions, and
//! evaluates policies on fresh samples with common random numbers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analytic;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::graph::{NodeId, NodeSet};
use crate::policy::{rule_from_scores, stratify, LinearScore, Policy, Score};
use crate::regression::ols;
use crate::rng::derive_seed;
use crate::sample::{sample, Dataset};
use crate::scm::{Scm, UtilityMechanism};
use crate::stats::{mean, mean_stderr, Z_99};

/// Absolute tolerance on exact VoI margins.
pub const ANALYTIC_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub n: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum Backend {
    Analytic,
    MonteCarlo(McConfig),
}

impl Backend {
    pub fn mc(n: usize, seed: u64) -> Self {
        Backend::MonteCarlo(McConfig { n, seed })
    }

    pub fn kind(&self) -> BackendKind {
        match self {
            Backend::Analytic => BackendKind::Analytic,
            Backend::MonteCarlo(_) => BackendKind::MonteCarlo,
        }
    }

    fn config(&self) -> Result<Option<McConfig>> {
        match self {
            Backend::Analytic => Ok(None),
            Backend::MonteCarlo(c) if c.n < 2 => {
                Err(Error::InvalidParameter("Monte Carlo sample size must be at least 2".into()))
            }
            Backend::MonteCarlo(c) => Ok(Some(*c)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Analytic,
    MonteCarlo,
}

/// A value with its standard error (zero for exact values).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub backend: BackendKind,
}

/// `E[U]` under `policy`.
pub fn expected_utility(scm: &Scm, utility: &UtilityMechanism, policy: &Policy, backend: &Backend) -> Result<Estimate> {
    match backend.config()? {
        None => Ok(Estimate {
            value: analytic::expected_utility(scm, utility, policy)?,
            stderr: 0.0,
            backend: BackendKind::Analytic,
        }),
        Some(c) => {
            let data = sample(scm, utility, policy, c.n, derive_seed(c.seed, "evaluate"))?;
            let (value, stderr) = mean_stderr(data.column(scm.utility().as_str())?);
            Ok(Estimate { value, stderr, backend: BackendKind::MonteCarlo })
        }
    }
}

/// An optimal policy taking `inputs`.
pub fn optimal_policy(scm: &Scm, utility: &UtilityMechanism, inputs: &NodeSet, backend: &Backend) -> Result<Policy> {
    match backend.config()? {
        None => analytic::optimal_policy(scm, utility, inputs),
        Some(c) => {
            scm.check_policy_inputs(inputs)?;
            let nd = scm.domain().len();
            let data = sample(scm, utility, &Policy::uniform(nd), c.n, derive_seed(c.seed, "explore"))?;
            fit_policy(scm, &data, inputs)
        }
    }
}

/// Greedy policy from per-decision regressions of the utility on the
/// inputs, fitted separately in each stratum of the discrete inputs.
pub fn fit_policy(scm: &Scm, data: &Dataset, inputs: &NodeSet) -> Result<Policy> {
    let nd = scm.domain().len();
    let (discrete, continuous): (Vec<NodeId>, Vec<NodeId>) =
        inputs.iter().cloned().partition(|v| scm.is_discrete(v.as_str()));
    let dcol = data.column(scm.decision().as_str())?;
    let ucol = data.column(scm.utility().as_str())?;
    let dcols = discrete.iter().map(|v| data.column(v.as_str())).collect::<Result<Vec<_>>>()?;
    let ccols = continuous.iter().map(|v| data.column(v.as_str())).collect::<Result<Vec<_>>>()?;

    let mut strata: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
    for r in 0..data.n() {
        strata.entry(dcols.iter().map(|c| c[r].to_bits()).collect()).or_default().push(r);
    }
    let mut branches = Vec::with_capacity(strata.len());
    for (key, rows) in strata {
        let mut scores = Vec::with_capacity(nd);
        for (d, &value) in scm.domain().iter().enumerate() {
            let sel: Vec<usize> = rows.iter().copied().filter(|&r| dcol[r] == value).collect();
            let y: Vec<f64> = sel.iter().map(|&r| ucol[r]).collect();
            let score = if continuous.is_empty() {
                if y.is_empty() {
                    return Err(Error::RankDeficient(format!("no exploration rows for decision {d} in a stratum")));
                }
                LinearScore::constant(mean(&y))
            } else {
                let xs: Vec<Vec<f64>> = ccols.iter().map(|c| sel.iter().map(|&r| c[r]).collect()).collect();
                let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
                let fit = ols(&refs, &y)?;
                LinearScore {
                    intercept: fit.coefficients[0],
                    terms: continuous.iter().cloned().zip(fit.coefficients[1..].iter().copied()).collect(),
                }
            };
            scores.push(Score::Affine { score });
        }
        let key: Vec<f64> = key.into_iter().map(f64::from_bits).collect();
        branches.push((key, rule_from_scores(scores)));
    }
    Policy::new(inputs.clone(), stratify(discrete, branches, nd), nd)
}

/// The optimal policy with inputs `inputs` and its expected utility.
pub fn max_expected_utility(
    scm: &Scm,
    utility: &UtilityMechanism,
    inputs: &NodeSet,
    backend: &Backend,
) -> Result<(Policy, Estimate)> {
    let policy = optimal_policy(scm, utility, inputs, backend)?;
    let value = expected_utility(scm, utility, &policy, backend)?;
    Ok((policy, value))
}

/// Outcome of a value-of-information test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoiVerdict {
    pub has_voi: bool,
    /// `maxEU(M ∪ {S}) − maxEU(M)`
    pub margin: f64,
    pub stderr: f64,
    pub backend: BackendKind,
    /// The margin must exceed this value for a positive verdict.
    pub tolerance: f64,
    pub seed: Option<u64>,
}

fn check_voi_args(scm: &Scm, s: &NodeId, m: &NodeSet) -> Result<()> {
    if m.contains(s) {
        return Err(Error::OverlappingSets(format!("`{s}` is already among the inputs")));
    }
    let mut all = m.clone();
    all.insert(s.clone());
    scm.check_policy_inputs(&all)
}

/// Whether `s` has value of information relative to `m`.
///
/// The analytic backend compares exact margins with `tol`. The Monte Carlo
/// backend fits both policies on shared exploration data, evaluates them on
/// shared evaluation noise, and applies a one-sided z-test at level 0.01 to
/// the paired differences; `tol` is then unused.
pub fn has_voi(
    scm: &Scm,
    utility: &UtilityMechanism,
    s: &NodeId,
    m: &NodeSet,
    backend: &Backend,
    tol: f64,
) -> Result<VoiVerdict> {
    check_voi_args(scm, s, m)?;
    let mut with = m.clone();
    with.insert(s.clone());
    match backend.config()? {
        None => {
            let (_, small) = analytic::max_expected_utility(scm, utility, m)?;
            let (_, large) = analytic::max_expected_utility(scm, utility, &with)?;
            let raw = large - small;
            let margin = if raw < 0.0 && raw > -tol { 0.0 } else { raw };
            Ok(VoiVerdict {
                has_voi: margin > tol,
                margin,
                stderr: 0.0,
                backend: BackendKind::Analytic,
                tolerance: tol,
                seed: None,
            })
        }
        Some(c) => {
            let nd = scm.domain().len();
            let explore = sample(scm, utility, &Policy::uniform(nd), c.n, derive_seed(c.seed, "explore"))?;
            let small = fit_policy(scm, &explore, m)?;
            let large = fit_policy(scm, &explore, &with)?;
            let eval = derive_seed(c.seed, "evaluate");
            let a = sample(scm, utility, &small, c.n, eval)?;
            let b = sample(scm, utility, &large, c.n, eval)?;
            let u = scm.utility().as_str();
            let diff: Vec<f64> = b.column(u)?.iter().zip(a.column(u)?).map(|(x, y)| x - y).collect();
            let (margin, stderr) = mean_stderr(&diff);
            let tolerance = Z_99 * stderr;
            Ok(VoiVerdict {
                has_voi: margin > tolerance,
                margin,
                stderr,
                backend: BackendKind::MonteCarlo,
                tolerance,
                seed: Some(c.seed),
            })
        }
    }
}

/// One elimination attempt of the minimal-input search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemovalAttempt {
    pub node: NodeId,
    /// Inputs before the attempt.
    pub from: NodeSet,
    pub verdict: VoiVerdict,
    pub removed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimalInputs {
    pub inputs: NodeSet,
    pub max_eu_full: Estimate,
    pub max_eu: Estimate,
    /// Every removal tested, in order; several valid sets may exist.
    pub attempts: Vec<RemovalAttempt>,
}

/// A subset `H` of `od` on which an optimal policy exists and every member
/// has VoI relative to the rest, by backward elimination in lexicographic
/// order with a restart after each removal.
pub fn minimal_voi_input_set(
    scm: &Scm,
    utility: &UtilityMechanism,
    od: &NodeSet,
    backend: &Backend,
    tol: f64,
) -> Result<MinimalInputs> {
    let (_, full) = max_expected_utility(scm, utility, od, backend)?;
    let mut h = od.clone();
    let mut current = full;
    let mut attempts = Vec::new();
    'restart: loop {
        for x in h.clone() {
            let mut rest = h.clone();
            rest.remove(&x);
            let verdict = has_voi(scm, utility, &x, &rest, backend, tol)?;
            let mut removed = false;
            let mut reduced = None;
            if !verdict.has_voi {
                let (_, value) = max_expected_utility(scm, utility, &rest, backend)?;
                let slack = match backend {
                    Backend::Analytic => tol,
                    Backend::MonteCarlo(_) => Z_99 * (value.stderr.powi(2) + full.stderr.powi(2)).sqrt(),
                };
                removed = full.value - value.value <= slack;
                reduced = Some(value);
            }
            attempts.push(RemovalAttempt { node: x.clone(), from: h.clone(), verdict, removed });
            if removed {
                h = rest;
                current = reduced.expect("evaluated before removal");
                continue 'restart;
            }
        }
        break;
    }
    Ok(MinimalInputs { inputs: h, max_eu_full: full, max_eu: current, attempts })
}

/// Per-row undesert and its means by protected group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UndesertReport {
    pub delta: Vec<f64>,
    /// `(s, E[δ | S = s], count)` in increasing order of `s`.
    pub group_means: Vec<(f64, f64, usize)>,
    pub mean: f64,
}

/// `δ = 1(D=1)1(Û<0)|Û| + 1(D=0)1(Û>0)Û`.
pub fn undesert_delta(d: f64, uhat: f64) -> f64 {
    if d == 1.0 && uhat < 0.0 {
        uhat.abs()
    } else if d == 0.0 && uhat > 0.0 {
        uhat
    } else {
        0.0
    }
}

/// `δ = −1(D=1)Û + 1(Û>0)Û`, equal to [`undesert_delta`] for `D ∈ {0, 1}`.
pub fn undesert_delta_alt(d: f64, uhat: f64) -> f64 {
    let act = if d == 1.0 { 1.0 } else { 0.0 };
    let pos = if uhat > 0.0 { uhat } else { 0.0 };
    pos - act * uhat
}

/// Undesert of each row of `data`, where `uhat` is an expression over the
/// dataset's columns and the utility is `1(D=1)·Û`.
pub fn undesert(data: &Dataset, decision: &str, protected: &str, uhat: &Expr) -> Result<UndesertReport> {
    let dcol = data.column(decision)?;
    if let Some(bad) = dcol.iter().find(|d| **d != 0.0 && **d != 1.0) {
        return Err(Error::Validation(format!("undesert needs a 0/1 decision; found decision value {bad}")));
    }
    let scol = data.column(protected)?;
    let names: Vec<&NodeId> = data.names().iter().collect();
    let code = uhat.compile(&|v| names.iter().position(|n| n.as_str() == v))?;
    let cols: Vec<&[f64]> = names.iter().map(|n| data.column(n.as_str())).collect::<Result<_>>()?;
    let mut slots = vec![0.0; cols.len()];
    let mut delta = Vec::with_capacity(data.n());
    for r in 0..data.n() {
        for (s, c) in slots.iter_mut().zip(&cols) {
            *s = c[r];
        }
        delta.push(undesert_delta(dcol[r], code.eval(&slots)));
    }
    let mut groups: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for (s, d) in scol.iter().zip(&delta) {
        let g = groups.entry(s.to_bits()).or_insert((*s, 0.0, 0));
        g.1 += d;
        g.2 += 1;
    }
    let mut group_means: Vec<(f64, f64, usize)> =
        groups.into_values().map(|(s, total, k)| (s, total / k as f64, k)).collect();
    group_means.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(UndesertReport { mean: mean(&delta), delta, group_means })
}

/// Splits a utility of the form `1(D=1)·Û` into `Û`.
pub fn undesert_target(scm: &Scm, utility: &UtilityMechanism) -> Result<Expr> {
    let d = scm.decision().as_str();
    if scm.domain().len() != 2 || !scm.domain().contains(&0.0) || !scm.domain().contains(&1.0) {
        return Err(Error::Validation("undesert needs the decision domain {0, 1}".into()));
    }
    let off = utility.at_decision(d, 0.0);
    if off.as_number() != Some(0.0) {
        return Err(Error::Validation(format!("utility is not of the form 1(D=1)·Û: at D=0 it equals `{off}`")));
    }
    Ok(utility.at_decision(d, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::node_set;
    use crate::scm::NoiseSpec;

    #[test]
    fn undesert_formulas() {
        assert_eq!(undesert_delta(1.0, -2.0), 2.0);
        assert_eq!(undesert_delta(0.0, 3.0), 3.0);
        assert_eq!(undesert_delta(1.0, 5.0), 0.0);
        for d in [0.0, 1.0] {
            for u in [-3.5, -0.0, 0.0, 1e-300, 2.25] {
                assert_eq!(undesert_delta(d, u), undesert_delta_alt(d, u));
            }
        }
    }

    fn grade(alpha: f64) -> (Scm, UtilityMechanism) {
        let scm = Scm::builder()
            .constant("alpha", alpha)
            .discrete("S", NoiseSpec::uniform(&[-1.0, 1.0]))
            .linear("E", &[], 0.0, NoiseSpec::standard_normal())
            .expression("G", "E + alpha * S", &[])
            .decision(&[0.0, 1.0], &["G", "S"])
            .protected("S")
            .build()
            .unwrap();
        let u = UtilityMechanism::parse("indicator(D = 1) * E", scm.constants()).unwrap();
        (scm, u)
    }

    #[test]
    fn grade_voi_analytic() {
        let (scm, u) = grade(1.0);
        let s = NodeId::new("S");
        let v = has_voi(&scm, &u, &s, &node_set(["G"]), &Backend::Analytic, ANALYTIC_TOLERANCE).unwrap();
        assert!(v.has_voi && v.margin > 0.01);
        let v = has_voi(&scm, &u, &s, &node_set(["E"]), &Backend::Analytic, ANALYTIC_TOLERANCE).unwrap();
        assert!(!v.has_voi);
        assert_eq!(v.margin, 0.0);
    }

    #[test]
    fn grade_voi_monte_carlo() {
        let (scm, u) = grade(1.0);
        let s = NodeId::new("S");
        let b = Backend::mc(100_000, 3);
        assert!(has_voi(&scm, &u, &s, &node_set(["G"]), &b, 0.0).unwrap().has_voi);
        assert!(!has_voi(&scm, &u, &s, &node_set(["E"]), &b, 0.0).unwrap().has_voi);
    }

    #[test]
    fn grade_policy_monte_carlo() {
        let (scm, u) = grade(1.0);
        let p = optimal_policy(&scm, &u, &node_set(["G", "S"]), &Backend::mc(200_000, 8)).unwrap();
        for (g, s, want) in [(1.2, 1.0, 1), (0.8, 1.0, 0), (-0.8, -1.0, 1), (-1.2, -1.0, 0)] {
            let value = |v: &str| if v == "G" { g } else { s };
            assert_eq!(p.choose(&value, 0.0), want, "G={g} S={s}");
        }
    }

    #[test]
    fn minimal_set_drops_uninformative_inputs() {
        let (scm, u) = grade(1.0);
        let r = minimal_voi_input_set(&scm, &u, &node_set(["G", "S"]), &Backend::Analytic, ANALYTIC_TOLERANCE).unwrap();
        assert_eq!(r.inputs, node_set(["G", "S"]));
        let c = UtilityMechanism::parse("3", &BTreeMap::new()).unwrap();
        let r = minimal_voi_input_set(&scm, &c, &node_set(["G", "S"]), &Backend::Analytic, ANALYTIC_TOLERANCE).unwrap();
        assert!(r.inputs.is_empty());
        assert!(r.attempts.iter().filter(|a| a.removed).count() == 2);
    }

    #[test]
    fn voi_argument_checks() {
        let (scm, u) = grade(1.0);
        let s = NodeId::new("S");
        assert!(matches!(
            has_voi(&scm, &u, &s, &node_set(["S"]), &Backend::Analytic, 0.0),
            Err(Error::OverlappingSets(_))
        ));
        assert!(Backend::mc(1, 1).config().is_err());
    }

    #[test]
    fn undesert_requires_action_form() {
        let (scm, u) = grade(1.0);
        assert_eq!(undesert_target(&scm, &u).unwrap().to_string(), "E");
        let bad = UtilityMechanism::parse("E + D", &BTreeMap::new()).unwrap();
        assert!(undesert_target(&scm, &bad).is_err());
    }
}
