//! Builders for the worked examples.
//!
//! Each builder returns the model, the utility, the essential features and
//! the parameters used. Parameters are passed by name; omitted ones take
//! the defaults listed in [`ExampleId::defaults`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{node_set, NodeSet};
use crate::scm::{NoiseSpec, Scm, UtilityMechanism};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleId {
    /// Hiring with parental status as the protected attribute.
    ParentalStatus,
    /// College admission on grade and group, with a group offset in grades.
    Grade,
    /// A group label without VoI that an optimal policy may still read.
    VoiPolicyAppB,
    /// Hiring for physical work on hair length only.
    Hair,
    /// Grades that are noisier for one group.
    Uncertainty,
    /// The grade example without access to the group.
    UnavailableS,
    /// Grades that hide effort for one group.
    Entangled,
    /// Hiring medical staff with biased evaluations.
    Medical,
    /// Per-applicant college admission model.
    College,
}

impl ExampleId {
    pub const ALL: [ExampleId; 9] = [
        ExampleId::ParentalStatus,
        ExampleId::Grade,
        ExampleId::VoiPolicyAppB,
        ExampleId::Hair,
        ExampleId::Uncertainty,
        ExampleId::UnavailableS,
        ExampleId::Entangled,
        ExampleId::Medical,
        ExampleId::College,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExampleId::ParentalStatus => "parental_status",
            ExampleId::Grade => "grade",
            ExampleId::VoiPolicyAppB => "voi_policy_appB",
            ExampleId::Hair => "hair",
            ExampleId::Uncertainty => "uncertainty",
            ExampleId::UnavailableS => "unavailable_S",
            ExampleId::Entangled => "entangled",
            ExampleId::Medical => "medical",
            ExampleId::College => "college",
        }
    }

    /// Parameter names and default values.
    pub fn defaults(&self) -> &'static [(&'static str, f64)] {
        match self {
            ExampleId::ParentalStatus | ExampleId::VoiPolicyAppB | ExampleId::Entangled => &[],
            ExampleId::Grade | ExampleId::UnavailableS => &[("alpha", 1.0)],
            ExampleId::Hair => &[("theta_s_p", 1.0), ("theta_s_h", 1.0)],
            ExampleId::Uncertainty => &[("p", 0.99), ("var0", 2.0), ("var1", 1.0)],
            ExampleId::Medical => &[
                ("theta_s_np", 1.0),
                ("theta_s_mp", 2.0),
                ("theta_np_n", 3.0),
                ("theta_mp_m", 4.0),
                ("theta_n_u", 5.0),
                ("theta_m_u", 6.0),
            ],
            ExampleId::College => &[("p", 2.0 / 3.0), ("y_noise_sd", 2.0)],
        }
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExampleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExampleId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown example `{s}`")))
    }
}

/// A fully specified example.
#[derive(Clone, Debug)]
pub struct ExampleSpec {
    pub id: ExampleId,
    pub params: BTreeMap<String, f64>,
    pub scm: Scm,
    pub utility: UtilityMechanism,
    pub essential: NodeSet,
}

impl ExampleSpec {
    pub fn decision_inputs(&self) -> &NodeSet {
        self.scm.decision_inputs()
    }
}

/// Builds an example, overriding defaults with `params`.
pub fn build_example(id: ExampleId, params: &BTreeMap<String, f64>) -> Result<ExampleSpec> {
    let mut p: BTreeMap<String, f64> = id.defaults().iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in params {
        if !p.contains_key(k) {
            return Err(Error::InvalidParameter(format!("example `{id}` has no parameter `{k}`")));
        }
        if !v.is_finite() {
            return Err(Error::InvalidParameter(format!("parameter `{k}` must be finite")));
        }
        p.insert(k.clone(), *v);
    }
    let (scm, utility, essential) = match id {
        ExampleId::ParentalStatus => parental_status()?,
        ExampleId::Grade => grade(p["alpha"], true)?,
        ExampleId::UnavailableS => grade(p["alpha"], false)?,
        ExampleId::VoiPolicyAppB => voi_policy()?,
        ExampleId::Hair => hair(p["theta_s_p"], p["theta_s_h"])?,
        ExampleId::Uncertainty => uncertainty(p["p"], p["var0"], p["var1"])?,
        ExampleId::Entangled => entangled()?,
        ExampleId::Medical => medical([
            p["theta_s_np"],
            p["theta_s_mp"],
            p["theta_np_n"],
            p["theta_mp_m"],
            p["theta_n_u"],
            p["theta_m_u"],
        ])?,
        ExampleId::College => college(p["p"], p["y_noise_sd"])?,
    };
    Ok(ExampleSpec { id, params: p, scm, utility, essential })
}

/// Builds an example with default parameters.
pub fn example(id: ExampleId) -> ExampleSpec {
    build_example(id, &BTreeMap::new()).expect("defaults are valid")
}

type Built = (Scm, UtilityMechanism, NodeSet);

fn n01() -> NoiseSpec {
    NoiseSpec::standard_normal()
}

fn utility(scm: &Scm, text: &str) -> Result<UtilityMechanism> {
    let u = UtilityMechanism::parse(text, scm.constants())?;
    scm.validate_utility(&u)?;
    Ok(u)
}

/// Unit-weight linear model for the parental-status hiring example:
/// unknown factors `H`, qualifications `Qual`, parental status
/// `P = 1(H + ε > 0)` (Bernoulli(1/2)), application material `A`, quality of
/// work `Q`, work hours `W`, and `U = D·Q·W`.
pub fn parental_status() -> Result<Built> {
    let scm = Scm::builder()
        .linear("H", &[], 0.0, n01())
        .linear("Qual", &[("H", 1.0)], 0.0, n01())
        .expression("P", "indicator(H + e > 0)", &[("e", n01())])
        .linear("A", &[("H", 1.0), ("Qual", 1.0), ("P", 1.0)], 0.0, n01())
        .linear("Q", &[("Qual", 1.0)], 0.0, n01())
        .linear("W", &[("P", 1.0)], 0.0, n01())
        .decision(&[0.0, 1.0], &["A"])
        .protected("P")
        .build()?;
    let u = utility(&scm, "D * Q * W")?;
    Ok((scm, u, node_set(["Q"])))
}

/// The modified utility `D·Q` of the parental-status example.
pub fn parental_status_modified_utility() -> UtilityMechanism {
    UtilityMechanism::parse("D * Q", &BTreeMap::new()).expect("valid")
}

/// A completion of the footnote utility `Q·W + D`, under which parental
/// status has no VoI relative to `{Q}`.
pub fn parental_status_footnote_utility() -> UtilityMechanism {
    UtilityMechanism::parse("Q * W + D", &BTreeMap::new()).expect("valid")
}

fn grade(alpha: f64, with_s: bool) -> Result<Built> {
    if alpha == 0.0 {
        return Err(Error::InvalidParameter("alpha must be nonzero".into()));
    }
    let inputs: &[&str] = if with_s { &["Grade", "S"] } else { &["Grade"] };
    let scm = Scm::builder()
        .constant("alpha", alpha)
        .discrete("S", NoiseSpec::uniform(&[-1.0, 1.0]))
        .linear("Effort", &[], 0.0, n01())
        .expression("Grade", "Effort + alpha * S", &[])
        .decision(&[0.0, 1.0], inputs)
        .protected("S")
        .build()?;
    let u = utility(&scm, "indicator(D = 1) * Effort")?;
    Ok((scm, u, node_set(["Effort"])))
}

fn voi_policy() -> Result<Built> {
    let scm = Scm::builder()
        .discrete("S", NoiseSpec::uniform(&[0.0, 1.0]))
        .linear("Effort", &[], 0.0, n01())
        .decision(&[0.0, 1.0], &["S"])
        .protected("S")
        .build()?;
    let u = utility(&scm, "indicator(D = 1) * Effort")?;
    Ok((scm, u, node_set(["Effort"])))
}

fn hair(theta_p: f64, theta_h: f64) -> Result<Built> {
    if !(theta_p > 0.0 && theta_h > 0.0) {
        return Err(Error::InvalidParameter("hair example effects must be positive".into()));
    }
    let scm = Scm::builder()
        .discrete("S", NoiseSpec::uniform(&[-1.0, 1.0]))
        .linear("P", &[("S", theta_p)], 0.0, n01())
        .linear("H", &[("S", theta_h)], 0.0, n01())
        .decision(&[0.0, 1.0], &["H"])
        .protected("S")
        .build()?;
    let u = utility(&scm, "indicator(D = 1) * P")?;
    Ok((scm, u, node_set(["P"])))
}

fn uncertainty(p: f64, var0: f64, var1: f64) -> Result<Built> {
    if !(p > 0.0 && p < 1.0 && var0 > 0.0 && var1 > 0.0) {
        return Err(Error::InvalidParameter("need 0 < p < 1 and positive grade noise variances".into()));
    }
    let scm = Scm::builder()
        .constant("sd0", var0.sqrt())
        .constant("sd1", var1.sqrt())
        .discrete("S", NoiseSpec::Bernoulli { p })
        .linear("M", &[], 0.0, n01())
        .expression(
            "G",
            "indicator(S = 0) * (M + sd0 * e0) + indicator(S = 1) * (M + sd1 * e1)",
            &[("e0", n01()), ("e1", n01())],
        )
        .decision(&[0.0, 1.0], &["G", "S"])
        .protected("S")
        .build()?;
    let u = utility(&scm, "indicator(D = 1) * (M - 1)")?;
    Ok((scm, u, node_set(["M"])))
}

fn entangled() -> Result<Built> {
    let scm = Scm::builder()
        .discrete("S", NoiseSpec::uniform(&[-1.0, 1.0]))
        .discrete("Effort", NoiseSpec::uniform(&[-1.0, 1.0]))
        .expression(
            "Grade",
            "indicator(S = 1) * Effort + indicator(S = -1) * indicator(Effort > 0) * (-Effort) \
             + indicator(S = -1) * indicator(Effort <= 0) * Effort",
            &[],
        )
        .decision(&[0.0, 1.0], &["Grade", "S"])
        .protected("S")
        .build()?;
    let u = utility(&scm, "indicator(D = 1) * Effort")?;
    Ok((scm, u, node_set(["Effort"])))
}

/// The medical-staff model. `theta` holds the effects of `S` on `N'` and on
/// `M'`, of `N'` on `N`, of `M'` on `M`, and of `N` and `M` on the utility.
pub fn medical(theta: [f64; 6]) -> Result<Built> {
    if theta.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidParameter("medical effects must be positive".into()));
    }
    let [s_np, s_mp, np_n, mp_m, n_u, m_u] = theta;
    let scm = Scm::builder()
        .constant("theta_N", n_u)
        .constant("theta_M", m_u)
        .discrete("S", NoiseSpec::uniform(&[-1.0, 1.0]))
        .linear("Mp", &[("S", s_mp)], 0.0, n01())
        .linear("Np", &[("S", s_np)], 0.0, n01())
        .linear("M", &[("Mp", mp_m)], 0.0, n01())
        .linear("N", &[("Np", np_n)], 0.0, n01())
        .decision(&[0.0, 1.0], &["Mp", "Np", "S"])
        .protected("S")
        .build()?;
    let u = utility(&scm, "indicator(D=1)*(theta_N*N + theta_M*M)")?;
    Ok((scm, u, node_set(["M"])))
}

/// The family `1(D=1)(w₁S + w₂N + w₃M)` searched for the medical example.
pub fn medical_family() -> crate::fairness::UtilityFamily {
    crate::fairness::UtilityFamily::parse(&["indicator(D = 1) * S", "indicator(D = 1) * N", "indicator(D = 1) * M"])
        .expect("valid")
}

/// One applicant of the college model. `Y` is the indicator that the latent
/// `Ystar` exceeds its empirical 0.7-quantile over the sample.
fn college(p: f64, y_sd: f64) -> Result<Built> {
    if !(p > 0.0 && p < 1.0 && y_sd > 0.0) {
        return Err(Error::InvalidParameter("need 0 < p < 1 and a positive noise scale".into()));
    }
    let scm = Scm::builder()
        .discrete("S", NoiseSpec::Bernoulli { p })
        .expression("Sstar", "indicator(S = 1) - indicator(S = 0)", &[])
        .linear("E", &[], 0.0, n01())
        .expression("T", "E + eT * Sstar", &[("eT", NoiseSpec::normal(0.3, 1.0))])
        .expression("R", "E + eR * Sstar", &[("eR", NoiseSpec::normal(1.0, 1.0))])
        .linear("Ystar", &[("E", 1.0), ("R", 0.5), ("T", 0.5)], 0.0, NoiseSpec::normal(0.0, y_sd))
        .quantile_indicator("Y", "Ystar", 0.7)
        .decision(&[0.0, 1.0], &["S", "T", "R"])
        .protected("S")
        .build()?;
    let u = utility(&scm, "D * Y")?;
    Ok((scm, u, node_set(["T"])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edges(spec: &ExampleSpec) -> Vec<(String, String)> {
        spec.scm
            .induced_graph(&spec.utility)
            .unwrap()
            .edges()
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    fn expect(list: &[(&str, &str)]) -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = list.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        v.sort();
        v
    }

    #[test]
    fn every_example_builds() {
        for id in ExampleId::ALL {
            let spec = example(id);
            assert_eq!(spec.id.as_str().parse::<ExampleId>().unwrap(), id);
            spec.scm.induced_graph(&spec.utility).unwrap();
        }
    }

    #[test]
    fn graphs_match_figures() {
        let mut got = edges(&example(ExampleId::ParentalStatus));
        got.sort();
        assert_eq!(
            got,
            expect(&[
                ("A", "D"),
                ("D", "U"),
                ("H", "A"),
                ("H", "P"),
                ("H", "Qual"),
                ("P", "A"),
                ("P", "W"),
                ("Q", "U"),
                ("Qual", "A"),
                ("Qual", "Q"),
                ("W", "U"),
            ])
        );
        let mut got = edges(&example(ExampleId::Grade));
        got.sort();
        assert_eq!(
            got,
            expect(&[("D", "U"), ("Effort", "Grade"), ("Effort", "U"), ("Grade", "D"), ("S", "D"), ("S", "Grade")])
        );
        let mut got = edges(&example(ExampleId::Medical));
        got.sort();
        assert_eq!(
            got,
            expect(&[
                ("D", "U"),
                ("M", "U"),
                ("Mp", "D"),
                ("Mp", "M"),
                ("N", "U"),
                ("Np", "D"),
                ("Np", "N"),
                ("S", "D"),
                ("S", "Mp"),
                ("S", "Np"),
            ])
        );
        let mut got = edges(&example(ExampleId::Hair));
        got.sort();
        assert_eq!(got, expect(&[("D", "U"), ("H", "D"), ("P", "U"), ("S", "H"), ("S", "P")]));
        let mut got = edges(&example(ExampleId::VoiPolicyAppB));
        got.sort();
        assert_eq!(got, expect(&[("D", "U"), ("Effort", "U"), ("S", "D")]));
    }

    #[test]
    fn college_utility_reads_outcome_only() {
        let spec = example(ExampleId::College);
        let g = spec.scm.induced_graph(&spec.utility).unwrap();
        assert_eq!(g.parents("U").unwrap(), node_set(["D", "Y"]));
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let bad = |id, k: &str, v| build_example(id, &BTreeMap::from([(k.to_string(), v)])).is_err();
        assert!(bad(ExampleId::Grade, "alpha", 0.0));
        assert!(bad(ExampleId::Grade, "beta", 1.0));
        assert!(bad(ExampleId::Uncertainty, "p", 1.5));
        assert!(bad(ExampleId::Medical, "theta_n_u", -1.0));
        assert!("nope".parse::<ExampleId>().is_err());
    }
}
