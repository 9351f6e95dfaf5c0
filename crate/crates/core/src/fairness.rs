//! Fairness audits of utilities and corresponding fair utilities.
//!
//! A utility is fair relative to essential features `F` when the protected
//! attribute has no value of information relative to `F`. A corresponding
//! fair utility is the member of a parametric family closest to the
//! original utility, in expected squared distance under the always-act
//! policy, among the fair members of the family.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse_expression, BinOp, Expr};
use crate::graph::NodeSet;
use crate::policy::Policy;
use crate::policy_opt::{has_voi, Backend, BackendKind, VoiVerdict};
use crate::regression::ols;
use crate::sample::{sample, Dataset};
use crate::scm::{Scm, UtilityMechanism};

/// How an audit reached its verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditPath {
    /// The utility reads only essential features and the decision.
    EssentialInputsOnly,
    /// The graph does not admit VoI for the protected attribute.
    Graphical,
    /// A numeric VoI test.
    Numeric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub fair: bool,
    pub path: AuditPath,
    pub protected: String,
    pub essential: NodeSet,
    /// Present when a numeric test ran.
    pub verdict: Option<VoiVerdict>,
}

impl AuditReport {
    pub fn backend(&self) -> Option<BackendKind> {
        self.verdict.as_ref().map(|v| v.backend)
    }
}

/// Whether `utility` is fair relative to the essential features `f`.
pub fn is_voi_fair(
    scm: &Scm,
    utility: &UtilityMechanism,
    f: &NodeSet,
    backend: &Backend,
    tol: f64,
) -> Result<AuditReport> {
    let s = scm.protected().clone();
    if f.contains(&s) {
        return Err(Error::OverlappingSets(format!("protected attribute `{s}` is among the essential features")));
    }
    scm.check_policy_inputs(f)?;
    scm.validate_utility(utility)?;
    let report =
        |fair, path, verdict| AuditReport { fair, path, protected: s.to_string(), essential: f.clone(), verdict };
    if utility.parents().iter().all(|v| v == scm.decision() || f.contains(v)) {
        return Ok(report(true, AuditPath::EssentialInputsOnly, None));
    }
    let graph = scm.induced_graph(utility)?;
    if !graph.admits_voi(&s, f)? {
        return Ok(report(true, AuditPath::Graphical, None));
    }
    let verdict = has_voi(scm, utility, &s, f, backend, tol)?;
    Ok(report(!verdict.has_voi, AuditPath::Numeric, Some(verdict)))
}

/// A linear family `Σ w_j t_j` of utilities over fixed basis terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FamilyFile", into = "FamilyFile")]
pub struct UtilityFamily {
    terms: Vec<Expr>,
}

#[derive(Serialize, Deserialize)]
struct FamilyFile {
    terms: Vec<String>,
}

impl TryFrom<FamilyFile> for UtilityFamily {
    type Error = Error;

    fn try_from(file: FamilyFile) -> Result<Self> {
        let texts: Vec<&str> = file.terms.iter().map(String::as_str).collect();
        UtilityFamily::parse(&texts)
    }
}

impl From<UtilityFamily> for FamilyFile {
    fn from(f: UtilityFamily) -> Self {
        FamilyFile { terms: f.terms.iter().map(ToString::to_string).collect() }
    }
}

impl UtilityFamily {
    pub fn parse(terms: &[&str]) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidParameter("a utility family needs at least one term".into()));
        }
        let terms = terms.iter().map(|t| parse_expression(t)).collect::<Result<_>>()?;
        Ok(UtilityFamily { terms })
    }

    pub fn terms(&self) -> &[Expr] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `Σ w_j t_j` with the model's constants bound.
    pub fn instantiate(&self, scm: &Scm, w: &[f64]) -> Result<UtilityMechanism> {
        if w.len() != self.terms.len() {
            return Err(Error::InvalidParameter(format!("{} weights for {} terms", w.len(), self.terms.len())));
        }
        let mut acc: Option<Expr> = None;
        for (t, wj) in self.terms.iter().zip(w) {
            let term = Expr::Bin(BinOp::Mul, Box::new(Expr::Num(*wj)), Box::new(t.clone()));
            acc = Some(match acc {
                None => term,
                Some(a) => Expr::Bin(BinOp::Add, Box::new(a), Box::new(term)),
            });
        }
        let expr = acc.expect("non-empty family").bind(scm.constants());
        let u = UtilityMechanism::from_expr(expr);
        scm.validate_utility(&u)?;
        Ok(u)
    }

    fn bound_terms(&self, scm: &Scm) -> Result<Vec<UtilityMechanism>> {
        self.terms
            .iter()
            .map(|t| {
                let u = UtilityMechanism::from_expr(t.bind(scm.constants()));
                scm.validate_utility(&u)?;
                Ok(u)
            })
            .collect()
    }
}

/// The single decision at which the utility and all family terms may be
/// nonzero; squared differences then vanish at every other decision, so
/// the worst case over policies is attained by always taking it.
pub fn active_decision(scm: &Scm, utility: &UtilityMechanism, family: &UtilityFamily) -> Result<usize> {
    let d = scm.decision().as_str();
    let terms = family.bound_terms(scm)?;
    let vanishes = |v: f64| {
        utility.at_decision(d, v).as_number() == Some(0.0)
            && terms.iter().all(|t| t.at_decision(d, v).as_number() == Some(0.0))
    };
    let active: Vec<usize> = (0..scm.domain().len()).filter(|&i| !vanishes(scm.domain()[i])).collect();
    match active.as_slice() {
        [i] => Ok(*i),
        _ => Err(Error::Unsupported(
            "the utility and family must vanish at every decision but one; \
             the worst case over general policies is not computed"
                .into(),
        )),
    }
}

/// Data for the penalty losses: basis terms and the original utility
/// evaluated on a sample under the always-act policy.
#[derive(Clone, Debug)]
pub struct PenaltyDesign {
    /// Rows of `A` with `L1(w) = |A w|²`.
    pub a: DMatrix<f64>,
    /// `TᵀT / n`
    pub gram: DMatrix<f64>,
    /// `Tᵀu / n`
    pub cross: DVector<f64>,
    /// `mean(u²)`
    pub u2: f64,
}

impl PenaltyDesign {
    pub fn l1(&self, w: &[f64]) -> f64 {
        (&self.a * DVector::from_column_slice(w)).norm_squared()
    }

    pub fn l2(&self, w: &[f64]) -> f64 {
        let w = DVector::from_column_slice(w);
        (w.dot(&(&self.gram * &w)) - 2.0 * w.dot(&self.cross) + self.u2).max(0.0)
    }

    /// Minimizer of `K·L1 + L2`.
    pub fn minimize(&self, k: f64) -> Result<Vec<f64>> {
        let h = &self.a.transpose() * &self.a * k + &self.gram;
        let chol = nalgebra::Cholesky::new(h)
            .ok_or_else(|| Error::RankDeficient("family terms are linearly dependent on the sample".into()))?;
        Ok(chol.solve(&self.cross).iter().copied().collect())
    }
}

fn eval_column(data: &Dataset, u: &UtilityMechanism) -> Result<Vec<f64>> {
    let names = data.names();
    let code = u.expr().compile(&|v| names.iter().position(|n| n.as_str() == v))?;
    let cols: Vec<&[f64]> = names.iter().map(|n| data.column(n.as_str())).collect::<Result<_>>()?;
    let mut slots = vec![0.0; cols.len()];
    let mut stack = Vec::new();
    Ok((0..data.n())
        .map(|r| {
            for (s, c) in slots.iter_mut().zip(&cols) {
                *s = c[r];
            }
            code.eval_with(&slots, &mut stack)
        })
        .collect())
}

/// Builds the quadratic penalty losses from a sample under the always-act
/// policy. `L1` is the squared difference of the regression coefficients of
/// `U_w` on `[1, F]` and on `[1, F, S]`, plus the squared coefficient of
/// `S`; `L2` is the mean squared difference between `U` and `U_w`.
pub fn penalty_design(
    scm: &Scm,
    utility: &UtilityMechanism,
    family: &UtilityFamily,
    data: &Dataset,
    f: &NodeSet,
) -> Result<PenaltyDesign> {
    let s = scm.protected();
    if f.contains(s) {
        return Err(Error::OverlappingSets(format!("protected attribute `{s}` is among the essential features")));
    }
    let terms = family.bound_terms(scm)?;
    let n = data.n() as f64;
    let t: Vec<Vec<f64>> = terms.iter().map(|u| eval_column(data, u)).collect::<Result<_>>()?;
    let u = eval_column(data, utility)?;
    let fcols: Vec<&[f64]> = f.iter().map(|v| data.column(v.as_str())).collect::<Result<_>>()?;
    let mut fs = fcols.clone();
    fs.push(data.column(s.as_str())?);

    let k = terms.len();
    let p = fcols.len() + 1;
    let mut a = DMatrix::zeros(p + 1, k);
    for (j, tj) in t.iter().enumerate() {
        let small = ols(&fcols, tj)?;
        let large = ols(&fs, tj)?;
        for i in 0..p {
            a[(i, j)] = small.coefficients[i] - large.coefficients[i];
        }
        a[(p, j)] = large.coefficients[p];
    }
    let gram = DMatrix::from_fn(k, k, |i, j| t[i].iter().zip(&t[j]).map(|(x, y)| x * y).sum::<f64>() / n);
    let cross = DVector::from_fn(k, |i, _| t[i].iter().zip(&u).map(|(x, y)| x * y).sum::<f64>() / n);
    let u2 = u.iter().map(|x| x * x).sum::<f64>() / n;
    Ok(PenaltyDesign { a, gram, cross, u2 })
}

/// `(L1, L2)` at `w` on a sample under the always-act policy.
pub fn penalty_losses(
    scm: &Scm,
    utility: &UtilityMechanism,
    family: &UtilityFamily,
    w: &[f64],
    data: &Dataset,
    f: &NodeSet,
) -> Result<(f64, f64)> {
    let design = penalty_design(scm, utility, family, data, f)?;
    if w.len() != family.len() {
        return Err(Error::InvalidParameter(format!("{} weights for {} terms", w.len(), family.len())));
    }
    Ok((design.l1(w), design.l2(w)))
}

/// Largest number of penalty doublings.
pub const MAX_DOUBLINGS: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairUtilityResult {
    pub w: Vec<f64>,
    pub l1: f64,
    pub l2: f64,
    pub penalty_k: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The decision index at which the utilities are compared.
    pub active_decision: usize,
    pub n: usize,
    pub seed: u64,
}

/// The penalty method on a sample of `n` rows under the always-act policy:
/// minimize `K·L1 + L2` exactly, doubling `K` from 1 until `L1 ≤ eps`.
pub fn corresponding_fair_utility(
    scm: &Scm,
    utility: &UtilityMechanism,
    f: &NodeSet,
    family: &UtilityFamily,
    n: usize,
    seed: u64,
    eps: f64,
) -> Result<FairUtilityResult> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {eps}")));
    }
    scm.check_policy_inputs(f)?;
    scm.validate_utility(utility)?;
    let active = active_decision(scm, utility, family)?;
    let data = sample(scm, utility, &Policy::constant(active, scm.domain().len()), n, seed)?;
    let design = penalty_design(scm, utility, family, &data, f)?;
    let mut k = 1.0;
    for iterations in 1..=MAX_DOUBLINGS + 1 {
        let w = design.minimize(k)?;
        let l1 = design.l1(&w);
        if l1 <= eps {
            let l2 = design.l2(&w);
            return Ok(FairUtilityResult {
                w,
                l1,
                l2,
                penalty_k: k,
                iterations,
                converged: true,
                active_decision: active,
                n,
                seed,
            });
        }
        k *= 2.0;
    }
    Err(Error::NonConvergence(format!("fairness penalty still above {eps} after {MAX_DOUBLINGS} doublings")))
}

/// Closed-form corresponding fair weights `(w_S, w_N, w_M)` for the
/// medical-staff family `1(D=1)(w_S S + w_N N + w_M M)`. The parameters are
/// the effects of `S` on `N'` and on `M'`, of `N'` on `N`, of `M'` on `M`,
/// and of `N` and `M` on the utility, in that order. A zero effect of `S`
/// on `N'` (no bias) is allowed.
pub fn closed_form_fair_utility_medical(theta: [f64; 6]) -> Result<[f64; 3]> {
    if theta.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidParameter("medical parameters must be non-negative and finite".into()));
    }
    let [s_n, s_m, np_n, mp_m, u_n, u_m] = theta;
    let cov_nm = np_n * s_n * mp_m * s_m;
    let var_m = (mp_m * s_m).powi(2) + mp_m.powi(2) + 1.0;
    let w_n = u_n;
    let w_m = u_m + cov_nm * u_n / var_m;
    let w_s = -w_n * s_n * np_n;
    Ok([w_s, w_n, w_m])
}
