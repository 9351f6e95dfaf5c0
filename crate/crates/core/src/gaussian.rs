//! Exact representation of conditionally linear-Gaussian models.
//!
//! Discrete noise terms are enumerated into configurations. Within one
//! configuration every node is an affine function of independent standard
//! normal noise terms, so any set of nodes is jointly Gaussian and
//! conditional moments follow from a Schur complement.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{apply_bin, BinOp, Expr};
use crate::graph::{NodeId, NodeSet};
use crate::policy::LinearScore;
use crate::scm::{Mechanism, NoiseSpec, Scm, UtilityMechanism};

/// Largest number of discrete noise configurations enumerated.
pub const MAX_CONFIGURATIONS: usize = 1 << 16;

/// `constant + Σ coefs[k]·z_k` over independent standard normals `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub constant: f64,
    pub coefs: Vec<f64>,
}

impl Affine {
    pub fn constant(c: f64, dim: usize) -> Self {
        Affine { constant: c, coefs: vec![0.0; dim] }
    }

    pub fn is_constant(&self) -> bool {
        self.coefs.iter().all(|c| *c == 0.0)
    }

    pub fn mean(&self) -> f64 {
        self.constant
    }

    pub fn cov(&self, other: &Affine) -> f64 {
        self.coefs.iter().zip(&other.coefs).map(|(a, b)| a * b).sum()
    }

    pub fn var(&self) -> f64 {
        self.cov(self)
    }

    pub fn scale(&self, s: f64) -> Affine {
        Affine { constant: self.constant * s, coefs: self.coefs.iter().map(|c| c * s).collect() }
    }

    pub fn add_scaled(&self, other: &Affine, s: f64) -> Affine {
        Affine {
            constant: self.constant + s * other.constant,
            coefs: self.coefs.iter().zip(&other.coefs).map(|(a, b)| a + s * b).collect(),
        }
    }
}

/// Evaluates an expression to an affine form. Products, quotients and
/// nonlinear functions are allowed only when all but one operand is
/// constant.
pub fn expr_affine(e: &Expr, env: &dyn Fn(&str) -> Option<Affine>, dim: usize) -> Result<Affine> {
    Ok(match e {
        Expr::Num(x) => Affine::constant(*x, dim),
        Expr::Var(v) => env(v).ok_or_else(|| Error::Validation(format!("unbound symbol `{v}`")))?,
        Expr::Neg(a) => expr_affine(a, env, dim)?.scale(-1.0),
        Expr::Bin(op, a, b) => {
            let (x, y) = (expr_affine(a, env, dim)?, expr_affine(b, env, dim)?);
            match op {
                BinOp::Add => x.add_scaled(&y, 1.0),
                BinOp::Sub => x.add_scaled(&y, -1.0),
                BinOp::Mul if x.is_constant() => y.scale(x.constant),
                BinOp::Mul if y.is_constant() => x.scale(y.constant),
                BinOp::Div if y.is_constant() => x.scale(1.0 / y.constant),
                _ if x.is_constant() && y.is_constant() => {
                    Affine::constant(apply_bin(*op, x.constant, y.constant), dim)
                }
                _ => return Err(Error::Unsupported(format!("`{e}` is not linear in the Gaussian noise"))),
            }
        }
        Expr::Cmp(op, a, b) => {
            let (x, y) = (expr_affine(a, env, dim)?, expr_affine(b, env, dim)?);
            if !(x.is_constant() && y.is_constant()) {
                return Err(Error::Unsupported(format!("comparison `{e}` involves Gaussian noise")));
            }
            Affine::constant(if op.apply(x.constant, y.constant) { 1.0 } else { 0.0 }, dim)
        }
        Expr::Call(f, a) => {
            let x = expr_affine(a, env, dim)?;
            if !x.is_constant() {
                return Err(Error::Unsupported(format!("`{e}` is nonlinear in the Gaussian noise")));
            }
            Affine::constant(f.apply(x.constant), dim)
        }
    })
}

/// One assignment of all discrete noise terms.
#[derive(Clone, Debug)]
pub struct Configuration {
    pub prob: f64,
    /// Pre-decision features as affine forms.
    pub values: BTreeMap<NodeId, Affine>,
    /// The utility under each decision of the domain.
    pub utility: Vec<Affine>,
}

/// A noise symbol: the node it belongs to and its name there.
type NoiseKey = (NodeId, String);

/// Enumerated conditionally linear-Gaussian model.
#[derive(Clone, Debug)]
pub struct LgModel {
    pub dim: usize,
    pub configurations: Vec<Configuration>,
}

impl LgModel {
    /// Builds the model. Without a utility, `Configuration::utility` is
    /// empty.
    pub fn new(scm: &Scm, utility: Option<&UtilityMechanism>) -> Result<Self> {
        let order: Vec<NodeId> = scm.topological_order().iter().filter(|v| *v != scm.decision()).cloned().collect();
        let mut gaussian: BTreeMap<NoiseKey, usize> = BTreeMap::new();
        let mut discrete: Vec<(NoiseKey, Vec<(f64, f64)>)> = Vec::new();
        for v in &order {
            let mech = scm.mechanism(v.as_str())?;
            if let Mechanism::QuantileIndicator { .. } = mech {
                return Err(Error::Unsupported(format!("`{v}` uses an empirical quantile")));
            }
            for (sym, spec) in mech.noises() {
                if spec.is_discrete() {
                    discrete.push(((v.clone(), sym), spec.support()));
                } else {
                    let k = gaussian.len();
                    gaussian.insert((v.clone(), sym), k);
                }
            }
        }
        let dim = gaussian.len();
        let mut count: usize = 1;
        for (_, s) in &discrete {
            count = count.saturating_mul(s.len());
            if count > MAX_CONFIGURATIONS {
                return Err(Error::Unsupported(format!(
                    "more than {MAX_CONFIGURATIONS} discrete noise configurations"
                )));
            }
        }

        let descendants = scm.decision_descendants();
        let mut configurations = Vec::with_capacity(count);
        let mut digits = vec![0usize; discrete.len()];
        for _ in 0..count {
            let mut prob = 1.0;
            let mut fixed: BTreeMap<NoiseKey, f64> = BTreeMap::new();
            for (k, ((key, support), &i)) in discrete.iter().zip(&digits).enumerate() {
                let _ = k;
                prob *= support[i].1;
                fixed.insert(key.clone(), support[i].0);
            }
            let noise = |v: &NodeId, sym: &str, spec: &NoiseSpec| -> Affine {
                let key = (v.clone(), sym.to_string());
                match spec {
                    NoiseSpec::Normal { mean, sd } => {
                        let mut a = Affine::constant(*mean, dim);
                        a.coefs[gaussian[&key]] = *sd;
                        a
                    }
                    _ => Affine::constant(fixed[&key], dim),
                }
            };
            let mut values: BTreeMap<NodeId, Affine> = BTreeMap::new();
            for v in order.iter().filter(|v| !descendants.contains(*v)) {
                let a = eval_node(scm, v, &values, &noise, dim)?;
                values.insert(v.clone(), a);
            }
            let mut utils = Vec::new();
            if let Some(u) = utility {
                for &d in scm.domain() {
                    let mut post = values.clone();
                    post.insert(scm.decision().clone(), Affine::constant(d, dim));
                    for v in order.iter().filter(|v| descendants.contains(*v)) {
                        let a = eval_node(scm, v, &post, &noise, dim)?;
                        post.insert(v.clone(), a);
                    }
                    utils.push(expr_affine(u.expr(), &|s| post.get(s).cloned(), dim)?);
                }
            }
            configurations.push(Configuration { prob, values, utility: utils });
            // mixed-radix increment
            for (i, ((_, support), digit)) in discrete.iter().zip(digits.iter_mut()).enumerate() {
                let _ = i;
                *digit += 1;
                if *digit < support.len() {
                    break;
                }
                *digit = 0;
            }
        }
        Ok(LgModel { dim, configurations })
    }
}

fn eval_node(
    scm: &Scm,
    v: &NodeId,
    values: &BTreeMap<NodeId, Affine>,
    noise: &dyn Fn(&NodeId, &str, &NoiseSpec) -> Affine,
    dim: usize,
) -> Result<Affine> {
    let get = |p: &NodeId| values.get(p).cloned().ok_or_else(|| Error::UnknownNode(p.to_string()));
    Ok(match scm.mechanism(v.as_str())? {
        Mechanism::LinearGaussian { weights, intercept, noise: spec } => {
            let mut a = noise(v, crate::scm::EPS, spec);
            a.constant += intercept;
            for (p, w) in weights {
                a = a.add_scaled(&get(p)?, *w);
            }
            a
        }
        Mechanism::DiscreteNoise { noise: spec } => noise(v, crate::scm::EPS, spec),
        Mechanism::Expression { expr, noises } => {
            let env = |s: &str| -> Option<Affine> {
                match noises.get(s) {
                    Some(spec) => Some(noise(v, s, spec)),
                    None => values.get(s).cloned(),
                }
            };
            expr_affine(expr, &env, dim).map_err(|e| match e {
                Error::Unsupported(m) => Error::Unsupported(format!("node `{v}`: {m}")),
                other => other,
            })?
        }
        Mechanism::QuantileIndicator { .. } => {
            return Err(Error::Unsupported(format!("`{v}` uses an empirical quantile")))
        }
    })
}

/// Joint moments of a set of affine forms.
pub(crate) struct Joint {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

pub(crate) fn joint(forms: &[&Affine]) -> Joint {
    let k = forms.len();
    Joint {
        mean: DVector::from_iterator(k, forms.iter().map(|a| a.constant)),
        cov: DMatrix::from_fn(k, k, |i, j| forms[i].cov(forms[j])),
    }
}

/// Linear regression of `target` on `given` within one configuration:
/// `(intercept, slopes, residual variance)`.
pub(crate) fn regress(target: &Affine, given: &[&Affine]) -> Result<(f64, Vec<f64>, f64)> {
    if given.is_empty() {
        return Ok((target.constant, Vec::new(), target.var()));
    }
    let j = joint(given);
    let chol = nalgebra::Cholesky::new(j.cov.clone())
        .ok_or_else(|| Error::SingularCovariance("conditioning variables are linearly dependent".into()))?;
    let scale = j.cov.diagonal().max().max(f64::MIN_POSITIVE);
    if chol.l().diagonal().iter().any(|d| d * d <= 1e-12 * scale) {
        return Err(Error::SingularCovariance("conditioning variables are linearly dependent".into()));
    }
    let c = DVector::from_iterator(given.len(), given.iter().map(|g| target.cov(g)));
    let b = chol.solve(&c);
    let intercept = target.constant - b.dot(&j.mean);
    let resid = (target.var() - b.dot(&c)).max(0.0);
    Ok((intercept, b.iter().copied().collect(), resid))
}

/// Conditional mean (affine in the continuous conditioning variables) and
/// residual variance.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalMoments {
    pub mean: LinearScore,
    pub residual_variance: f64,
}

/// `E[target | given, discrete]` for the linear-Gaussian subclass.
///
/// Every configuration consistent with the discrete assignment must yield
/// the same conditional law; otherwise the conditional mean is a mixture and
/// the call is refused.
pub fn conditional_moments_lg(
    scm: &Scm,
    target: &str,
    given: &NodeSet,
    given_discrete: &BTreeMap<NodeId, f64>,
) -> Result<ConditionalMoments> {
    for v in
        std::iter::once(target).chain(given.iter().map(NodeId::as_str)).chain(given_discrete.keys().map(NodeId::as_str))
    {
        if !scm.is_feature(v) {
            return Err(Error::UnknownNode(v.to_string()));
        }
        if scm.decision_descendants().contains(v) {
            return Err(Error::Unsupported(format!("`{v}` is a descendant of the decision")));
        }
    }
    let model = LgModel::new(scm, None)?;
    let mut result: Option<(f64, Vec<f64>, f64)> = None;
    for cfg in &model.configurations {
        let mut matches = true;
        for (v, x) in given_discrete {
            let a = &cfg.values[v];
            if !a.is_constant() {
                return Err(Error::Unsupported(format!("`{v}` is not discrete")));
            }
            if a.constant != *x {
                matches = false;
                break;
            }
        }
        if !matches {
            continue;
        }
        let forms: Vec<&Affine> = given.iter().map(|v| &cfg.values[v]).collect();
        let r = regress(&cfg.values[target], &forms)?;
        match &result {
            None => result = Some(r),
            Some(prev) => {
                let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
                let same =
                    close(prev.0, r.0) && close(prev.2, r.2) && prev.1.iter().zip(&r.1).all(|(a, b)| close(*a, *b));
                if !same {
                    return Err(Error::Unsupported(
                        "conditional law differs across hidden discrete configurations".into(),
                    ));
                }
            }
        }
    }
    let (intercept, slopes, resid) =
        result.ok_or_else(|| Error::InvalidParameter("discrete assignment has probability zero".into()))?;
    Ok(ConditionalMoments {
        mean: LinearScore { intercept, terms: given.iter().cloned().zip(slopes).collect() },
        residual_variance: resid,
    })
}
