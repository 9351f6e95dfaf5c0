//! Exact expected utilities and optimal policies for linear-Gaussian models.
//!
//! Within a configuration a policy is evaluated along a single Gaussian
//! direction `ℓ ~ N(0, 1)`; each interval of `ℓ` on which the decision is
//! fixed contributes `E[U_d 1(a < ℓ < b)] = μ_d[Φ(b) − Φ(a)] + c_d[φ(a) − φ(b)]`
//! with `c_d = cov(U_d, ℓ)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gaussian::{joint, regress, Affine, Configuration, LgModel};
use crate::graph::{NodeId, NodeSet};
use crate::policy::{rule_from_scores, stratify, DecisionRule, LinearScore, MixtureComponent, Policy, Score};
use crate::scm::{Scm, UtilityMechanism};
use crate::stats::{norm_cdf, norm_pdf, norm_sf};

const GRID_HALF_WIDTH: f64 = 12.0;
const GRID_CELLS: usize = 2048;
const BISECTIONS: usize = 80;

/// Exact `E[U]` under `policy`.
pub fn expected_utility(scm: &Scm, utility: &UtilityMechanism, policy: &Policy) -> Result<f64> {
    scm.check_policy_inputs(&policy.inputs)?;
    scm.validate_utility(utility)?;
    let model = LgModel::new(scm, Some(utility))?;
    let n = scm.domain().len();
    let parts = model
        .configurations
        .iter()
        .map(|cfg| Ok(cfg.prob * configuration_value(cfg, &policy.rule, n)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.iter().sum())
}

fn mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        norm_sf(a) - norm_sf(b)
    } else {
        norm_cdf(b) - norm_cdf(a)
    }
}

fn density(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        norm_pdf(x)
    }
}

/// `E[u · 1(a < ℓ < b)]` for `ℓ = dir·z`, `|dir| = 1`.
fn piece(u: &Affine, dir: &[f64], a: f64, b: f64) -> f64 {
    let c: f64 = u.coefs.iter().zip(dir).map(|(x, y)| x * y).sum();
    u.constant * mass(a, b) + c * (density(a) - density(b))
}

fn resolve<'r>(rule: &'r DecisionRule, cfg: &Configuration) -> &'r DecisionRule {
    match rule {
        DecisionRule::Stratified { by, branches, fallback } => {
            let key: Option<Vec<f64>> =
                by.iter().map(|v| cfg.values.get(v).filter(|a| a.is_constant()).map(|a| a.constant)).collect();
            match key {
                Some(key) => {
                    let next = branches.iter().find(|(k, _)| *k == key).map_or(fallback.as_ref(), |(_, r)| r);
                    resolve(next, cfg)
                }
                None => rule,
            }
        }
        _ => rule,
    }
}

fn score_form(score: &LinearScore, cfg: &Configuration, dim: usize) -> Result<Affine> {
    let mut a = Affine::constant(score.intercept, dim);
    for (v, c) in &score.terms {
        let x = cfg.values.get(v).ok_or_else(|| Error::UnknownNode(v.to_string()))?;
        a = a.add_scaled(x, *c);
    }
    Ok(a)
}

/// Expected utility of a "choose `hi` iff `form ≥ cut`" rule (strictness
/// is irrelevant unless `form` is degenerate).
fn threshold_value(cfg: &Configuration, form: &Affine, cut: f64, lo: usize, hi: usize, strict: bool) -> f64 {
    let sd = form.var().sqrt();
    if sd == 0.0 {
        let above = if strict { form.constant > cut } else { form.constant >= cut };
        return cfg.utility[if above { hi } else { lo }].constant;
    }
    let dir: Vec<f64> = form.coefs.iter().map(|c| c / sd).collect();
    let k = (cut - form.constant) / sd;
    piece(&cfg.utility[lo], &dir, f64::NEG_INFINITY, k) + piece(&cfg.utility[hi], &dir, k, f64::INFINITY)
}

fn configuration_value(cfg: &Configuration, rule: &DecisionRule, n: usize) -> Result<f64> {
    let dim = cfg.utility.first().map_or(0, |u| u.coefs.len());
    let rule = resolve(rule, cfg);
    match rule {
        DecisionRule::Constant { probs } => {
            return Ok(probs.iter().zip(&cfg.utility).map(|(p, u)| p * u.constant).sum());
        }
        DecisionRule::Threshold { score, cut, below, at_or_above } => {
            let form = score_form(score, cfg, dim)?;
            return Ok(threshold_value(cfg, &form, *cut, *below, *at_or_above, false));
        }
        DecisionRule::ScoreArgmax { scores } if n == 2 => {
            if let (Score::Affine { score: s0 }, Score::Affine { score: s1 }) = (&scores[0], &scores[1]) {
                let form = score_form(&s1.sub(s0), cfg, dim)?;
                return Ok(threshold_value(cfg, &form, 0.0, 0, 1, true));
            }
        }
        _ => {}
    }

    let inputs: Vec<NodeId> = rule.nodes().into_iter().collect();
    let mut forms = Vec::with_capacity(inputs.len());
    for v in &inputs {
        forms.push(cfg.values.get(v).ok_or_else(|| Error::UnknownNode(v.to_string()))?);
    }
    let dir = match forms.iter().find(|a| !a.is_constant()) {
        None => {
            let lookup = |v: &str| forms[inputs.iter().position(|x| x.as_str() == v).unwrap()].constant;
            let probs = rule.distribution(&lookup, n);
            return Ok(probs.iter().zip(&cfg.utility).map(|(p, u)| p * u.constant).sum());
        }
        Some(a) => {
            let norm = a.var().sqrt();
            a.coefs.iter().map(|c| c / norm).collect::<Vec<f64>>()
        }
    };
    let mut slopes = Vec::with_capacity(forms.len());
    for a in &forms {
        let s: f64 = a.coefs.iter().zip(&dir).map(|(x, y)| x * y).sum();
        let resid = (a.var() - s * s).max(0.0);
        if resid > 1e-12 * a.var() {
            return Err(Error::Unsupported(
                "policy inputs span more than one Gaussian direction; use the Monte Carlo backend".into(),
            ));
        }
        slopes.push(s);
    }
    let decide = |l: f64| -> Vec<f64> {
        let lookup = |v: &str| {
            let i = inputs.iter().position(|x| x.as_str() == v).unwrap();
            forms[i].constant + slopes[i] * l
        };
        rule.distribution(&lookup, n)
    };

    let step = 2.0 * GRID_HALF_WIDTH / GRID_CELLS as f64;
    let mut cuts = vec![f64::NEG_INFINITY];
    let mut dists = vec![decide(-GRID_HALF_WIDTH)];
    let mut prev_x = -GRID_HALF_WIDTH;
    for i in 1..=GRID_CELLS {
        let x = -GRID_HALF_WIDTH + step * i as f64;
        let d = decide(x);
        if d != *dists.last().unwrap() {
            let (mut lo, mut hi) = (prev_x, x);
            let left = dists.last().unwrap().clone();
            for _ in 0..BISECTIONS {
                let mid = 0.5 * (lo + hi);
                if decide(mid) == left {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            cuts.push(0.5 * (lo + hi));
            dists.push(d);
        }
        prev_x = x;
    }
    cuts.push(f64::INFINITY);
    let mut total = 0.0;
    for (i, probs) in dists.iter().enumerate() {
        for (p, u) in probs.iter().zip(&cfg.utility) {
            if *p > 0.0 {
                total += p * piece(u, &dir, cuts[i], cuts[i + 1]);
            }
        }
    }
    Ok(total)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()))
}

fn same_vec(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(*x, *y))
}

struct Component {
    prob: f64,
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    /// Per decision: intercept and slopes on the continuous inputs.
    values: Vec<(f64, Vec<f64>)>,
}

/// The exact optimal policy with inputs `inputs` (ties to the lowest
/// decision index).
pub fn optimal_policy(scm: &Scm, utility: &UtilityMechanism, inputs: &NodeSet) -> Result<Policy> {
    scm.check_policy_inputs(inputs)?;
    scm.validate_utility(utility)?;
    let model = LgModel::new(scm, Some(utility))?;
    let n = scm.domain().len();
    let (discrete, continuous): (Vec<NodeId>, Vec<NodeId>) =
        inputs.iter().cloned().partition(|v| scm.is_discrete(v.as_str()));

    let mut groups: Vec<(Vec<f64>, Vec<Component>)> = Vec::new();
    for cfg in &model.configurations {
        let mut key = Vec::with_capacity(discrete.len());
        for v in &discrete {
            let a = &cfg.values[v];
            if !a.is_constant() {
                return Err(Error::Unsupported(format!("`{v}` is not discrete")));
            }
            key.push(a.constant);
        }
        let forms: Vec<&Affine> = continuous.iter().map(|v| &cfg.values[v]).collect();
        if let Some(i) = forms.iter().position(|a| a.var() == 0.0) {
            return Err(Error::Unsupported(format!(
                "`{}` is degenerate in some discrete configuration",
                continuous[i]
            )));
        }
        let j = joint(&forms);
        let values = cfg.utility.iter().map(|u| regress(u, &forms).map(|(a, b, _)| (a, b))).collect::<Result<_>>()?;
        let comp = Component { prob: cfg.prob, mean: j.mean.iter().copied().collect(), cov: j.cov, values };
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, list)) => list.push(comp),
            None => groups.push((key, vec![comp])),
        }
    }

    let branches = groups
        .into_iter()
        .map(|(key, comps)| Ok((key, rule_from_scores(group_scores(&continuous, comps, n)?))))
        .collect::<Result<Vec<_>>>()?;
    let rule = stratify(discrete, branches, n);
    Policy::new(inputs.clone(), rule, n)
}

fn linear(intercept: f64, vars: &[NodeId], slopes: &[f64]) -> LinearScore {
    LinearScore { intercept, terms: vars.iter().cloned().zip(slopes.iter().copied()).collect() }
}

fn group_scores(vars: &[NodeId], comps: Vec<Component>, n: usize) -> Result<Vec<Score>> {
    let total: f64 = comps.iter().map(|c| c.prob).sum();
    let shared_law =
        comps.iter().all(|c| same_vec(&c.mean, &comps[0].mean) && same_vec(c.cov.as_slice(), comps[0].cov.as_slice()));
    let mut scores = Vec::with_capacity(n);
    for d in 0..n {
        let shared_value = comps
            .iter()
            .all(|c| close(c.values[d].0, comps[0].values[d].0) && same_vec(&c.values[d].1, &comps[0].values[d].1));
        if shared_value {
            let (a, b) = &comps[0].values[d];
            scores.push(Score::Affine { score: linear(*a, vars, b) });
        } else if shared_law {
            let mut a = 0.0;
            let mut b = vec![0.0; vars.len()];
            for c in &comps {
                let w = c.prob / total;
                a += w * c.values[d].0;
                for (bi, ci) in b.iter_mut().zip(&c.values[d].1) {
                    *bi += w * ci;
                }
            }
            scores.push(Score::Affine { score: linear(a, vars, &b) });
        } else {
            scores.push(mixture(vars, &comps, d)?);
        }
    }
    Ok(scores)
}

fn mixture(vars: &[NodeId], comps: &[Component], d: usize) -> Result<Score> {
    let mut merged: Vec<(f64, &Component)> = Vec::new();
    for c in comps {
        let same = |m: &&mut (f64, &Component)| {
            let o = m.1;
            same_vec(&o.mean, &c.mean)
                && same_vec(o.cov.as_slice(), c.cov.as_slice())
                && close(o.values[d].0, c.values[d].0)
                && same_vec(&o.values[d].1, &c.values[d].1)
        };
        match merged.iter_mut().find(same) {
            Some(m) => m.0 += c.prob,
            None => merged.push((c.prob, c)),
        }
    }
    let mut components = Vec::with_capacity(merged.len());
    for (p, c) in merged {
        let chol = nalgebra::Cholesky::new(c.cov.clone())
            .ok_or_else(|| Error::SingularCovariance("continuous inputs are linearly dependent".into()))?;
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let precision = chol.inverse();
        let k = vars.len();
        components.push(MixtureComponent {
            log_weight: p.ln() - 0.5 * log_det,
            mean: c.mean.clone(),
            precision: (0..k).map(|i| (0..k).map(|j| precision[(i, j)]).collect()).collect(),
            value: linear(c.values[d].0, vars, &c.values[d].1),
        });
    }
    Ok(Score::Mixture { inputs: vars.to_vec(), components })
}

/// Exact maximal expected utility over policies with inputs `inputs`.
pub fn max_expected_utility(scm: &Scm, utility: &UtilityMechanism, inputs: &NodeSet) -> Result<(Policy, f64)> {
    let policy = optimal_policy(scm, utility, inputs)?;
    let value = expected_utility(scm, utility, &policy)?;
    Ok((policy, value))
}
