//! Properties of the policy optimizer and estimators on random and small
//! discrete models, checked against enumeration and sampling.

mod common;

use std::collections::BTreeMap;

use common::{names, random_model, random_utility, rng, subset};
use proptest::prelude::*;
use rand::Rng;
use voifair::gaussian::conditional_moments_lg;
use voifair::graph::{node_set, NodeId, NodeSet};
use voifair::policy::{DecisionRule, LinearScore, Policy};
use voifair::policy_opt::{expected_utility, max_expected_utility, undesert, undesert_target, Backend};
use voifair::regression::ols;
use voifair::sample::sample;
use voifair::scenarios::{example, ExampleId};
use voifair::scm::{NoiseSpec, Scm, UtilityMechanism};

const SLACK: f64 = 1e-9;

/// The exact engine declines policies whose scores are Gaussian mixtures
/// over several directions; such draws are skipped.
fn supported<T>(r: &voifair::Result<T>) -> bool {
    !matches!(r, Err(voifair::Error::Unsupported(_)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn more_inputs_never_lower_the_optimum(seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = random_model(&mut r);
        let parents = subset(&mut r, &model.features, 0.6);
        let u = random_utility(&mut r, &parents);
        let small = subset(&mut r, &model.features, 0.4);
        let mut large = small.clone();
        large.extend(subset(&mut r, &model.features, 0.5).into_iter().filter(|v| !small.contains(v)));
        let a = max_expected_utility(&model.scm, &u, &names(&small), &Backend::Analytic);
        let b = max_expected_utility(&model.scm, &u, &names(&large), &Backend::Analytic);
        prop_assume!(supported(&a) && supported(&b));
        let (a, b) = (a.unwrap().1, b.unwrap().1);
        prop_assert!(b.value >= a.value - SLACK, "{} < {}", b.value, a.value);
    }

    #[test]
    fn optimum_dominates_random_policies(seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = random_model(&mut r);
        let parents = subset(&mut r, &model.features, 0.6);
        let u = random_utility(&mut r, &parents);
        let all = names(&model.features);
        let best = max_expected_utility(&model.scm, &u, &all, &Backend::Analytic);
        prop_assume!(supported(&best));
        let best = best.unwrap().1;
        for _ in 0..20 {
            let terms: Vec<(&str, f64)> =
                model.features.iter().map(|v| (v.as_str(), r.random_range(-2.0..2.0))).collect();
            let rule = DecisionRule::Threshold {
                score: LinearScore::new(0.0, &terms),
                cut: r.random_range(-2.0..2.0),
                below: 0,
                at_or_above: 1,
            };
            let policy = Policy::new(all.clone(), rule, 2).unwrap();
            let eu = expected_utility(&model.scm, &u, &policy, &Backend::Analytic).unwrap();
            prop_assert!(eu.value <= best.value + SLACK, "{} > {}", eu.value, best.value);
        }
    }
}

#[test]
fn exact_policy_values_agree_with_sampling() {
    let mut r = rng(21);
    let mut checked = 0;
    while checked < 10 {
        let model = random_model(&mut r);
        let parents = subset(&mut r, &model.features, 0.6);
        let u = random_utility(&mut r, &parents);
        let inputs = subset(&mut r, &model.features, 0.5);
        let best = max_expected_utility(&model.scm, &u, &names(&inputs), &Backend::Analytic);
        if !supported(&best) {
            continue;
        }
        let (policy, exact) = best.unwrap();
        let mc = expected_utility(&model.scm, &u, &policy, &Backend::mc(200_000, 3)).unwrap();
        assert!(
            (mc.value - exact.value).abs() < 5.0 * mc.stderr + 1e-12,
            "exact {} vs sampled {} ± {}",
            exact.value,
            mc.value,
            mc.stderr
        );
        checked += 1;
    }
}

#[test]
fn conditional_moments_match_regression_on_samples() {
    let mut r = rng(22);
    let mut checked = 0;
    while checked < 8 {
        let model = random_model(&mut r);
        if model.scm.is_discrete(&model.protected) {
            continue;
        }
        let target = model.features.last().unwrap().clone();
        let others = &model.features[..model.features.len() - 1];
        let given = subset(&mut r, others, 0.5);
        let moments = conditional_moments_lg(&model.scm, &target, &names(&given), &BTreeMap::new()).unwrap();
        let u = UtilityMechanism::parse("0 * D", &BTreeMap::new()).unwrap();
        let data = sample(&model.scm, &u, &Policy::constant(0, 2), 200_000, 9).unwrap();
        let cols: Vec<&[f64]> = given.iter().map(|v| data.column(v).unwrap()).collect();
        let fit = ols(&cols, data.column(&target).unwrap()).unwrap();
        let exact_coef: Vec<f64> = std::iter::once(moments.mean.intercept)
            .chain(given.iter().map(|v| moments.mean.terms.get(&NodeId::new(v)).copied().unwrap_or(0.0)))
            .collect();
        for (j, (a, b)) in exact_coef.iter().zip(&fit.coefficients).enumerate() {
            assert!((a - b).abs() < 5.0 * fit.stderr[j] + 1e-9, "coefficient {j}: exact {a} vs fitted {b}");
        }
        let rel = (fit.residual_variance - moments.residual_variance).abs() / moments.residual_variance.max(1e-12);
        assert!(rel < 0.02, "residual variance {} vs {}", moments.residual_variance, fit.residual_variance);
        checked += 1;
    }
}

/// Discrete model with equiprobable worlds `(A, B)`, `A ∈ {0,1,2}`,
/// `B ∈ {0,1}`, and `C = 1(A + B ≥ 2)`.
fn discrete_model(coef: [f64; 4]) -> (Scm, UtilityMechanism) {
    let scm = Scm::builder()
        .discrete("A", NoiseSpec::uniform(&[0.0, 1.0, 2.0]))
        .discrete("B", NoiseSpec::uniform(&[0.0, 1.0]))
        .expression("C", "indicator(A + B >= 2)", &[])
        .decision(&[0.0, 1.0], &["A", "B", "C"])
        .protected("B")
        .build()
        .unwrap();
    let text = format!("indicator(D = 1) * ({} + {} * A + {} * B + {} * C)", coef[0], coef[1], coef[2], coef[3]);
    (scm, UtilityMechanism::parse(&text, &BTreeMap::new()).unwrap())
}

/// Best value over every deterministic lookup table on `inputs`, by
/// enumerating the tables and the worlds.
fn best_table(coef: [f64; 4], inputs: &[&str]) -> f64 {
    let worlds: Vec<[f64; 3]> =
        (0..3).flat_map(|a| (0..2).map(move |b| [a as f64, b as f64, ((a + b) >= 2) as u8 as f64])).collect();
    let key = |w: &[f64; 3]| -> Vec<u64> {
        inputs.iter().map(|v| w[["A", "B", "C"].iter().position(|n| n == v).unwrap()].to_bits()).collect()
    };
    let mut keys: Vec<Vec<u64>> = worlds.iter().map(key).collect();
    keys.sort();
    keys.dedup();
    let mut best = f64::NEG_INFINITY;
    for table in 0u32..(1 << keys.len()) {
        let value: f64 = worlds
            .iter()
            .map(|w| {
                let k = keys.iter().position(|k| *k == key(w)).unwrap();
                let act = (table >> k) & 1 == 1;
                if act {
                    coef[0] + coef[1] * w[0] + coef[2] * w[1] + coef[3] * w[2]
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            / worlds.len() as f64;
        best = best.max(value);
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn discrete_optimum_matches_table_enumeration(
        coef in prop::array::uniform4(-3.0..3.0_f64),
        mask in 0usize..8,
    ) {
        let (scm, u) = discrete_model(coef);
        let inputs: Vec<&str> = ["A", "B", "C"].iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, v)| *v).collect();
        let (_, got) = max_expected_utility(&scm, &u, &node_set(&inputs), &Backend::Analytic).unwrap();
        let want = best_table(coef, &inputs);
        prop_assert!((got.value - want).abs() < 1e-12, "{} vs {}", got.value, want);
    }
}

#[test]
fn entangled_grades_tables() {
    let spec = example(ExampleId::Entangled);
    let cases: [(&[&str], f64); 4] = [(&["Grade", "S"], 0.25), (&["Grade"], 0.25), (&["S"], 0.0), (&[], 0.0)];
    for (inputs, want) in cases {
        let (_, got) = max_expected_utility(&spec.scm, &spec.utility, &node_set(inputs), &Backend::Analytic).unwrap();
        assert!((got.value - want).abs() < 1e-12, "{inputs:?}: {} vs {want}", got.value);
    }
}

#[test]
fn undesert_vanishes_when_the_policy_sees_the_target() {
    let spec = example(ExampleId::Grade);
    let uhat = undesert_target(&spec.scm, &spec.utility).unwrap();
    let full: NodeSet = node_set(["Grade", "S"]);
    let (policy, _) = max_expected_utility(&spec.scm, &spec.utility, &full, &Backend::Analytic).unwrap();
    let data = sample(&spec.scm, &spec.utility, &policy, 20_000, 4).unwrap();
    let report = undesert(&data, "D", "S", &uhat).unwrap();
    assert!(report.mean.abs() < 1e-9, "mean undesert {}", report.mean);

    let partial: NodeSet = node_set(["Grade"]);
    let (policy, _) = max_expected_utility(&spec.scm, &spec.utility, &partial, &Backend::Analytic).unwrap();
    let data = sample(&spec.scm, &spec.utility, &policy, 20_000, 4).unwrap();
    let report = undesert(&data, "D", "S", &uhat).unwrap();
    assert!(report.mean > 0.05, "mean undesert {}", report.mean);
    let (lo, hi) = (report.group_means[0].1, report.group_means[1].1);
    assert!((lo - hi).abs() < 0.05, "symmetric groups: {lo} vs {hi}");
}
