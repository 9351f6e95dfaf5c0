//! Fair-utility search and fairness verdicts on the worked examples.

use voifair::fairness::{
    closed_form_fair_utility_medical, corresponding_fair_utility, is_voi_fair, penalty_losses, UtilityFamily,
};
use voifair::graph::{node_set, NodeId};
use voifair::policy::Policy;
use voifair::policy_opt::{has_voi, Backend};
use voifair::sample::sample;
use voifair::scenarios::{example, medical, medical_family, ExampleId};

const THETA: [f64; 6] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];

#[test]
fn closed_form_weights_give_a_fair_utility() {
    for theta in [THETA, [6.0, 5.0, 4.0, 3.0, 2.0, 1.0], [0.5, 1.5, 2.0, 0.7, 1.0, 3.0]] {
        let (scm, utility, f) = medical(theta).unwrap();
        let w = closed_form_fair_utility_medical(theta).unwrap();
        let fair = medical_family().instantiate(&scm, &w).unwrap();
        let report = is_voi_fair(&scm, &fair, &f, &Backend::Analytic, 1e-9).unwrap();
        assert!(report.fair, "{theta:?}: {report:?}");
        let original = is_voi_fair(&scm, &utility, &f, &Backend::Analytic, 1e-9).unwrap();
        assert!(!original.fair, "{theta:?}");
    }
}

#[test]
fn estimated_weights_approach_the_closed_form() {
    let (scm, utility, f) = medical(THETA).unwrap();
    let exact = closed_form_fair_utility_medical(THETA).unwrap();
    let r = corresponding_fair_utility(&scm, &utility, &f, &medical_family(), 100_000, 3, 1e-4).unwrap();
    assert!(r.converged && r.l1 <= 1e-4);
    for (a, b) in r.w.iter().zip(exact) {
        assert!((a - b).abs() < 0.15, "{:?} vs {exact:?}", r.w);
    }
    let fair = medical_family().instantiate(&scm, &r.w).unwrap();
    let verdict = has_voi(&scm, &fair, &NodeId::new("S"), &f, &Backend::Analytic, 1e-9).unwrap();
    assert!(verdict.margin < 1e-3, "{verdict:?}");
}

#[test]
fn already_fair_utility_is_left_unchanged() {
    let spec = example(ExampleId::Grade);
    let family = UtilityFamily::parse(&["indicator(D = 1) * Effort"]).unwrap();
    let r = corresponding_fair_utility(&spec.scm, &spec.utility, &spec.essential, &family, 10_000, 5, 1e-4).unwrap();
    assert_eq!(r.iterations, 1);
    assert!((r.w[0] - 1.0).abs() < 1e-12, "{:?}", r.w);
    assert!(r.l1 < 1e-20 && r.l2 < 1e-20);
}

#[test]
#[ignore = "sampling noise on a fresh sample is of order 1/n, far above 10ε"]
fn fairness_penalty_stays_small_on_a_fresh_sample() {
    let (scm, utility, f) = medical(THETA).unwrap();
    let family = medical_family();
    let r = corresponding_fair_utility(&scm, &utility, &f, &family, 10_000, 1, 1e-4).unwrap();
    let fresh = sample(&scm, &utility, &Policy::constant(1, 2), 10_000, 99).unwrap();
    let (l1, _) = penalty_losses(&scm, &utility, &family, &r.w, &fresh, &f).unwrap();
    assert!(l1 < 1e-3, "L1 on a fresh sample {l1}");
}

#[test]
fn entangled_grades_leave_effort_a_coin_flip_for_one_group() {
    let spec = example(ExampleId::Entangled);
    let data = sample(&spec.scm, &spec.utility, &Policy::constant(0, 2), 100_000, 2).unwrap();
    let (s, e, g) = (data.column("S").unwrap(), data.column("Effort").unwrap(), data.column("Grade").unwrap());
    let rows: Vec<usize> = (0..data.n()).filter(|&i| s[i] == -1.0).collect();
    assert!(rows.iter().all(|&i| g[i] == -1.0));
    let high = rows.iter().filter(|&&i| e[i] == 1.0).count() as f64 / rows.len() as f64;
    assert!((high - 0.5).abs() < 0.01, "P(Effort = 1 | S = -1, Grade = -1) = {high}");

    let s_node = NodeId::new("S");
    let given_grade =
        has_voi(&spec.scm, &spec.utility, &s_node, &node_set(["Grade"]), &Backend::Analytic, 1e-9).unwrap();
    assert!(!given_grade.has_voi, "{given_grade:?}");
    let alone =
        has_voi(&spec.scm, &spec.utility, &s_node, &node_set::<[&str; 0], &str>([]), &Backend::Analytic, 1e-9).unwrap();
    assert!(!alone.has_voi, "{alone:?}");
}
