//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the console; exits non-zero if any
//! criterion fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::{build_dag, d_separated_by_paths, names, random_dag, random_model, random_utility, rng, subset};
use rand::Rng;
use voifair::baselines::example4_baselines;
use voifair::fairness::{closed_form_fair_utility_medical, is_voi_fair};
use voifair::graph::{node_set, NodeId, NodeSet};
use voifair::policy_opt::{has_voi, max_expected_utility, Backend};
use voifair::reproduce::{medical_weights, reproduce_table, ReproduceConfig, TableId, MEDICAL_EPS};
use voifair::scenarios::{example, medical_family, ExampleId};

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

const ANALYTIC_TOL: f64 = 1e-9;

fn main() {
    let criteria: [Check; 10] = [
        ("table 1 reproduction", table1),
        ("table 2 reproduction", table2),
        ("closed form and consistency", closed_form),
        ("college aggregates", college),
        ("grade-uncertainty thresholds", thresholds),
        ("d-separation oracle", dsep_oracle),
        ("essential-only utilities are fair", essential_only_fair),
        ("graphical soundness", soundness),
        ("policy-constraint baselines", baselines),
        ("cli determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn tidy(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn table(id: TableId) -> Outcome {
    let report = reproduce_table(id, &ReproduceConfig::new(100, 1)).map_err(err)?;
    let rows: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{} {:.3} in ({}, {})", r.quantity, r.mean, tidy(r.low), tidy(r.high)))
        .collect();
    let detail = rows.join(", ");
    if report.pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn table1() -> Outcome {
    table(TableId::T1)
}

fn table2() -> Outcome {
    table(TableId::T2)
}

fn closed_form() -> Outcome {
    let round2 = |x: f64| (x * 100.0).round() / 100.0;
    let cases =
        [([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], [-15.0, 5.0, 7.48]), ([6.0, 5.0, 4.0, 3.0, 2.0, 1.0], [-48.0, 2.0, 4.06])];
    let mut detail = Vec::new();
    for (theta, printed) in cases {
        let w = closed_form_fair_utility_medical(theta).map_err(err)?;
        if w.iter().zip(printed).any(|(a, b)| round2(*a) != b) {
            return Err(format!("closed form {w:?} does not round to {printed:?}"));
        }
        let config = ReproduceConfig::new(100, 11);
        let mae = |n: usize| -> Result<f64, String> {
            let ws = medical_weights(theta, n, MEDICAL_EPS, &config).map_err(err)?;
            let total: f64 = ws.iter().flat_map(|r| r.iter().zip(w).map(|(a, b)| (a - b).abs())).sum();
            Ok(total / (3 * ws.len()) as f64)
        };
        let (small, large) = (mae(1_000)?, mae(10_000)?);
        detail.push(format!("theta {theta:?}: MAE {small:.3} at n=1e3, {large:.3} at n=1e4"));
        if large > small / 2.0 {
            return Err(detail.join("; "));
        }
    }
    Ok(detail.join("; "))
}

fn college() -> Outcome {
    table(TableId::F3Aggregates)
}

fn thresholds() -> Outcome {
    let spec = example(ExampleId::Uncertainty);
    let inputs = node_set(["G", "S"]);
    let cuts = |backend: &Backend| -> Result<(f64, f64), String> {
        let (policy, _) = max_expected_utility(&spec.scm, &spec.utility, &inputs, backend).map_err(err)?;
        let cuts = policy.stratum_cuts().ok_or("optimal policy is not a per-group threshold")?;
        let of = |s: f64| cuts.iter().find(|(k, _)| k[0] == s).map(|(_, c)| *c).ok_or("missing group");
        Ok((of(0.0)?, of(1.0)?))
    };
    let exact = cuts(&Backend::Analytic)?;
    let mc = cuts(&Backend::mc(1_000_000, 1))?;
    let detail = format!(
        "analytic G >= {} (S=0), G >= {} (S=1); n=1e6 G >= {:.4} (S=0), G >= {:.4} (S=1)",
        exact.0, exact.1, mc.0, mc.1
    );
    let ok = (exact.0 - 3.0).abs() < 1e-9
        && (exact.1 - 2.0).abs() < 1e-9
        && (mc.0 - 3.0).abs() <= 0.1
        && (mc.1 - 2.0).abs() <= 0.1;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn dsep_oracle() -> Outcome {
    let mut r = rng(6);
    let mut queries = 0usize;
    for g in 0..1000 {
        let n = r.random_range(2..=8);
        let p = r.random_range(0.1..0.7);
        let (nodes, edges) = random_dag(&mut r, n, p);
        let dag = build_dag(&nodes, &edges);
        let one = |i: usize| NodeSet::from([nodes[i].clone()]);
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let zs = std::iter::once(None).chain((0..n).filter(|&z| z != a && z != b).map(Some));
                for z in zs {
                    let zset = z.map(one).unwrap_or_default();
                    let zlist: Vec<usize> = z.into_iter().collect();
                    let fast = dag.d_separated(&one(a), &one(b), &zset).map_err(err)?;
                    let slow = d_separated_by_paths(n, &edges, a, b, &zlist);
                    queries += 1;
                    if fast != slow {
                        return Err(format!("graph {g}: {} vs {} given {zlist:?}: {fast} vs {slow}", a, b));
                    }
                }
            }
        }
    }
    Ok(format!("1000 graphs, {queries} queries agree"))
}

fn essential_only_fair() -> Outcome {
    let mut r = rng(7);
    let mut max_margin = 0.0_f64;
    for i in 0..200 {
        let model = random_model(&mut r);
        let others: Vec<String> = model.features.iter().filter(|v| **v != model.protected).cloned().collect();
        let f = subset(&mut r, &others, 0.6);
        let parents = subset(&mut r, &f, 0.7);
        let u = random_utility(&mut r, &parents);
        let report = is_voi_fair(&model.scm, &u, &names(&f), &Backend::Analytic, ANALYTIC_TOL).map_err(err)?;
        if !report.fair {
            return Err(format!("model {i} judged unfair"));
        }
        let s = NodeId::new(&model.protected);
        let verdict = has_voi(&model.scm, &u, &s, &names(&f), &Backend::Analytic, ANALYTIC_TOL).map_err(err)?;
        if verdict.has_voi {
            return Err(format!("model {i}: exact VoI margin {}", verdict.margin));
        }
        max_margin = max_margin.max(verdict.margin.abs());
    }
    Ok(format!("200 models fair; largest exact |margin| {max_margin:.2e}"))
}

fn soundness() -> Outcome {
    let mut r = rng(8);
    let (mut kept, mut drawn, mut worst) = (0, 0, f64::NEG_INFINITY);
    while kept < 200 {
        drawn += 1;
        let model = random_model(&mut r);
        let others: Vec<String> = model.features.iter().filter(|v| **v != model.protected).cloned().collect();
        let m = subset(&mut r, &others, 0.5);
        let parents = subset(&mut r, &model.features, 0.5);
        let u = random_utility(&mut r, &parents);
        let s = NodeId::new(&model.protected);
        let graph = model.scm.induced_graph(&u).map_err(err)?;
        if graph.admits_voi(&s, &names(&m)).map_err(err)? {
            continue;
        }
        let mc = has_voi(&model.scm, &u, &s, &names(&m), &Backend::mc(20_000, drawn), 0.0).map_err(err)?;
        if mc.has_voi {
            return Err(format!("model {drawn}: margin {:.4e} above threshold {:.4e}", mc.margin, mc.tolerance));
        }
        let exact = has_voi(&model.scm, &u, &s, &names(&m), &Backend::Analytic, ANALYTIC_TOL).map_err(err)?;
        if exact.has_voi {
            return Err(format!("model {drawn}: exact margin {}", exact.margin));
        }
        worst = worst.max(mc.margin - mc.tolerance);
        kept += 1;
    }
    Ok(format!("200 of {drawn} models without graphical VoI; largest margin minus threshold {worst:.3e}"))
}

fn baselines() -> Outcome {
    let report = example4_baselines().map_err(err)?;
    let detail = format!(
        "equalized odds {:?} value {}, counterfactual {:?} value {}, unconstrained value {:.5}",
        (report.equalized_odds.c0, report.equalized_odds.c1),
        report.equalized_odds.value,
        (report.counterfactual_fairness.c0, report.counterfactual_fairness.c1),
        report.counterfactual_fairness.value,
        report.unconstrained.value
    );
    let ok = report.equalized_odds.is_never_hire()
        && report.equalized_odds.value == 0.0
        && report.counterfactual_fairness.is_never_hire()
        && report.counterfactual_fairness.value == 0.0
        && report.unconstrained.value > 0.0;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let family = dir.path().join("family.json");
    std::fs::write(&family, serde_json::to_string(&medical_family()).map_err(err)?).map_err(err)?;
    let family = family.to_str().ok_or("non-UTF-8 temp path")?.to_string();
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("check-graph", vec!["check-graph", "--model", "example:grade", "--inputs", "Grade"]),
        (
            "check-fairness",
            vec![
                "check-fairness",
                "--model",
                "example:medical",
                "--essential",
                "M",
                "--backend",
                "mc",
                "--n",
                "20000",
                "--seed",
                "5",
            ],
        ),
        (
            "fair-utility",
            vec![
                "fair-utility",
                "--model",
                "example:medical",
                "--essential",
                "M",
                "--family",
                &family,
                "--n",
                "2000",
                "--seed",
                "5",
            ],
        ),
        ("reproduce", vec!["reproduce", "T1", "--reps", "3", "--seed", "5", "--format", "json"]),
        ("simulate", vec!["simulate", "--model", "example:uncertainty", "--n", "200", "--seed", "5"]),
        (
            "minimal-inputs",
            vec!["minimal-inputs", "--model", "example:grade", "--backend", "mc", "--n", "20000", "--seed", "5"],
        ),
        ("undesert", vec!["undesert", "--model", "example:grade", "--backend", "mc", "--n", "20000", "--seed", "5"]),
    ];
    for (name, args) in &runs {
        let outputs: Vec<Vec<Vec<u8>>> =
            (0..2).map(|k| run_cli(args, &dir.path().join(format!("{name}-{k}")))).collect::<Result<_, _>>()?;
        if outputs[0] != outputs[1] {
            return Err(format!("{name} differs between runs"));
        }
    }
    Ok(format!("{} subcommands byte-identical on stdout and output files", runs.len()))
}

/// Runs the binary writing to `out` and returns stdout followed by the
/// contents of every file written, in name order.
fn run_cli(args: &[&str], out: &Path) -> Result<Vec<Vec<u8>>, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_voifair"));
    cmd.args(args);
    let is_reproduce = args[0] == "reproduce";
    if is_reproduce {
        cmd.arg("--out").arg(out);
    } else {
        std::fs::create_dir_all(out).map_err(err)?;
        cmd.arg("--out").arg(out.join("result"));
    }
    let output = cmd.output().map_err(err)?;
    if !matches!(output.status.code(), Some(0 | 2)) {
        return Err(format!("{} failed: {}", args[0], String::from_utf8_lossy(&output.stderr)));
    }
    let mut files: Vec<_> =
        std::fs::read_dir(out).map_err(err)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>().map_err(err)?;
    files.sort();
    let mut all = vec![output.stdout];
    for f in files {
        all.push(std::fs::read(f).map_err(err)?);
    }
    if all.len() < 2 || all[1..].iter().any(Vec::is_empty) {
        return Err(format!("{} wrote no output", args[0]));
    }
    Ok(all)
}
