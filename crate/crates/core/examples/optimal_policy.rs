//! Optimal thresholds on the grade-uncertainty model, exact and estimated.

use voifair::graph::node_set;
use voifair::policy_opt::{max_expected_utility, Backend};
use voifair::scenarios::{example, ExampleId};

fn main() -> voifair::Result<()> {
    let spec = example(ExampleId::Uncertainty);
    let inputs = node_set(["G", "S"]);
    for backend in [Backend::Analytic, Backend::mc(1_000_000, 1)] {
        let (policy, value) = max_expected_utility(&spec.scm, &spec.utility, &inputs, &backend)?;
        let cuts = policy.stratum_cuts().expect("threshold policy");
        for (s, c) in cuts {
            println!("{:?}: hire when S = {} and G >= {c:.4}", backend.kind(), s[0]);
        }
        println!("{:?}: expected utility {:.5} (se {:.5})", backend.kind(), value.value, value.stderr);
    }
    Ok(())
}
