//! Undesert by group for the policies that read or ignore the group label.

use voifair::graph::node_set;
use voifair::policy_opt::{optimal_policy, undesert, undesert_target, Backend};
use voifair::sample::sample;
use voifair::scenarios::{example, ExampleId};

fn main() -> voifair::Result<()> {
    let spec = example(ExampleId::Uncertainty);
    let uhat = undesert_target(&spec.scm, &spec.utility)?;
    for inputs in [vec!["G", "S"], vec!["G"]] {
        let policy = optimal_policy(&spec.scm, &spec.utility, &node_set(inputs.iter().copied()), &Backend::Analytic)?;
        let data = sample(&spec.scm, &spec.utility, &policy, 500_000, 3)?;
        let r = undesert(&data, "D", "S", &uhat)?;
        println!("inputs {inputs:?}: mean undesert {:.5}", r.mean);
        for (s, m, k) in &r.group_means {
            println!("  S = {s}: {m:.5} over {k} rows");
        }
    }
    Ok(())
}
