//! Minimal input sets on which every input carries value of information.

use voifair::policy_opt::{minimal_voi_input_set, Backend, ANALYTIC_TOLERANCE};
use voifair::scenarios::{example, ExampleId};

fn main() -> voifair::Result<()> {
    for id in [ExampleId::VoiPolicyAppB, ExampleId::Grade, ExampleId::Medical] {
        let spec = example(id);
        let r = minimal_voi_input_set(
            &spec.scm,
            &spec.utility,
            spec.decision_inputs(),
            &Backend::Analytic,
            ANALYTIC_TOLERANCE,
        )?;
        let names: Vec<&str> = r.inputs.iter().map(|v| v.as_str()).collect();
        println!("{id:>16}: H = {names:?}, max EU {:.5} (full {:.5})", r.max_eu.value, r.max_eu_full.value);
    }
    Ok(())
}
