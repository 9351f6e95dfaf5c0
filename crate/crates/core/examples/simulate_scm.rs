//! Sampling the medical-staff model under its optimal policy and writing CSV.

use voifair::policy_opt::{optimal_policy, Backend};
use voifair::sample::sample;
use voifair::scenarios::{example, ExampleId};

fn main() -> voifair::Result<()> {
    let spec = example(ExampleId::Medical);
    let policy = optimal_policy(&spec.scm, &spec.utility, spec.decision_inputs(), &Backend::Analytic)?;
    println!("{}", serde_json::to_string(&policy.rule)?);
    let data = sample(&spec.scm, &spec.utility, &policy, 5, 42)?;
    data.write_csv(std::io::stdout())?;
    let big = sample(&spec.scm, &spec.utility, &policy, 200_000, 42)?;
    let u = big.column("U")?;
    println!("mean utility over {} rows: {:.4}", big.n(), voifair::stats::mean(u));
    Ok(())
}
