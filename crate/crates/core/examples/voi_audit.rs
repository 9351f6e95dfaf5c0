//! Fairness audits with both backends.

use voifair::graph::node_set;
use voifair::is_voi_fair;
use voifair::policy_opt::{Backend, ANALYTIC_TOLERANCE};
use voifair::scenarios::{example, parental_status_modified_utility, ExampleId};

fn main() -> voifair::Result<()> {
    let medical = example(ExampleId::Medical);
    let f = node_set(["M"]);
    for backend in [Backend::Analytic, Backend::mc(200_000, 1)] {
        let r = is_voi_fair(&medical.scm, &medical.utility, &f, &backend, ANALYTIC_TOLERANCE)?;
        let v = r.verdict.as_ref().expect("numeric path");
        println!(
            "medical, {:?}: fair = {}, margin = {:.5} (threshold {:.5})",
            backend.kind(),
            r.fair,
            v.margin,
            v.tolerance
        );
    }
    let parental = example(ExampleId::ParentalStatus);
    let r = is_voi_fair(&parental.scm, &parental_status_modified_utility(), &node_set(["Q"]), &Backend::Analytic, 0.0)?;
    println!("parental status, utility D*Q: fair = {} via {:?}", r.fair, r.path);
    let hair = example(ExampleId::Hair);
    let r = is_voi_fair(&hair.scm, &hair.utility, &node_set(["P"]), &Backend::Analytic, ANALYTIC_TOLERANCE)?;
    println!("hair, F = {{P}}: fair = {} via {:?}", r.fair, r.path);
    Ok(())
}
