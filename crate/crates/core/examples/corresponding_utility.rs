//! The penalty method on the medical-staff family, against the closed form.

use voifair::corresponding_fair_utility;
use voifair::fairness::closed_form_fair_utility_medical;
use voifair::graph::node_set;
use voifair::scenarios::{medical, medical_family};

fn main() -> voifair::Result<()> {
    for theta in [[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], [6.0, 5.0, 4.0, 3.0, 2.0, 1.0]] {
        let (scm, utility, _) = medical(theta)?;
        let r = corresponding_fair_utility(&scm, &utility, &node_set(["M"]), &medical_family(), 10_000, 7, 1e-4)?;
        let exact = closed_form_fair_utility_medical(theta)?;
        println!("theta = {theta:?}");
        println!(
            "  estimated w = ({:.3}, {:.3}, {:.3}), L1 = {:.2e}, K = {}",
            r.w[0], r.w[1], r.w[2], r.l1, r.penalty_k
        );
        println!("  closed form = ({:.3}, {:.3}, {:.3})", exact[0], exact[1], exact[2]);
    }
    Ok(())
}
