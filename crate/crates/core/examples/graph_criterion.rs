//! The graphical criterion on the parental-status and grade graphs.

use voifair::graph::node_set;
use voifair::scenarios::{example, ExampleId};

fn main() -> voifair::Result<()> {
    for (id, inputs) in [
        (ExampleId::ParentalStatus, vec!["A"]),
        (ExampleId::ParentalStatus, vec!["Q"]),
        (ExampleId::Grade, vec!["Effort"]),
        (ExampleId::Hair, vec!["P"]),
    ] {
        let spec = example(id);
        let graph = spec.scm.induced_graph(&spec.utility)?;
        let s = spec.scm.protected();
        let m = node_set(inputs.iter().copied());
        let admits = graph.admits_voi(s, &m)?;
        println!("{id:>16}: {s} {} VoI relative to {inputs:?}", if admits { "admits" } else { "does not admit" });
    }
    let spec = example(ExampleId::Medical);
    print!("{}", spec.scm.induced_graph(&spec.utility)?.to_dot());
    Ok(())
}
