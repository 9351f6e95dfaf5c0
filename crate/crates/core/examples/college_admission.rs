//! One realization of the college admission pipeline.

use voifair::college::{fit, run, CollegeConfig};

fn main() -> voifair::Result<()> {
    let config = CollegeConfig::default();
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let fitted = fit(&config, seed)?;
    for w in [-0.3, -0.2, -0.1, -0.05, 0.0, 0.1] {
        println!("gap at w = {w:>5}: {:.6}", fitted.voi_gap(w));
    }
    let r = run(&config, seed)?;
    println!("w = {:.4}", r.w);
    println!("{:<28} {:>9} {:>9}", "", "original", "modified");
    println!("{:<28} {:>9} {:>9}", "graduating", r.original.graduating, r.modified.graduating);
    println!("{:<28} {:>9} {:>9}", "minority admitted", r.original.minority_admitted, r.modified.minority_admitted);
    println!(
        "{:<28} {:>9} {:>9}",
        "minority graduating", r.original.minority_graduating, r.modified.minority_graduating
    );
    Ok(())
}
