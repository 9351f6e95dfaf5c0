//! Counterfactual fairness and equalized odds on the grade-uncertainty model.

use voifair::baselines::{example4_baselines, fig1_utility_comparison};

fn main() -> voifair::Result<()> {
    let r = example4_baselines()?;
    println!("searched {} threshold pairs", r.pairs_searched);
    println!("equalized odds: {} feasible, best {:?}", r.equalized_odds_feasible, r.equalized_odds);
    println!(
        "counterfactual fairness: {} feasible, best {:?}",
        r.counterfactual_fairness_feasible, r.counterfactual_fairness
    );
    println!("unconstrained: {:?}", r.unconstrained);
    println!(
        "admission rates S=0: {:.4}, S=1: {:.4}, parity gap {:.4}",
        r.admission_rate_s0, r.admission_rate_s1, r.demographic_parity_gap
    );
    let c = fig1_utility_comparison(100_000, 1)?;
    println!("parental status admits VoI given A: {}, given Q: {}", c.admits_voi_given_a, c.admits_voi_given_q);
    println!(
        "D*Q*W fair: {}, D*Q fair: {}, Q*W + D has VoI: {}",
        c.original_fair.fair, c.modified_fair.fair, c.footnote_voi.has_voi
    );
    Ok(())
}
