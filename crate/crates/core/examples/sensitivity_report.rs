//! Trains one logistic model per hardware profile from a shared
//! initialization, then reports per-group hardware sensitivity and its
//! second-order bound.

use hwfair::data::{gen_synthetic, imbalance_margin_spec};
use hwfair::fairlab::{sensitivity_report, taylor_bound_report, EigenOptions};
use hwfair::harness::acceptance::train_across;
use hwfair::models::ArchSpec;
use hwfair::train::TrainConfig;
use hwfair::vhw::builtin_profiles;

fn main() -> hwfair::Result<()> {
    let ds = gen_synthetic(&imbalance_margin_spec(0))?;
    let profiles = builtin_profiles().profiles;
    let set = train_across(&ArchSpec::logistic(2), &ds, &TrainConfig::default(), &profiles, 0)?;

    let sens = sensitivity_report(&set, "hw_ref", &ds)?;
    println!("profiles {:?}", sens.profile_ids);
    println!("ρ (max parameter distance from hw_ref) = {:.3e}", sens.rho);
    for (a, d) in sens.delta.iter().enumerate() {
        println!("  {} (n = {:>3}): Δ = {d:.3e}", ds.group_names()[a], ds.group_sizes()[a]);
    }
    println!("ξ = {:.3e} between groups {:?}\n", sens.xi, sens.argmax_pair);

    let taylor = taylor_bound_report(&set, "hw_ref", &ds, EigenOptions::default())?;
    println!("{:>6} {:>11} {:>11} {:>11} {:>11}", "group", "Δ", "‖g‖ρ", "½λρ²", "slack");
    for g in &taylor.groups {
        println!(
            "{:>6} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e}",
            ds.group_names()[g.group], g.delta, g.term1, g.term2, g.slack
        );
    }
    println!("cubic allowance κρ³ = {:.3e}", taylor.cubic_allowance());
    Ok(())
}
