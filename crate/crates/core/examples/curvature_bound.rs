//! Compares each group's top Hessian eigenvalue with the bound built from
//! how close its samples sit to the decision boundary.

use hwfair::fairlab::{hessian_bound_report, EigenOptions};
use hwfair::harness::acceptance::tiny_curvature_setup;

fn main() -> hwfair::Result<()> {
    let (model, ds) = tiny_curvature_setup(0)?;
    let report = hessian_bound_report(&model, &ds, EigenOptions::default())?;
    println!("{:>6} {:>12} {:>12} {:>14}", "group", "λ_max(H)", "bound", "mean f(1−f)");
    for g in &report.groups {
        println!(
            "{:>6} {:>12.5} {:>12.5} {:>14.5}",
            ds.group_names()[g.group], g.lambda_max, g.bound, g.closeness_mean
        );
    }
    let closest = report
        .samples
        .iter()
        .max_by(|a, b| a.closeness.total_cmp(&b.closeness))
        .expect("nonempty dataset");
    println!(
        "\nclosest sample #{}: f = {:.3}, curvature term {:.4}",
        closest.index, closest.f, closest.term
    );
    Ok(())
}
