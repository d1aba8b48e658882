//! Per-group gradient norms and pairwise gradient angles of a logistic
//! model trained on the two-group benchmark.

use hwfair::data::{gen_synthetic, two_group_spec};
use hwfair::fairlab::{angles_from_gradients, group_gradient_norms};
use hwfair::models::{init_model, ArchSpec};
use hwfair::train::{sgd_train, TrainConfig};
use hwfair::vhw::VirtualHardwareProfile;

fn main() -> hwfair::Result<()> {
    let ds = gen_synthetic(&two_group_spec(0))?;
    let m0 = init_model(&ArchSpec::logistic(2), 0)?;
    let model = sgd_train(&m0, &ds, &TrainConfig::default(), &VirtualHardwareProfile::reference())?.model;
    let grads = group_gradient_norms(&model, &ds)?;
    for g in &grads {
        println!("{}: n = {:>3}, ‖∇L‖ = {:.4}", ds.group_names()[g.group], g.size, g.norm);
    }
    let angles = angles_from_gradients(&grads);
    println!("minority group: {}", ds.group_names()[angles.minority]);
    for row in &angles.angles {
        println!("  {}", row.iter().map(|a| format!("{:6.1}°", a.to_degrees())).collect::<Vec<_>>().join(" "));
    }
    Ok(())
}
