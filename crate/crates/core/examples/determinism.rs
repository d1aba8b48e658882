//! Same seed and profile give bit-identical parameters; changing only the
//! profile changes the parameters and nothing else in the provenance.

use hwfair::data::{gen_synthetic, imbalance_margin_spec};
use hwfair::models::{init_model, ArchSpec};
use hwfair::train::{sgd_train, TrainConfig};
use hwfair::vhw::builtin_profiles;

fn main() -> hwfair::Result<()> {
    let ds = gen_synthetic(&imbalance_margin_spec(0))?;
    let m0 = init_model(&ArchSpec::mlp(2, &[8], hwfair::models::Activation::Relu, hwfair::models::Head::Sigmoid), 0)?;
    let cfg = TrainConfig::default();
    let reg = builtin_profiles();

    let a = sgd_train(&m0, &ds, &cfg, reg.reference())?;
    let b = sgd_train(&m0, &ds, &cfg, reg.reference())?;
    println!("hw_ref twice: {} / {}", &a.param_hash()[..16], &b.param_hash()[..16]);

    for p in reg.profiles.iter().skip(1) {
        let t = sgd_train(&m0, &ds, &cfg, p)?;
        println!(
            "{:<13} {}  provenance differs in {:?}",
            p.id,
            &t.param_hash()[..16],
            t.provenance.diff_except_profile(&a.provenance)
        );
    }
    Ok(())
}
