//! Trains under a binary32 profile, writes the checkpoint and per-epoch
//! trace, reads the checkpoint back and checks that the parameters match.

use hwfair::data::{gen_synthetic, imbalance_margin_spec};
use hwfair::models::{init_model, read_checkpoint, write_checkpoint, ArchSpec};
use hwfair::train::{sgd_train, TrainConfig};
use hwfair::vhw::builtin_profiles;

fn main() -> hwfair::Result<()> {
    let ds = gen_synthetic(&imbalance_margin_spec(0))?;
    let reg = builtin_profiles();
    let profile = reg.get("hw_pair32").expect("builtin profile");
    let cfg = TrainConfig { epochs: 10, ..TrainConfig::default() };
    let trained = sgd_train(&init_model(&ArchSpec::logistic(2), 0)?, &ds, &cfg, profile)?;

    let dir = std::env::temp_dir().join("hwfair-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let header = write_checkpoint(dir.join("model.bin"), &trained.model, &profile.id, &trained.config_hash)?;
    trained.write_trace_csv(dir.join("trace.csv"), ds.group_names())?;
    let (restored, read_header) = read_checkpoint(dir.join("model.bin"))?;

    println!("wrote {} ({} parameters, hash {})", dir.display(), header.param_count, &header.param_hash[..16]);
    println!("restored parameters identical: {}", restored.theta() == trained.model.theta());
    println!("headers identical: {}", read_header == header);
    println!("\n{}", std::fs::read_to_string(dir.join("trace.csv"))?.lines().take(4).collect::<Vec<_>>().join("\n"));
    Ok(())
}
