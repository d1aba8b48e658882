//! The boundary-distance penalty: its value on a hand-made batch, a
//! gradient check of the penalized objective, and a small λ sweep.

use hwfair::data::{gen_synthetic, imbalance_margin_spec, split, DatasetView};
use hwfair::harness::acceptance::accuracy_spread;
use hwfair::models::{accuracy, init_model, ArchSpec};
use hwfair::train::{mitigation_penalty, penalty_gradient_check, sgd_train, TrainConfig};
use hwfair::vhw::VirtualHardwareProfile;

fn main() -> hwfair::Result<()> {
    let probs = vec![vec![0.9, 0.1], vec![0.8, 0.2], vec![0.6, 0.4], vec![0.5, 0.5]];
    let pen = mitigation_penalty(&probs, &[0, 0, 1, 1], 2)?;
    println!("batch penalty {:.4}, group δ {:?}, batch δ {:.4}", pen.penalty, pen.per_group_delta, pen.batch_delta);

    let sp = split(&gen_synthetic(&imbalance_margin_spec(0))?, 0.7, 0)?;
    let spec = ArchSpec::logistic(2);
    let m0 = init_model(&spec, 0)?;
    // Stride through the split so every group is present in the batch.
    let stride = sp.train.len() / 48;
    let batch = DatasetView::from_indices(&sp.train, (0..48).map(|i| i * stride).collect());
    println!("batch group sizes {:?}", batch.group_sizes());
    for lambda in [0.0, 0.1, 10.0] {
        let gc = penalty_gradient_check(&batch, &m0, lambda)?;
        println!("gradient check λ = {lambda:>4}: max rel err {:.2e} (coord {} analytic {:.6e})", gc.max_rel_err, gc.coordinate, gc.analytic);
    }

    println!("\n{:>6} {:>10} {:>10}", "λ", "accuracy", "spread");
    let reference = VirtualHardwareProfile::reference();
    for lambda in [0.0, 0.01, 0.1, 1.0] {
        let cfg = TrainConfig { mitigation_lambda: lambda, ..TrainConfig::default() };
        let m = sgd_train(&m0, &sp.train, &cfg, &reference)?.model;
        println!(
            "{lambda:>6} {:>10.4} {:>10.4}",
            accuracy(&m, &sp.test.view())?,
            accuracy_spread(&m, &sp.test)?
        );
    }
    Ok(())
}
