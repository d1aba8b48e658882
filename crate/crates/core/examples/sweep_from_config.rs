//! Runs a small sweep from an inline TOML config into a temporary
//! directory, reruns it to show completed runs are reused, and prints the
//! report.

use hwfair::harness::config::ExperimentConfig;
use hwfair::harness::run::{mitigation_config, report, run_config};
use hwfair::harness::RunOptions;

const CONFIG: &str = r#"
[dataset]
kind = "synthetic"
preset = "imbalance_margin"

[model]
input_dim = 2
hidden = []
head = { kind = "sigmoid" }

[train]
epochs = 5

[profiles]
ids = ["hw_ref", "hw_pair32", "hw_warp32"]

[sweep]
seeds = [0, 1]

[mitigation]
lambdas = [0.0, 1.0]
"#;

fn main() -> hwfair::Result<()> {
    let dir = std::env::temp_dir().join("hwfair-sweep-example");
    let cfg = ExperimentConfig::from_toml(CONFIG)?;
    let opts = RunOptions { output: Some(dir.clone()), force: true, ..RunOptions::default() };
    let first = run_config(&cfg, &opts)?;
    println!("first pass: {} trained, {} failed", first.completed, first.failed);

    let again = RunOptions { force: false, ..opts };
    let second = run_config(&cfg, &again)?;
    println!("second pass: {} trained, {} reused\n", second.completed, second.skipped);

    mitigation_config(&cfg, &again)?;
    print!("{}", report(&dir)?);
    Ok(())
}
