//! Acceptance gate: runs every criterion, prints one line each, and fails
//! if any criterion fails.

use hwfair::harness::acceptance::{run_suite, Suite};

fn main() {
    let results = run_suite(Suite::All);
    for r in &results {
        println!("{r}");
    }
    let failed: Vec<u8> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    println!("\nacceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
