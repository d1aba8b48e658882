//! Sums one vector under every builtin profile and compares each result
//! with a compensated reference sum and the forward error bound.

use hwfair::vhw::{builtin_profiles, ceil_log2, compensated_sum, error_bound, OrderPolicy, Precision};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let n = 4096;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let values: Vec<f64> = (0..n).map(|_| Precision::Binary32.round(rng.gen_range(-1.0..1.0))).collect();
    let exact = compensated_sum(&values);
    println!("n = {n}, compensated sum = {exact:.17e}\n");
    println!("{:<14} {:>24} {:>12} {:>12}", "profile", "sum", "|error|", "bound");
    for p in &builtin_profiles().profiles {
        let sum = p.reduce(&values);
        let depth = match p.order_policy {
            OrderPolicy::Pairwise => ceil_log2(n),
            OrderPolicy::Sequential | OrderPolicy::Permuted { .. } => n - 1,
            OrderPolicy::ChunkedTree { chunk_size } => chunk_size - 1 + ceil_log2(n.div_ceil(chunk_size)),
        };
        let bound = format!("{:.3e}", error_bound(&values, depth, p.accumulator_precision));
        println!("{:<14} {:>24.17e} {:>12.3e} {:>12}", p.id, sum, (sum - exact).abs(), bound);
    }
}
