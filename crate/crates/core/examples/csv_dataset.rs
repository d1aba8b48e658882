//! Round-trips a synthetic dataset through CSV, then splits and
//! standardizes it.

use hwfair::data::{gen_synthetic, load_csv, split, two_group_spec, CsvSchema, Standardizer};

fn main() -> hwfair::Result<()> {
    let ds = gen_synthetic(&two_group_spec(0))?;
    let path = std::env::temp_dir().join("hwfair-two-group.csv");
    ds.write_csv(&path)?;
    println!("{}", std::fs::read_to_string(&path)?.lines().take(3).collect::<Vec<_>>().join("\n"));

    let schema = CsvSchema {
        features: ds.feature_names().to_vec(),
        group: "group".into(),
        label: "label".into(),
    };
    let loaded = load_csv(&path, &schema)?;
    println!("reloaded {} rows, same content hash: {}", loaded.len(), loaded.content_hash() == ds.content_hash());

    let sp = split(&loaded, 0.7, 0)?;
    let st = Standardizer::fit(&sp.train)?;
    let train = st.apply(&sp.train);
    println!("train {:?} / test {:?} per group", train.group_sizes(), sp.test.group_sizes());
    Ok(())
}
