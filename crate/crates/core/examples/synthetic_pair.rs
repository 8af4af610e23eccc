//! Write a synthetic mean-reverting pair as train.csv / test.csv.
//!
//! cargo run --release --example synthetic_pair -- OUT_DIR [TRAIN_ROWS TEST_ROWS SEED]

use std::path::PathBuf;

use robarb::market_data::write_series;
use robarb::synthetic::OuPair;

fn main() -> robarb::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = PathBuf::from(args.first().map(String::as_str).unwrap_or("."));
    let num = |i: usize, default: u64| args.get(i).map_or(default, |s| s.parse().expect("integer argument"));
    let (train_rows, test_rows, seed) = (num(1, 2000) as usize, num(2, 300) as usize, num(3, 0));
    let series = OuPair::default().generate(train_rows + test_rows, seed)?;
    std::fs::create_dir_all(&out).expect("create output directory");
    write_series(&series.slice(0, train_rows), out.join("train.csv"))?;
    write_series(&series.slice(train_rows, train_rows + test_rows), out.join("test.csv"))?;
    Ok(())
}
