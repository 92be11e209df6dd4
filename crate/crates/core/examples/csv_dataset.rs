//! Loading a CSV file with a categorical column, then splitting it.
//!
//! Run with: cargo run --release --example csv_dataset

use hetpool::data::{load_csv, stratified_split, CsvOptions, SplitSpec};

const SAMPLE: &str = "\
temperature,pulse,surgery,class
38.5,66,yes,lived
39.2,88,no,died
38.3,40,yes,lived
39.1,164,no,died
37.3,104,yes,lived
38.1,90,no,lived
37.9,48,yes,lived
40.3,114,no,died
38.4,60,yes,lived
37.8,72,no,died
";

fn main() -> hetpool::Result<()> {
    let path = std::env::temp_dir().join("hetpool-example-colic.csv");
    std::fs::write(&path, SAMPLE).expect("temp dir is writable");

    let ds = load_csv(&path, &CsvOptions::default())?;
    println!("{} rows, {} features: {:?}", ds.n_instances(), ds.n_features(), ds.feature_names());
    println!("classes {:?} with counts {:?}", ds.class_names(), ds.class_counts());
    println!("first row {:?} -> {}", ds.row(0), ds.class_names()[ds.label(0)]);
    println!("fingerprint {}", &ds.fingerprint()[..16]);

    let (train, test) = stratified_split(&ds, &SplitSpec::new(2.0 / 3.0, 42)?)?;
    println!(
        "stratified 2/3 split: train counts {:?}, test counts {:?}",
        train.class_counts(),
        test.class_counts()
    );
    Ok(())
}
