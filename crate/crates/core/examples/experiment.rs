//! A reduced repeated-split comparison of single models, homogeneous
//! ensembles and the selected heterogeneous mix.
//!
//! Run with: cargo run --release --example experiment [repetitions]

use hetpool::eval::{average_ranks, nemenyi_cd, run_experiment, ExperimentConfig, Method};
use hetpool::simplex::StridePolicy;

fn main() -> hetpool::Result<()> {
    let repetitions = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let cfg = ExperimentConfig {
        datasets: vec!["synthetic:twonorm".into(), "synthetic:ringnorm".into()],
        methods: vec![Method::ESvm, Method::EMlp, Method::Rf, Method::Sim],
        repetitions,
        t: 51,
        b: 3,
        stride: 10,
        stride_policy: StridePolicy::RemainderToLast,
        master_seed: 2024,
        ..ExperimentConfig::default()
    };
    let table = run_experiment(&cfg)?;

    let mut stdout = std::io::stdout();
    table.write_summary_csv(&mut stdout)?;
    println!();
    table.write_compositions_csv(&mut stdout)?;

    let ranks = average_ranks(&table, &table.methods)?;
    let cd = nemenyi_cd(table.methods.len(), table.datasets.len(), 0.05)?;
    println!("\naverage ranks (CD {cd:.3}):");
    for (m, r) in table.methods.iter().zip(ranks) {
        println!("  {m:<6} {r:.2}");
    }
    Ok(())
}
