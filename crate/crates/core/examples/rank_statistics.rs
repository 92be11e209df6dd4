//! Composition entropy, average ranks and the Nemenyi critical difference.
//!
//! Run with: cargo run --release --example rank_statistics

use hetpool::eval::{average_ranks_matrix, composition_entropy, nemenyi_cd};

fn main() -> hetpool::Result<()> {
    for p in [[1.0, 0.0, 0.0], [0.245, 0.167, 0.588], [1.0 / 3.0; 3]] {
        println!("entropy of {p:?} = {:.3} bits", composition_entropy(&p)?);
    }

    // mean test errors of four methods on five datasets
    let methods = ["E-SVM", "E-MLP", "RF", "SIM"];
    let errors = vec![
        vec![0.025, 0.031, 0.040, 0.024],
        vec![0.018, 0.160, 0.060, 0.018],
        vec![0.145, 0.160, 0.170, 0.140],
        vec![0.120, 0.110, 0.100, 0.100],
        vec![0.300, 0.280, 0.290, 0.285],
    ];
    let ranks = average_ranks_matrix(&errors);
    let cd = nemenyi_cd(methods.len(), errors.len(), 0.05)?;
    println!("\naverage ranks over {} datasets (CD at 0.05 = {cd:.3}):", errors.len());
    for (m, r) in methods.iter().zip(&ranks) {
        println!("  {m:<6} {r:.2}");
    }
    println!("\nCD for 4 methods on 19 datasets: {:.3}", nemenyi_cd(4, 19, 0.05)?);
    Ok(())
}
