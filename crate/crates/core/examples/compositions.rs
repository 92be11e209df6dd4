//! Enumerating ensemble compositions on the simplex grid.
//!
//! Run with: cargo run --release --example compositions

use hetpool::simplex::{
    binomial, composition_count, enumerate_compositions, enumerate_compositions_with, select_optimum, Composition,
    StridePolicy,
};

fn main() -> hetpool::Result<()> {
    let all = enumerate_compositions(101, 3, 1)?;
    println!("T=101, M=3, stride 1: {} compositions", all.len());

    let coarse = enumerate_compositions(1001, 3, 13)?;
    println!(
        "T=1001, M=3, stride 13: {} compositions (C(79,2) = {})",
        coarse.len(),
        binomial(79, 2)
    );

    // 13 does not divide 101, so the last coordinate takes the remainder
    let desk = enumerate_compositions_with(101, 3, 13, StridePolicy::RemainderToLast)?;
    println!(
        "T=101, stride 13, remainder to last: {} compositions, e.g. {} and {}",
        desk.len(),
        desk[1],
        desk[desk.len() - 1]
    );

    println!("\nstride 10 grid for T=30:");
    for c in enumerate_compositions(30, 3, 10)? {
        print!("{c} ");
    }
    println!("\n(count formula says {})", composition_count(30, 3, 10));

    let minima: Vec<Composition> = ["3,3,4", "4,4,2"].iter().map(|s| s.parse()).collect::<Result<_, _>>()?;
    let shown: Vec<String> = minima.iter().map(ToString::to_string).collect();
    println!("\ntied minima {} average to {}", shown.join(" "), select_optimum(&minima, 10)?);
    Ok(())
}
