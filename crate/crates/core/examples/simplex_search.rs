//! Out-of-bag search for the best mix of SVMs, MLPs and trees, with the
//! error surface written as CSV.
//!
//! Run with: cargo run --release --example simplex_search

use hetpool::data::gen_threenorm;
use hetpool::eval::vote_error;
use hetpool::homogeneous::{build_batched_ensemble, build_random_forest, ParamGrid};
use hetpool::learners::ModelKind;
use hetpool::simplex::{export_heatmap, pool, scan_simplex, Composition};

fn main() -> hetpool::Result<()> {
    let train = gen_threenorm(300, 21)?;
    let test = gen_threenorm(2000, 22)?;
    let t = 60;
    let ensembles = vec![
        build_batched_ensemble(ModelKind::Svm, &train, t, 3, &ParamGrid::svm_default(), 1)?,
        build_batched_ensemble(ModelKind::Mlp, &train, t, 3, &ParamGrid::mlp_default(), 2)?,
        build_random_forest(&train, t, 3)?,
    ];

    let scan = scan_simplex(&ensembles, t, 6, &train)?;
    println!("{} compositions scored", scan.entries.len());
    println!("minimum OOB error {:.4} reached by {} composition(s)", scan.min_error(), scan.minima.len());
    println!(
        "selected {} (OOB error {:.4}, {:.1}% of rows covered)",
        scan.optimum,
        scan.optimum_estimate.error,
        100.0 * scan.optimum_estimate.covered_fraction
    );

    for (j, name) in ["all SVM", "all MLP", "all trees"].iter().enumerate() {
        let v = pool(&ensembles, &Composition::vertex(3, j, t))?;
        println!("{name:>9}: test error {:.4}", vote_error(&v, &test)?);
    }
    println!("{:>9}: test error {:.4}", "selected", vote_error(&pool(&ensembles, &scan.optimum)?, &test)?);

    let path = std::env::temp_dir().join("hetpool-example-heatmap.csv");
    export_heatmap(&scan, &path)?;
    println!("\nheatmap written to {}", path.display());
    Ok(())
}
