//! Building partially optimized SVM and MLP ensembles and a random forest,
//! then saving one to disk and reading it back.
//!
//! Run with: cargo run --release --example homogeneous_ensembles

use hetpool::data::gen_ringnorm;
use hetpool::eval::vote_error;
use hetpool::format::{load_ensemble, save_ensemble};
use hetpool::homogeneous::{
    build_batched_ensemble, build_random_forest, partial_optimize, HomogeneousEnsemble, ParamGrid,
};
use hetpool::learners::ModelKind;

fn report(name: &str, ens: &HomogeneousEnsemble, test: &hetpool::data::Dataset) -> hetpool::Result<()> {
    let models: Vec<_> = ens.models.iter().collect();
    println!("{name}: {} members, test error {:.4}", ens.len(), vote_error(&models, test)?);
    for (k, (p, size)) in ens.batch_params.iter().zip(&ens.batch_sizes).enumerate() {
        println!("  batch {k}: {size} members with {p}");
    }
    Ok(())
}

fn main() -> hetpool::Result<()> {
    let train = gen_ringnorm(300, 11)?;
    let test = gen_ringnorm(2000, 12)?;

    let svm_grid = ParamGrid::svm_default();
    println!("SVM grid has {} nodes", svm_grid.len());
    println!(
        "one partial optimization picks {}",
        partial_optimize(ModelKind::Svm, &train, &svm_grid, 7)?
    );

    let svm = build_batched_ensemble(ModelKind::Svm, &train, 50, 5, &svm_grid, 1)?;
    let mlp = build_batched_ensemble(ModelKind::Mlp, &train, 50, 5, &ParamGrid::mlp_default(), 2)?;
    let rf = build_random_forest(&train, 50, 3)?;
    report("E-SVM", &svm, &test)?;
    report("E-MLP", &mlp, &test)?;
    report("RF", &rf, &test)?;

    let path = std::env::temp_dir().join("hetpool-example-svm.hpe");
    save_ensemble(&svm, &path)?;
    let back = load_ensemble(&path)?;
    println!("\nsaved to {} and reloaded: identical = {}", path.display(), back == svm);
    Ok(())
}
