//! Training a decision tree, a perceptron and an RBF support vector machine
//! on one Twonorm sample.
//!
//! Run with: cargo run --release --example base_learners

use std::sync::Arc;

use hetpool::data::{gen_twonorm, subbag, Dataset, IndexSample};
use hetpool::learners::{default_mtry, train_mlp, train_svm, train_tree, BaseModel, ModelParams, Standardizer};

fn test_error(model: &BaseModel, test: &Dataset) -> hetpool::Result<f64> {
    let preds = model.predict_dataset(test)?;
    let wrong = preds.iter().zip(test.labels()).filter(|(p, l)| p != l).count();
    Ok(wrong as f64 / test.n_instances() as f64)
}

fn main() -> hetpool::Result<()> {
    let train = gen_twonorm(300, 1)?;
    let test = gen_twonorm(2000, 2)?;
    let all = IndexSample {
        indices: (0..train.n_instances()).collect(),
        with_replacement: false,
    };

    let tree = train_tree(&train, &all, default_mtry(train.n_features()), 3)?;
    if let ModelParams::Tree(t) = &tree.params {
        println!("tree: {} nodes, depth {}", t.n_nodes(), t.depth());
    }
    println!("tree test error {:.4}", test_error(&tree, &test)?);

    // the perceptron and the SVM expect standardized inputs
    let scaler = Arc::new(Standardizer::fit(&train));
    let z = scaler.transform(&train)?;

    let mlp = train_mlp(&z, &all, 5, 4)?.with_scaler(scaler.clone());
    println!("mlp (5 hidden) test error {:.4}", test_error(&mlp, &test)?);

    let half = subbag(z.n_instances(), 0.5, 5)?;
    let svm = train_svm(&z, &half, 1.0, 0.05)?.with_scaler(scaler);
    if let ModelParams::Svm(s) = &svm.params {
        println!("svm: {} support vectors, converged {}", s.n_support(), s.converged);
    }
    println!("svm (C=1, gamma=0.05, half the rows) test error {:.4}", test_error(&svm, &test)?);
    Ok(())
}
