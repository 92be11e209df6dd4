mod oracles;

use hetpool::data::{gen_threenorm, gen_twonorm, Dataset, IndexSample};
use hetpool::learners::mlp::Network;
use hetpool::learners::svm::{dual_objective, rbf_kernel_matrix, solve_dual, SmoOptions};
use hetpool::learners::{train_mlp, train_svm, train_tree, ModelParams};
use hetpool::rng::rng_from_seed;
use proptest::prelude::*;
use rand::Rng;

fn random_problem(seed: u64) -> (Vec<f64>, Vec<f64>, f64) {
    let mut rng = rng_from_seed(seed);
    let n = rng.random_range(2..=10);
    let d = rng.random_range(1..=3);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let mut y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    y[1] = -1.0;
    let gamma = 2f64.powf(rng.random_range(-3.0..1.0));
    let c = 2f64.powf(rng.random_range(-3.0..4.0));
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    (rbf_kernel_matrix(&refs, gamma), y, c)
}

#[test]
fn smo_matches_projected_gradient_oracle() {
    for seed in 0..50 {
        let (k, y, c) = random_problem(seed);
        let sol = solve_dual(&k, &y, c, &SmoOptions::default()).unwrap();
        let (best, _) = oracles::svm_dual_minimum(&k, &y, c, 20_000);
        let ours = dual_objective(&k, &y, &sol.alpha);
        let rel = (ours - best).abs() / best.abs().max(1e-12);
        assert!(rel < 1e-3, "seed {seed}: smo {ours} oracle {best} (rel {rel})");
        assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
        let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, yi)| a * yi).sum();
        assert!(balance.abs() <= 1e-8, "seed {seed}: yᵀα = {balance}");
        assert!(sol.converged && sol.violation <= 1e-3);
    }
}

#[test]
fn oracle_projection_is_feasible() {
    let y = [1.0, -1.0, 1.0, -1.0];
    let p = oracles::project(&[3.0, -1.0, 0.5, 2.0], &y, 1.0);
    assert!(p.iter().all(|&a| (0.0..=1.0).contains(&a)));
    assert!(p.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>().abs() < 1e-9);
}

#[test]
fn mlp_gradient_sweep() {
    let mut rng = rng_from_seed(99);
    for seed in 0..20u64 {
        let inputs = rng.random_range(1..5);
        let hidden = rng.random_range(1..6);
        let outputs = rng.random_range(2..4);
        let rows: Vec<(Vec<f64>, usize)> = (0..5)
            .map(|_| {
                (
                    (0..inputs).map(|_| rng.random_range(-2.0..2.0)).collect(),
                    rng.random_range(0..outputs),
                )
            })
            .collect();
        let net = Network::random(inputs, hidden, outputs, seed);
        let (loss, analytic) = net.loss_and_gradient(rows.iter().map(|(x, t)| (x.as_slice(), *t)));
        assert!((loss - oracles::mlp_loss(&net, &rows)).abs() < 1e-12);
        let numeric = oracles::mlp_numeric_gradient(&net, &rows, 1e-5);
        let err = oracles::max_relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

fn full(ds: &Dataset) -> IndexSample {
    IndexSample {
        indices: (0..ds.n_instances()).collect(),
        with_replacement: false,
    }
}

#[test]
fn trainers_are_deterministic() {
    let ds = gen_threenorm(60, 4).unwrap();
    let s = full(&ds);
    assert_eq!(train_tree(&ds, &s, 4, 9).unwrap(), train_tree(&ds, &s, 4, 9).unwrap());
    assert_eq!(train_mlp(&ds, &s, 3, 9).unwrap(), train_mlp(&ds, &s, 3, 9).unwrap());
    assert_eq!(train_svm(&ds, &s, 1.0, 0.1).unwrap(), train_svm(&ds, &s, 1.0, 0.1).unwrap());
}

#[test]
fn svm_fits_training_data_with_large_c() {
    let ds = gen_twonorm(40, 8).unwrap();
    let m = train_svm(&ds, &full(&ds), 1000.0, 0.5).unwrap();
    let preds = m.predict_dataset(&ds).unwrap();
    assert_eq!(preds, ds.labels());
    let ModelParams::Svm(svm) = &m.params else { panic!("not an svm") };
    assert!(svm.converged);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn tree_is_pure_on_consistent_data(
        raw in proptest::collection::vec((0u8..4, 0u8..4, 0usize..3), 2..40),
        seed in any::<u64>(),
    ) {
        // duplicate feature vectors take the label of their first occurrence
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut labels = Vec::new();
        for (a, b, l) in raw {
            let x = vec![f64::from(a), f64::from(b)];
            let label = rows.iter().position(|r| *r == x).map_or(l, |i| labels[i]);
            rows.push(x);
            labels.push(label);
        }
        prop_assume!(labels.iter().any(|&l| l != labels[0]));
        let k = labels.iter().max().unwrap() + 1;
        let ds = Dataset::from_rows(&rows, labels, k.max(2)).unwrap();
        let model = train_tree(&ds, &full(&ds), 1, seed).unwrap();
        prop_assert_eq!(model.predict_dataset(&ds).unwrap(), ds.labels().to_vec());
    }
}
