//! Small, fast fixtures shared by the integration tests.

#![allow(dead_code)]

use hetpool::data::{gen_twonorm, Dataset};
use hetpool::eval::{build_ensembles, ExperimentConfig};
use hetpool::homogeneous::{GridAxis, HomogeneousEnsemble, ParamGrid};

pub fn tiny_svm_grid() -> ParamGrid {
    ParamGrid::new(vec![
        GridAxis {
            name: "c".into(),
            values: vec![1.0, 8.0],
        },
        GridAxis {
            name: "gamma".into(),
            values: vec![0.05, 0.2],
        },
    ])
    .unwrap()
}

pub fn tiny_mlp_grid() -> ParamGrid {
    ParamGrid::new(vec![GridAxis {
        name: "hidden".into(),
        values: vec![3.0, 4.0],
    }])
    .unwrap()
}

/// A configuration that finishes a cell in well under a second.
pub fn tiny_config(t: usize) -> ExperimentConfig {
    ExperimentConfig {
        repetitions: 2,
        t,
        b: t.min(2),
        stride: 1,
        svm_grid: tiny_svm_grid(),
        mlp_grid: tiny_mlp_grid(),
        train_n: 60,
        test_n: 200,
        cv_folds: 3,
        ..ExperimentConfig::default()
    }
}

pub fn tiny_ensembles(t: usize, seed: u64) -> (Dataset, Vec<HomogeneousEnsemble>) {
    let train = gen_twonorm(60, seed).unwrap();
    let ens = build_ensembles(&tiny_config(t), &train, seed).unwrap();
    (train, ens)
}
