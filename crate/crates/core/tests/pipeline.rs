mod common;

use hetpool::data::write_csv;
use hetpool::eval::{
    build_ensembles, cell_seed, load_dataset, run_experiment, run_experiment_resumable, split_for, vote_error,
    with_threads, ExperimentConfig, Method, ResultsTable,
};
use hetpool::format::{decode_ensemble, encode_ensemble};
use hetpool::simplex::{pool, scan_simplex_with, Composition, StridePolicy};

fn tables(cfg: &ExperimentConfig, threads: usize) -> Vec<Vec<u8>> {
    let table = with_threads(threads, || run_experiment(cfg)).unwrap().unwrap();
    let mut out = vec![Vec::new(), Vec::new(), Vec::new()];
    table.write_summary_csv(&mut out[0]).unwrap();
    table.write_runs_csv(&mut out[1]).unwrap();
    table.write_compositions_csv(&mut out[2]).unwrap();
    out
}

fn mixed_config() -> ExperimentConfig {
    ExperimentConfig {
        datasets: vec!["synthetic:twonorm".into(), "synthetic:ringnorm".into()],
        methods: vec![Method::Svm, Method::ESvm, Method::EMlp, Method::Rf, Method::Sim],
        stride: 2,
        stride_policy: StridePolicy::RemainderToLast,
        ..common::tiny_config(9)
    }
}

#[test]
fn results_are_identical_across_thread_counts() {
    let cfg = mixed_config();
    let one = tables(&cfg, 1);
    assert_eq!(one, tables(&cfg, 2));
    assert_eq!(one, tables(&cfg, 8));
}

#[test]
fn manual_pipeline_reproduces_the_experiment_cell() {
    let cfg = mixed_config();
    let table = run_experiment(&cfg).unwrap();
    let (_, data) = load_dataset(&cfg.datasets[1], &cfg.csv).unwrap();
    let seed = cell_seed(cfg.master_seed, 1, 1);
    let (train, test) = split_for(&cfg, &data, seed).unwrap();
    let ens: Vec<_> = build_ensembles(&cfg, &train, seed)
        .unwrap()
        .iter()
        .map(|e| decode_ensemble(&encode_ensemble(e)).unwrap())
        .collect();
    let scan = scan_simplex_with(&ens, cfg.t, cfg.stride, cfg.stride_policy, &train).unwrap();
    let sim = vote_error(&pool(&ens, &scan.optimum).unwrap(), &test).unwrap();

    let cell = table.cells.iter().find(|c| c.dataset_index == 1 && c.repetition == 1).unwrap();
    assert_eq!(cell.seed, seed);
    assert_eq!(cell.error_of(Method::Sim), Some(sim));
    assert_eq!(cell.sim.as_ref().unwrap().composition, scan.optimum);
    let rf = vote_error(&pool(&ens, &Composition::vertex(3, 2, cfg.t)).unwrap(), &test).unwrap();
    assert_eq!(cell.error_of(Method::Rf), Some(rf));
}

#[test]
fn csv_dataset_runs_end_to_end_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let ds = hetpool::data::gen_threenorm(90, 2).unwrap();
    let path = dir.path().join("three.csv");
    write_csv(&ds, &path).unwrap();
    let cfg = ExperimentConfig {
        datasets: vec![format!("csv:{}", path.display())],
        methods: vec![Method::Mlp, Method::EMlp, Method::Sim],
        ..common::tiny_config(6)
    };
    let cells = dir.path().join("cells");
    let fresh: ResultsTable = run_experiment_resumable(&cfg, Some(&cells)).unwrap();
    assert!(fresh.cells.iter().all(|c| c.failure.is_none()));
    assert_eq!(fresh.summary.len(), 3);
    assert!(fresh.summary.iter().all(|r| r.runs.len() == 2));
    let resumed = run_experiment_resumable(&cfg, Some(&cells)).unwrap();
    assert_eq!(fresh, resumed);
}
