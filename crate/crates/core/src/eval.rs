//! Repeated-split experiments, error tables and rank statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{load_csv, stratified_split, CsvOptions, Dataset, IndexSample, SplitSpec, SyntheticProblem};
use crate::error::{Error, Result};
use crate::homogeneous::{
    build_batched_ensemble_with, build_random_forest, tally_winner, BuildOptions, HomogeneousEnsemble, ParamGrid,
};
use crate::learners::{self, BaseModel, ModelKind, Standardizer};
use crate::rng::{derive_path, rng_from_seed, stream};
use crate::simplex::{pool, scan_simplex_with, Composition, StridePolicy};

/// A column of the results table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "SVM")]
    Svm,
    #[serde(rename = "MLP")]
    Mlp,
    #[serde(rename = "E-SVM")]
    ESvm,
    #[serde(rename = "E-MLP")]
    EMlp,
    #[serde(rename = "RF")]
    Rf,
    #[serde(rename = "SIM")]
    Sim,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Svm, Method::Mlp, Method::ESvm, Method::EMlp, Method::Rf, Method::Sim];

    pub fn name(self) -> &'static str {
        match self {
            Method::Svm => "SVM",
            Method::Mlp => "MLP",
            Method::ESvm => "E-SVM",
            Method::EMlp => "E-MLP",
            Method::Rf => "RF",
            Method::Sim => "SIM",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// Where a dataset comes from: `synthetic:<name>`, `csv:<path>` or a bare path.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    Synthetic(SyntheticProblem),
    Csv(PathBuf),
}

impl DatasetSource {
    pub fn parse(uri: &str) -> Result<Self> {
        if uri.starts_with("synthetic:") {
            return Ok(DatasetSource::Synthetic(uri.parse()?));
        }
        let path = uri.strip_prefix("csv:").unwrap_or(uri);
        if path.is_empty() {
            return Err(Error::InvalidArgument(format!("empty dataset path in `{uri}`")));
        }
        Ok(DatasetSource::Csv(PathBuf::from(path)))
    }

    pub fn name(&self) -> String {
        match self {
            DatasetSource::Synthetic(p) => p.name().to_string(),
            DatasetSource::Csv(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub datasets: Vec<String>,
    pub methods: Vec<Method>,
    pub repetitions: usize,
    pub t: usize,
    pub b: usize,
    pub stride: usize,
    pub stride_policy: StridePolicy,
    pub svm_grid: ParamGrid,
    pub mlp_grid: ParamGrid,
    pub master_seed: u64,
    /// Sizes of the fresh training and test samples for synthetic problems.
    pub train_n: usize,
    pub test_n: usize,
    /// Training share of the stratified split for file datasets.
    pub train_fraction: f64,
    /// Folds of the within-train grid search for the single SVM and MLP.
    pub cv_folds: usize,
    pub build: BuildOptions,
    pub csv: CsvOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            datasets: vec!["synthetic:twonorm".into()],
            methods: vec![Method::ESvm, Method::EMlp, Method::Rf, Method::Sim],
            repetitions: 100,
            t: 1001,
            b: 10,
            stride: 13,
            stride_policy: StridePolicy::Strict,
            svm_grid: ParamGrid::svm_default(),
            mlp_grid: ParamGrid::mlp_default(),
            master_seed: 0,
            train_n: 300,
            test_n: 2000,
            train_fraction: 2.0 / 3.0,
            cv_folds: 10,
            build: BuildOptions::default(),
            csv: CsvOptions::default(),
        }
    }
}

impl ExperimentConfig {
    /// Checks every constraint that can be checked without touching data.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.datasets.is_empty() {
            return bad("no datasets".into());
        }
        for d in &self.datasets {
            DatasetSource::parse(d).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.methods.is_empty() {
            return bad("no methods".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.t == 0 {
            return bad("t must be at least 1".into());
        }
        if self.b == 0 || self.b > self.t {
            return bad(format!("b = {} must lie in [1, t = {}]", self.b, self.t));
        }
        if self.stride == 0 || self.stride > self.t {
            return bad(format!("stride = {} must lie in [1, t = {}]", self.stride, self.t));
        }
        if self.stride_policy == StridePolicy::Strict && !self.t.is_multiple_of(self.stride) {
            return bad(format!("stride {} does not divide t = {}", self.stride, self.t));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction = {} must lie in (0, 1)", self.train_fraction));
        }
        if !(self.build.subbag_rate > 0.0 && self.build.subbag_rate < 1.0) {
            return bad(format!("subbag_rate = {} must lie in (0, 1)", self.build.subbag_rate));
        }
        if self.train_n < 4 || self.test_n == 0 {
            return bad("synthetic sizes need train_n >= 4 and test_n >= 1".into());
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2".into());
        }
        if self.build.mlp.epochs == 0 || self.build.mlp.learning_rate.is_nan() || self.build.mlp.learning_rate <= 0.0 {
            return bad("mlp epochs and learning rate must be positive".into());
        }
        if self.build.smo.tolerance.is_nan() || self.build.smo.tolerance <= 0.0 {
            return bad("smo tolerance must be positive".into());
        }
        self.svm_grid.validate().map_err(|e| Error::Config(format!("svm grid: {e}")))?;
        self.mlp_grid.validate().map_err(|e| Error::Config(format!("mlp grid: {e}")))?;
        for (kind, grid) in [(ModelKind::Svm, &self.svm_grid), (ModelKind::Mlp, &self.mlp_grid)] {
            for i in 0..grid.len() {
                grid.hyperparams(kind, i).map_err(|e| Error::Config(format!("{kind} grid: {e}")))?;
            }
        }
        Ok(())
    }

    /// Hash of every setting that influences results, used to tell whether
    /// a saved cell belongs to this configuration.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(format!("{self:?}").as_bytes()))
    }

    fn needs(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }
}

/// Composition picked by the simplex search in one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    /// Counts in the order SVM, MLP, tree.
    pub composition: Composition,
    pub proportions: Vec<f64>,
    pub entropy: f64,
    pub oob_error: f64,
    pub covered_fraction: f64,
}

/// Outcome of one (dataset, repetition) job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub dataset: String,
    pub dataset_index: usize,
    pub repetition: usize,
    pub seed: u64,
    /// Test error per method, in configuration order.
    pub errors: Vec<(Method, f64)>,
    pub sim: Option<SimRecord>,
    pub failure: Option<String>,
}

impl CellRecord {
    pub fn error_of(&self, m: Method) -> Option<f64> {
        self.errors.iter().find(|(x, _)| *x == m).map(|&(_, e)| e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub method: Method,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
    pub runs: Vec<f64>,
    pub missing: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionSummary {
    pub dataset: String,
    /// Mean share of SVMs, MLPs and trees over the runs.
    pub mean_proportions: Vec<f64>,
    /// Entropy of the mean shares.
    pub entropy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub datasets: Vec<String>,
    pub methods: Vec<Method>,
    pub cells: Vec<CellRecord>,
    pub summary: Vec<SummaryRow>,
    pub compositions: Vec<CompositionSummary>,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ResultsTable {
    /// Aggregates cells into per-(dataset, method) rows.
    pub fn from_cells(datasets: Vec<String>, methods: Vec<Method>, mut cells: Vec<CellRecord>) -> Self {
        cells.sort_by_key(|c| (c.dataset_index, c.repetition));
        let mut summary = Vec::new();
        let mut compositions = Vec::new();
        for (di, name) in datasets.iter().enumerate() {
            let mine: Vec<&CellRecord> = cells.iter().filter(|c| c.dataset_index == di).collect();
            for &m in &methods {
                let runs: Vec<f64> = mine.iter().filter_map(|c| c.error_of(m)).collect();
                let (mean, std) = mean_std(&runs);
                summary.push(SummaryRow {
                    dataset: name.clone(),
                    method: m,
                    mean,
                    std,
                    missing: mine.len() - runs.len(),
                    runs,
                });
            }
            let sims: Vec<&SimRecord> = mine.iter().filter_map(|c| c.sim.as_ref()).collect();
            if let Some(first) = sims.first() {
                let m = first.proportions.len();
                let mean_proportions: Vec<f64> = (0..m)
                    .map(|j| sims.iter().map(|s| s.proportions[j]).sum::<f64>() / sims.len() as f64)
                    .collect();
                let entropy = composition_entropy(&mean_proportions).unwrap_or(f64::NAN);
                compositions.push(CompositionSummary {
                    dataset: name.clone(),
                    mean_proportions,
                    entropy,
                });
            }
        }
        ResultsTable {
            datasets,
            methods,
            cells,
            summary,
            compositions,
        }
    }

    pub fn row(&self, dataset: &str, method: Method) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.dataset == dataset && r.method == method)
    }

    pub fn mean(&self, dataset: &str, method: Method) -> Option<f64> {
        self.row(dataset, method).filter(|r| !r.runs.is_empty()).map(|r| r.mean)
    }

    pub fn write_summary_csv(&self, mut w: impl Write) -> Result<()> {
        let io = |e| Error::io("<summary>", e);
        writeln!(w, "dataset,method,mean_error,std_error,n_runs,n_missing").map_err(io)?;
        for r in &self.summary {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.dataset,
                r.method,
                fmt_opt(r.mean),
                fmt_opt(r.std),
                r.runs.len(),
                r.missing
            )
            .map_err(io)?;
        }
        Ok(())
    }

    /// One row per (dataset, repetition, method).
    pub fn write_runs_csv(&self, mut w: impl Write) -> Result<()> {
        let io = |e| Error::io("<runs>", e);
        writeln!(
            w,
            "dataset,repetition,method,test_error,t_svm,t_mlp,t_tree,entropy,oob_error,status"
        )
        .map_err(io)?;
        for c in &self.cells {
            for &m in &self.methods {
                let err = c.error_of(m).map(fmt_f64).unwrap_or_else(|| "NA".into());
                let sim = if m == Method::Sim { c.sim.as_ref() } else { None };
                let (counts, entropy, oob) = match sim {
                    Some(s) => (
                        s.composition.counts.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
                        fmt_f64(s.entropy),
                        fmt_f64(s.oob_error),
                    ),
                    None => (",,".into(), String::new(), String::new()),
                };
                let status = match &c.failure {
                    Some(f) => format!("\"failed: {}\"", f.replace('"', "'")),
                    None => "ok".into(),
                };
                writeln!(w, "{},{},{m},{err},{counts},{entropy},{oob},{status}", c.dataset, c.repetition)
                    .map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn write_compositions_csv(&self, mut w: impl Write) -> Result<()> {
        let io = |e| Error::io("<compositions>", e);
        writeln!(w, "dataset,pct_svm,pct_mlp,pct_tree,entropy").map_err(io)?;
        for c in &self.compositions {
            let pct: Vec<String> = c.mean_proportions.iter().map(|p| fmt_f64(100.0 * p)).collect();
            writeln!(w, "{},{},{}", c.dataset, pct.join(","), fmt_f64(c.entropy)).map_err(io)?;
        }
        Ok(())
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        fmt_f64(v)
    }
}

/// Shannon entropy in bits, with `0·log 0 = 0`.
pub fn composition_entropy(p: &[f64]) -> Result<f64> {
    if let Some(x) = p.iter().find(|x| **x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("negative or non-finite share {x}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("shares sum to {total}, not 1")));
    }
    // subtracting from 0.0 keeps a vertex at +0 rather than -0
    Ok(0.0 - p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.log2()).sum::<f64>())
}

/// Ranks of `values` (1 = smallest), ties sharing their average rank.
pub fn rank_with_ties(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Mean rank of each column over the rows of `errors` (`rows = datasets`).
pub fn average_ranks_matrix(errors: &[Vec<f64>]) -> Vec<f64> {
    let k = errors.first().map_or(0, Vec::len);
    let mut acc = vec![0.0; k];
    for row in errors {
        for (a, r) in acc.iter_mut().zip(rank_with_ties(row)) {
            *a += r;
        }
    }
    let n = errors.len().max(1) as f64;
    acc.into_iter().map(|a| a / n).collect()
}

/// Average rank of each method across datasets, ranking by mean test error.
pub fn average_ranks(table: &ResultsTable, methods: &[Method]) -> Result<Vec<f64>> {
    let mut matrix = Vec::with_capacity(table.datasets.len());
    for d in &table.datasets {
        let row = methods
            .iter()
            .map(|&m| table.mean(d, m).ok_or_else(|| Error::MissingCells(format!("{d} / {m}"))))
            .collect::<Result<Vec<f64>>>()?;
        matrix.push(row);
    }
    if matrix.is_empty() {
        return Err(Error::MissingCells("no datasets".into()));
    }
    Ok(average_ranks_matrix(&matrix))
}

/// Two-tailed Nemenyi critical values `q_α` for k = 2..=10 (studentized range
/// statistic divided by √2), as tabulated by Demšar (2006, Table 5).
const Q_05: [f64; 9] = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];
const Q_10: [f64; 9] = [1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920];

/// Critical difference of average ranks for `k` methods over `n` datasets.
pub fn nemenyi_cd(k: usize, n: usize, alpha: f64) -> Result<f64> {
    if !(2..=10).contains(&k) {
        return Err(Error::InvalidArgument(format!("Nemenyi table covers 2..=10 methods, got {k}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one dataset".into()));
    }
    let table = if (alpha - 0.05).abs() < 1e-12 {
        &Q_05
    } else if (alpha - 0.10).abs() < 1e-12 {
        &Q_10
    } else {
        return Err(Error::InvalidArgument(format!("alpha must be 0.05 or 0.10, got {alpha}")));
    };
    let q = table[k - 2];
    Ok(q * ((k * (k + 1)) as f64 / (6.0 * n as f64)).sqrt())
}

/// Writes `method,avg_rank,cd,alpha`.
pub fn write_ranks_csv(methods: &[Method], ranks: &[f64], cd: f64, alpha: f64, mut w: impl Write) -> Result<()> {
    let io = |e| Error::io("<ranks>", e);
    writeln!(w, "method,avg_rank,cd,alpha").map_err(io)?;
    for (m, r) in methods.iter().zip(ranks) {
        writeln!(w, "{m},{},{},{}", fmt_f64(*r), fmt_f64(cd), fmt_f64(alpha)).map_err(io)?;
    }
    Ok(())
}

/// Fold id per row such that every class is spread evenly over `k` folds.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > labels.len() {
        return Err(Error::InvalidArgument(format!("cannot make {k} folds from {} rows", labels.len())));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = rng_from_seed(seed);
    let mut folds = vec![0; labels.len()];
    let mut next = 0;
    for c in 0..n_classes {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        rows.shuffle(&mut rng);
        for i in rows {
            folds[i] = next % k;
            next += 1;
        }
    }
    Ok(folds)
}

/// Grid search by stratified `k`-fold cross-validation on `ds`; returns the
/// model refit on all of `ds` with the best node (ties to the lowest index).
pub fn cv_grid_search(
    kind: ModelKind,
    ds: &Dataset,
    grid: &ParamGrid,
    folds: usize,
    opts: &BuildOptions,
    seed: u64,
) -> Result<BaseModel> {
    let scaler = Arc::new(Standardizer::fit(ds));
    let z = scaler.transform(ds)?;
    let fold_of = stratified_folds(z.labels(), folds, derive_path(seed, &[stream::FOLDS]))?;
    let splits: Vec<(IndexSample, Vec<usize>)> = (0..folds)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..z.n_instances()).partition(|&i| fold_of[i] == f);
            (
                IndexSample {
                    indices: train,
                    with_replacement: false,
                },
                test,
            )
        })
        .collect();
    let scores: Vec<Option<usize>> = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let hp = grid.hyperparams(kind, node).ok()?;
            let mut wrong = 0;
            for (f, (train, test)) in splits.iter().enumerate() {
                let model = learners::train(
                    &z,
                    train,
                    &hp,
                    &opts.mlp,
                    &opts.smo,
                    derive_path(seed, &[stream::INIT, node as u64, f as u64]),
                )
                .ok()?;
                wrong += test.iter().filter(|&&i| model.predict_unchecked(z.row(i)) != z.label(i)).count();
            }
            Some(wrong)
        })
        .collect();
    let best = scores
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|s| (i, s)))
        .min_by_key(|&(i, s)| (s, i))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidArgument(format!("no {kind} grid node could be trained")))?;
    let hp = grid.hyperparams(kind, best)?;
    let all = IndexSample {
        indices: (0..z.n_instances()).collect(),
        with_replacement: false,
    };
    let model = learners::train(&z, &all, &hp, &opts.mlp, &opts.smo, derive_path(seed, &[stream::MODEL]))?;
    Ok(model.with_scaler(scaler))
}

/// 0-1 test error of a majority vote over `models`.
pub fn vote_error(models: &[&BaseModel], test: &Dataset) -> Result<f64> {
    let preds: Vec<Vec<usize>> = models.par_iter().map(|m| m.predict_dataset(test)).collect::<Result<_>>()?;
    Ok(vote_error_from(&preds, test))
}

fn vote_error_from(preds: &[Vec<usize>], test: &Dataset) -> f64 {
    let k = test.n_classes();
    let mut wrong = 0;
    let mut votes = vec![0u32; k];
    for i in 0..test.n_instances() {
        votes.iter_mut().for_each(|v| *v = 0);
        for p in preds {
            votes[p[i]] += 1;
        }
        if tally_winner(&votes) != test.label(i) {
            wrong += 1;
        }
    }
    wrong as f64 / test.n_instances() as f64
}

/// A loaded dataset, or the generator for fresh synthetic samples.
#[derive(Clone, Debug)]
pub enum LoadedDataset {
    Synthetic(SyntheticProblem),
    Table(Arc<Dataset>),
}

pub fn load_dataset(uri: &str, csv: &CsvOptions) -> Result<(String, LoadedDataset)> {
    let src = DatasetSource::parse(uri)?;
    let name = src.name();
    let loaded = match src {
        DatasetSource::Synthetic(p) => LoadedDataset::Synthetic(p),
        DatasetSource::Csv(path) => LoadedDataset::Table(Arc::new(load_csv(path, csv)?)),
    };
    Ok((name, loaded))
}

/// Training and test sets for repetition `seed`.
pub fn split_for(cfg: &ExperimentConfig, data: &LoadedDataset, seed: u64) -> Result<(Dataset, Dataset)> {
    match data {
        LoadedDataset::Synthetic(p) => Ok((
            p.generate(cfg.train_n, derive_path(seed, &[stream::TRAIN_SET]))?,
            p.generate(cfg.test_n, derive_path(seed, &[stream::TEST_SET]))?,
        )),
        LoadedDataset::Table(ds) => {
            let spec = SplitSpec {
                train_fraction: cfg.train_fraction,
                stratified: true,
                seed: derive_path(seed, &[stream::SPLIT]),
            };
            stratified_split(ds, &spec)
        }
    }
}

pub fn cell_seed(master: u64, dataset_index: usize, repetition: usize) -> u64 {
    derive_path(
        master,
        &[stream::DATASET, dataset_index as u64, stream::REPETITION, repetition as u64],
    )
}

/// The three homogeneous ensembles (SVM, MLP, tree order) for one training set.
pub fn build_ensembles(cfg: &ExperimentConfig, train: &Dataset, seed: u64) -> Result<Vec<HomogeneousEnsemble>> {
    let ens_seed = |kind: ModelKind| derive_path(seed, &[stream::ENSEMBLE, kind.tag() as u64]);
    let svm = build_batched_ensemble_with(
        ModelKind::Svm,
        train,
        cfg.t,
        cfg.b,
        &cfg.svm_grid,
        ens_seed(ModelKind::Svm),
        &cfg.build,
    )?;
    let mlp = build_batched_ensemble_with(
        ModelKind::Mlp,
        train,
        cfg.t,
        cfg.b,
        &cfg.mlp_grid,
        ens_seed(ModelKind::Mlp),
        &cfg.build,
    )?;
    let rf = build_random_forest(train, cfg.t, ens_seed(ModelKind::Tree))?;
    Ok(vec![svm, mlp, rf])
}

/// Test errors in configuration order, plus the SIM record when selected.
type CellOutcome = (Vec<(Method, f64)>, Option<SimRecord>);

fn run_cell_inner(
    cfg: &ExperimentConfig,
    data: &LoadedDataset,
    seed: u64,
) -> Result<CellOutcome> {
    let (train, test) = split_for(cfg, data, seed)?;
    let mut errors = BTreeMap::new();
    let mut sim = None;

    let need_ensembles = [Method::ESvm, Method::EMlp, Method::Rf, Method::Sim]
        .iter()
        .any(|&m| cfg.needs(m));
    if need_ensembles {
        let ens = build_ensembles(cfg, &train, seed)?;
        for (m, e) in [(Method::ESvm, &ens[0]), (Method::EMlp, &ens[1]), (Method::Rf, &ens[2])] {
            if cfg.needs(m) {
                errors.insert(m, vote_error(&e.models.iter().collect::<Vec<_>>(), &test)?);
            }
        }
        if cfg.needs(Method::Sim) {
            let scan = scan_simplex_with(&ens, cfg.t, cfg.stride, cfg.stride_policy, &train)?;
            let pooled = pool(&ens, &scan.optimum)?;
            errors.insert(Method::Sim, vote_error(&pooled, &test)?);
            let proportions = scan.optimum.proportions();
            sim = Some(SimRecord {
                entropy: composition_entropy(&proportions)?,
                proportions,
                composition: scan.optimum.clone(),
                oob_error: scan.optimum_estimate.error,
                covered_fraction: scan.optimum_estimate.covered_fraction,
            });
        }
    }
    for (m, kind, grid) in [
        (Method::Svm, ModelKind::Svm, &cfg.svm_grid),
        (Method::Mlp, ModelKind::Mlp, &cfg.mlp_grid),
    ] {
        if cfg.needs(m) {
            let s = derive_path(seed, &[stream::MODEL, kind.tag() as u64]);
            let model = cv_grid_search(kind, &train, grid, cfg.cv_folds, &cfg.build, s)?;
            errors.insert(m, vote_error(&[&model], &test)?);
        }
    }
    let ordered = cfg
        .methods
        .iter()
        .filter_map(|m| errors.get(m).map(|&e| (*m, e)))
        .collect();
    Ok((ordered, sim))
}

/// Runs one (dataset, repetition) job; a failure is recorded, not raised.
pub fn run_cell(cfg: &ExperimentConfig, name: &str, dataset_index: usize, data: &LoadedDataset, repetition: usize) -> CellRecord {
    let seed = cell_seed(cfg.master_seed, dataset_index, repetition);
    let (errors, sim, failure) = match run_cell_inner(cfg, data, seed) {
        Ok((e, s)) => (e, s, None),
        Err(e) => (Vec::new(), None, Some(e.to_string())),
    };
    CellRecord {
        dataset: name.to_string(),
        dataset_index,
        repetition,
        seed,
        errors,
        sim,
        failure,
    }
}

#[derive(Serialize, Deserialize)]
struct SavedCell {
    config: String,
    cell: CellRecord,
}

pub fn cell_path(dir: &Path, dataset_index: usize, repetition: usize) -> PathBuf {
    dir.join(format!("cell-{dataset_index:03}-{repetition:04}.json"))
}

/// Reads a finished cell written for the same configuration.
pub fn load_cell(dir: &Path, cfg_fingerprint: &str, dataset_index: usize, repetition: usize) -> Option<CellRecord> {
    let text = std::fs::read_to_string(cell_path(dir, dataset_index, repetition)).ok()?;
    let saved: SavedCell = serde_json::from_str(&text).ok()?;
    (saved.config == cfg_fingerprint && saved.cell.failure.is_none()).then_some(saved.cell)
}

fn save_cell(dir: &Path, cfg_fingerprint: &str, cell: &CellRecord) -> Result<()> {
    let path = cell_path(dir, cell.dataset_index, cell.repetition);
    let text = serde_json::to_string_pretty(&SavedCell {
        config: cfg_fingerprint.to_string(),
        cell: cell.clone(),
    })?;
    // write then rename so an interrupted run never leaves a half cell behind
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultsTable> {
    run_experiment_resumable(cfg, None)
}

/// Like [`run_experiment`], but with `cell_dir` set every finished cell is
/// saved there and cells already present for this configuration are reused.
pub fn run_experiment_resumable(cfg: &ExperimentConfig, cell_dir: Option<&Path>) -> Result<ResultsTable> {
    cfg.validate()?;
    if let Some(dir) = cell_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let loaded: Vec<(String, LoadedDataset)> = cfg
        .datasets
        .iter()
        .map(|uri| load_dataset(uri, &cfg.csv))
        .collect::<Result<_>>()?;
    let fingerprint = cfg.fingerprint();
    let jobs: Vec<(usize, usize)> = (0..loaded.len())
        .flat_map(|d| (0..cfg.repetitions).map(move |r| (d, r)))
        .collect();
    let total = jobs.len();
    let cells: Vec<CellRecord> = jobs
        .into_par_iter()
        .map(|(d, r)| {
            let (name, data) = &loaded[d];
            if let Some(cell) = cell_dir.and_then(|dir| load_cell(dir, &fingerprint, d, r)) {
                log::info!("{name} rep {r}: reused saved cell");
                return Ok(cell);
            }
            let cell = run_cell(cfg, name, d, data, r);
            match &cell.failure {
                Some(f) => log::warn!("{name} rep {r}: failed: {f}"),
                None => log::info!(
                    "{name} rep {r} ({total} cells): {}",
                    cell.errors
                        .iter()
                        .map(|(m, e)| format!("{m}={e:.4}"))
                        .collect::<Vec<_>>()
                        .join(" ")
                ),
            }
            if let Some(dir) = cell_dir {
                save_cell(dir, &fingerprint, &cell)?;
            }
            Ok(cell)
        })
        .collect::<Result<_>>()?;
    Ok(ResultsTable::from_cells(
        loaded.into_iter().map(|(n, _)| n).collect(),
        cfg.methods.clone(),
        cells,
    ))
}

/// Runs `f` on a dedicated pool of `threads` workers (0 = rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn entropy_values() {
        assert!((composition_entropy(&[1.0 / 3.0; 3]).unwrap() - 3f64.log2()).abs() < 1e-12);
        assert_eq!(composition_entropy(&[1.0, 0.0, 0.0]).unwrap(), 0.0);
        let h = composition_entropy(&[0.245, 0.167, 0.588]).unwrap();
        assert!((h - 1.38).abs() < 0.01, "{h}");
        assert!(composition_entropy(&[-0.1, 1.1]).is_err());
        assert!(composition_entropy(&[0.5, 0.4]).is_err());
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(rank_with_ties(&[0.1, 0.2]), [1.0, 2.0]);
        assert_eq!(rank_with_ties(&[0.3, 0.3]), [1.5, 1.5]);
        assert_eq!(rank_with_ties(&[0.2, 0.1, 0.2, 0.05]), [3.5, 2.0, 3.5, 1.0]);
        let m = vec![vec![0.1, 0.2], vec![0.3, 0.4], vec![0.0, 0.5]];
        assert_eq!(average_ranks_matrix(&m), [1.0, 2.0]);
    }

    #[test]
    fn nemenyi_values() {
        let cd = nemenyi_cd(4, 19, 0.05).unwrap();
        assert!((cd - 2.569 * (20.0f64 / 114.0).sqrt()).abs() < 1e-12);
        assert!((cd - 1.077).abs() < 0.002);
        for n in [1, 5, 30] {
            assert!((nemenyi_cd(2, n, 0.05).unwrap() - 1.960 / (n as f64).sqrt()).abs() < 1e-12);
        }
        let (a, b, c) = (
            nemenyi_cd(5, 10, 0.1).unwrap(),
            nemenyi_cd(5, 100, 0.1).unwrap(),
            nemenyi_cd(5, 1000, 0.1).unwrap(),
        );
        assert!(a > b && b > c && c > 0.0);
        assert!(nemenyi_cd(11, 10, 0.05).is_err());
        assert!(nemenyi_cd(4, 10, 0.01).is_err());
    }

    #[test]
    fn mean_and_sample_std() {
        assert_eq!(mean_std(&[0.2]), (0.2, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<usize> = (0..30).map(|i| usize::from(i % 3 == 0)).collect();
        let folds = stratified_folds(&labels, 5, 1).unwrap();
        for f in 0..5 {
            let ones = (0..30).filter(|&i| folds[i] == f && labels[i] == 1).count();
            assert_eq!(ones, 2);
            assert_eq!(folds.iter().filter(|&&x| x == f).count(), 6);
        }
        assert!(stratified_folds(&labels, 31, 1).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = ExperimentConfig::default();
        ok.validate().unwrap();
        for broken in [
            ExperimentConfig { stride: 10, ..ok.clone() },
            ExperimentConfig { b: 2000, ..ok.clone() },
            ExperimentConfig { train_fraction: 1.0, ..ok.clone() },
            ExperimentConfig { repetitions: 0, ..ok.clone() },
            ExperimentConfig { methods: vec![], ..ok.clone() },
        ] {
            assert!(matches!(broken.validate(), Err(Error::Config(_))));
        }
        let lenient = ExperimentConfig {
            t: 101,
            stride: 13,
            stride_policy: StridePolicy::RemainderToLast,
            ..ok
        };
        lenient.validate().unwrap();
    }

    #[test]
    fn dataset_uris() {
        assert_eq!(
            DatasetSource::parse("synthetic:ringnorm").unwrap(),
            DatasetSource::Synthetic(SyntheticProblem::Ringnorm)
        );
        assert_eq!(
            DatasetSource::parse("csv:data/colic.csv").unwrap().name(),
            "colic"
        );
        assert!(DatasetSource::parse("synthetic:nope").is_err());
    }

    fn tiny_config(methods: Vec<Method>) -> ExperimentConfig {
        ExperimentConfig {
            methods,
            repetitions: 2,
            t: 6,
            b: 2,
            stride: 3,
            svm_grid: ParamGrid::new(vec![
                crate::homogeneous::GridAxis { name: "c".into(), values: vec![1.0, 4.0] },
                crate::homogeneous::GridAxis { name: "gamma".into(), values: vec![0.05] },
            ])
            .unwrap(),
            mlp_grid: ParamGrid::new(vec![crate::homogeneous::GridAxis {
                name: "hidden".into(),
                values: vec![2.0, 3.0],
            }])
            .unwrap(),
            train_n: 40,
            test_n: 50,
            cv_folds: 3,
            build: BuildOptions {
                mlp: learners::MlpOptions { epochs: 50, ..Default::default() },
                ..Default::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn single_run_std_is_zero() {
        let cfg = ExperimentConfig {
            repetitions: 1,
            ..tiny_config(vec![Method::Rf])
        };
        let table = run_experiment(&cfg).unwrap();
        let row = table.row("twonorm", Method::Rf).unwrap();
        assert_eq!(row.runs.len(), 1);
        assert_eq!(row.std, 0.0);
    }

    #[test]
    fn tiny_experiment_is_consistent() {
        let cfg = tiny_config(Method::ALL.to_vec());
        let table = run_experiment(&cfg).unwrap();
        assert_eq!(table.summary.len(), 6);
        for r in &table.summary {
            assert_eq!(r.runs.len(), 2, "{}", r.method);
            let (m, s) = mean_std(&r.runs);
            assert!((m - r.mean).abs() <= 1e-12 && (s - r.std).abs() <= 1e-12);
        }
        for c in &table.cells {
            let sim = c.sim.as_ref().unwrap();
            assert_eq!(sim.composition.total(), 6);
        }
        let again = run_experiment(&cfg).unwrap();
        assert_eq!(table, again);
        let ranks = average_ranks(&table, &table.methods).unwrap();
        assert!((ranks.iter().sum::<f64>() - 21.0).abs() < 1e-12);
    }

    #[test]
    fn failures_mark_missing_cells() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.csv");
        std::fs::write(&path, "a,class\n1,x\n2,y\n3,x\n4,y\n").unwrap();
        let cfg = ExperimentConfig {
            datasets: vec![format!("csv:{}", path.display())],
            repetitions: 1,
            ..tiny_config(vec![Method::Rf, Method::ESvm])
        };
        let table = run_experiment(&cfg).unwrap();
        // two training rows cannot feed partial optimization
        assert!(table.cells[0].failure.is_some());
        assert_eq!(table.row("one", Method::Rf).unwrap().missing, 1);
        assert!(matches!(average_ranks(&table, &table.methods), Err(Error::MissingCells(_))));
    }

    #[test]
    fn resumed_run_matches_fresh_run() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(vec![Method::ESvm, Method::Rf, Method::Sim]);
        let first = run_experiment_resumable(&cfg, Some(dir.path())).unwrap();
        // drop one cell, as if the run had been interrupted
        std::fs::remove_file(cell_path(dir.path(), 0, 1)).unwrap();
        let resumed = run_experiment_resumable(&cfg, Some(dir.path())).unwrap();
        assert_eq!(first, resumed);
        assert_eq!(first, run_experiment(&cfg).unwrap());
    }

    proptest! {
        #[test]
        fn rank_rows_sum_to_triangle(values in proptest::collection::vec(0u8..5, 2..8)) {
            let v: Vec<f64> = values.iter().map(|&x| f64::from(x) / 10.0).collect();
            let k = v.len() as f64;
            let s: f64 = rank_with_ties(&v).iter().sum();
            prop_assert!((s - k * (k + 1.0) / 2.0).abs() < 1e-12);
        }
    }
}
