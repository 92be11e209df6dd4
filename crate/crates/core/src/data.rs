//! Datasets, sampling and the synthetic benchmark problems.
//!
//! A [`Dataset`] is an immutable `n × d` feature matrix (row-major) with
//! integer class labels. Everything stochastic in here is a pure function of
//! its arguments and an explicit seed.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n: usize,
    d: usize,
    labels: Vec<usize>,
    class_names: Vec<String>,
    feature_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from a row-major feature buffer, checking every invariant.
    pub fn new(
        features: Vec<f64>,
        d: usize,
        labels: Vec<usize>,
        class_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::InvalidDataset("no instances".into()));
        }
        if d == 0 {
            return Err(Error::InvalidDataset("no features".into()));
        }
        if features.len() != n * d {
            return Err(Error::InvalidDataset(format!(
                "feature buffer has {} values, expected {n}×{d}",
                features.len()
            )));
        }
        if class_names.len() < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 classes, got {}",
                class_names.len()
            )));
        }
        if feature_names.len() != d {
            return Err(Error::InvalidDataset(format!(
                "{} feature names for {d} features",
                feature_names.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &class_names {
            if !seen.insert(name) {
                return Err(Error::InvalidDataset(format!("duplicate class name `{name}`")));
            }
        }
        if let Some((i, &l)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= class_names.len())
        {
            return Err(Error::InvalidDataset(format!(
                "row {i}: label {l} out of range for {} classes",
                class_names.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "row {}, feature {}: non-finite value",
                pos / d,
                pos % d
            )));
        }
        Ok(Dataset {
            features,
            n,
            d,
            labels,
            class_names,
            feature_names,
        })
    }

    /// Convenience constructor with generated names (`x1..xd`, `0..K-1`).
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::InvalidDataset(format!("row {bad} has a different arity")));
        }
        let features = rows.iter().flatten().copied().collect();
        Dataset::new(
            features,
            d,
            labels,
            (0..n_classes).map(|k| k.to_string()).collect(),
            (1..=d).map(|j| format!("x{j}")).collect(),
        )
    }

    pub fn n_instances(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.d
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.d)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices` (in that order), keeping the full class list.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n {
                return Err(Error::InvalidArgument(format!(
                    "index {i} out of range for {} instances",
                    self.n
                )));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(
            features,
            self.d,
            labels,
            self.class_names.clone(),
            self.feature_names.clone(),
        )
    }

    /// SHA-256 over shape, names, feature bits and labels, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update((self.d as u64).to_le_bytes());
        for name in self.class_names.iter().chain(&self.feature_names) {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
        }
        for v in &self.features {
            h.update(v.to_bits().to_le_bytes());
        }
        for &l in &self.labels {
            h.update((l as u64).to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Row indices drawn from a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSample {
    pub indices: Vec<usize>,
    pub with_replacement: bool,
}

impl IndexSample {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `mask[k]` is true when row `k` was drawn at least once.
    pub fn in_bag_mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for &i in &self.indices {
            if i < n {
                mask[i] = true;
            }
        }
        mask
    }

    /// Rows of `0..n` never drawn, ascending.
    pub fn out_of_bag(&self, n: usize) -> Vec<usize> {
        self.in_bag_mask(n)
            .into_iter()
            .enumerate()
            .filter_map(|(k, inb)| (!inb).then_some(k))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Result<Self> {
        let spec = SplitSpec {
            train_fraction,
            stratified: true,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train fraction {} not in (0, 1)",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Index partition behind [`stratified_split`]; both halves ascending.
pub fn stratified_split_indices(ds: &Dataset, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    if spec.stratified {
        let counts = ds.class_counts();
        for (c, &count) in counts.iter().enumerate() {
            if count < 2 {
                return Err(Error::ClassTooSmall {
                    class: ds.class_names[c].clone(),
                    count,
                });
            }
        }
        for c in 0..ds.n_classes() {
            let mut members: Vec<usize> = (0..ds.n).filter(|&i| ds.labels[i] == c).collect();
            members.shuffle(&mut rng);
            let k = round_half_up(members.len() as f64 * spec.train_fraction).min(members.len());
            train.extend_from_slice(&members[..k]);
            test.extend_from_slice(&members[k..]);
        }
    } else {
        let mut all: Vec<usize> = (0..ds.n).collect();
        all.shuffle(&mut rng);
        let k = round_half_up(ds.n as f64 * spec.train_fraction).min(ds.n);
        train.extend_from_slice(&all[..k]);
        test.extend_from_slice(&all[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Splits `ds` so that each class contributes `round(n_c · f)` rows to train.
pub fn stratified_split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, test) = stratified_split_indices(ds, spec)?;
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}

/// `floor(n · rate)` distinct indices drawn uniformly without replacement.
pub fn subbag(n: usize, rate: f64, seed: u64) -> Result<IndexSample> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidArgument(format!("subbag rate {rate} not in (0, 1]")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("subbag needs n >= 2, got {n}")));
    }
    let size = (n as f64 * rate).floor() as usize;
    let mut rng = rng_from_seed(seed);
    let indices = rand::seq::index::sample(&mut rng, n, size).into_vec();
    Ok(IndexSample {
        indices,
        with_replacement: false,
    })
}

/// `n` indices drawn uniformly with replacement.
pub fn bootstrap(n: usize, seed: u64) -> Result<IndexSample> {
    if n == 0 {
        return Err(Error::InvalidArgument("bootstrap needs n >= 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let indices = (0..n).map(|_| rng.random_range(0..n)).collect();
    Ok(IndexSample {
        indices,
        with_replacement: true,
    })
}

// --- CSV ------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl Default for LabelColumn {
    fn default() -> Self {
        LabelColumn::Name("class".into())
    }
}

impl FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvOptions {
    pub label_column: LabelColumn,
    pub delimiter: char,
    /// Columns always one-hot encoded.
    pub categorical: Vec<String>,
    /// Also one-hot encode any column holding a non-numeric value.
    pub infer_categorical: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            label_column: LabelColumn::default(),
            delimiter: ',',
            categorical: Vec::new(),
            infer_categorical: true,
        }
    }
}

const MISSING_TOKENS: [&str; 4] = ["", "?", "NA", "nan"];

/// Reads a headed CSV file. Categorical feature columns are one-hot encoded
/// (categories in first-appearance order) and class labels are numbered in
/// first-appearance order.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    if !opts.delimiter.is_ascii() {
        return Err(Error::InvalidArgument(format!(
            "delimiter {:?} is not ASCII",
            opts.delimiter
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .delimiter(opts.delimiter as u8)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::InvalidArgument(format!("{path:?}: {other:?}")),
        })?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let arity = header.len();
    let label_idx = match &opts.label_column {
        LabelColumn::Index(i) if *i < arity => *i,
        LabelColumn::Index(i) => return Err(Error::MissingLabelColumn(i.to_string())),
        LabelColumn::Name(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingLabelColumn(name.clone()))?,
    };
    for name in &opts.categorical {
        if !header.contains(name) {
            return Err(Error::Config(format!("categorical column `{name}` not in header")));
        }
    }

    let mut records: Vec<Vec<String>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        // header is line 1
        let row = rec.position().map_or(i + 2, |p| p.line() as usize);
        if rec.len() != arity {
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                row,
                expected: arity,
                found: rec.len(),
            });
        }
        let fields: Vec<String> = rec.iter().map(|f| f.trim().to_string()).collect();
        for (j, f) in fields.iter().enumerate() {
            if MISSING_TOKENS.contains(&f.as_str()) {
                return Err(Error::BadValue {
                    path: path.to_path_buf(),
                    row,
                    column: header[j].clone(),
                    reason: format!("missing value {f:?}"),
                });
            }
        }
        records.push(fields);
    }
    if records.is_empty() {
        return Err(Error::InvalidDataset(format!("{path:?}: no data rows")));
    }

    let mut class_names: Vec<String> = Vec::new();
    let mut class_index: HashMap<String, usize> = HashMap::new();
    let labels: Vec<usize> = records
        .iter()
        .map(|r| {
            let name = &r[label_idx];
            *class_index.entry(name.clone()).or_insert_with(|| {
                class_names.push(name.clone());
                class_names.len() - 1
            })
        })
        .collect();
    if class_names.len() < 2 {
        return Err(Error::SingleClass(class_names[0].clone()));
    }

    enum Column {
        Numeric,
        Categorical(Vec<String>),
    }
    let mut columns = Vec::new();
    for (j, name) in header.iter().enumerate() {
        if j == label_idx {
            continue;
        }
        let declared = opts.categorical.contains(name);
        let non_numeric = records.iter().position(|r| r[j].parse::<f64>().is_err());
        let column = match (declared, non_numeric) {
            (false, None) => Column::Numeric,
            (false, Some(r)) if !opts.infer_categorical => {
                return Err(Error::BadValue {
                    path: path.to_path_buf(),
                    row: r + 2,
                    column: name.clone(),
                    reason: format!("non-numeric value {:?}", records[r][j]),
                });
            }
            _ => {
                let mut cats: Vec<String> = Vec::new();
                for r in &records {
                    if !cats.contains(&r[j]) {
                        cats.push(r[j].clone());
                    }
                }
                Column::Categorical(cats)
            }
        };
        columns.push((j, column));
    }

    let mut feature_names = Vec::new();
    for (j, col) in &columns {
        match col {
            Column::Numeric => feature_names.push(header[*j].clone()),
            Column::Categorical(cats) => {
                feature_names.extend(cats.iter().map(|c| format!("{}={}", header[*j], c)))
            }
        }
    }
    let d = feature_names.len();
    if d == 0 {
        return Err(Error::InvalidDataset(format!("{path:?}: no feature columns")));
    }
    let mut features = Vec::with_capacity(records.len() * d);
    for (r, rec) in records.iter().enumerate() {
        for (j, col) in &columns {
            match col {
                Column::Numeric => {
                    let v: f64 = rec[*j].parse().map_err(|_| Error::BadValue {
                        path: path.to_path_buf(),
                        row: r + 2,
                        column: header[*j].clone(),
                        reason: format!("non-numeric value {:?}", rec[*j]),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::BadValue {
                            path: path.to_path_buf(),
                            row: r + 2,
                            column: header[*j].clone(),
                            reason: format!("non-finite value {:?}", rec[*j]),
                        });
                    }
                    features.push(v);
                }
                Column::Categorical(cats) => {
                    features.extend(cats.iter().map(|c| if *c == rec[*j] { 1.0 } else { 0.0 }))
                }
            }
        }
    }
    Dataset::new(features, d, labels, class_names, feature_names)
}

/// Writes `ds` as a headed CSV with the class name in a trailing `class` column.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidArgument(format!("{path:?}: {other:?}")),
    })?;
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.push("class");
    w.write_record(&header)?;
    for i in 0..ds.n {
        let mut rec: Vec<String> = ds.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(ds.class_names[ds.labels[i]].clone());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

// --- synthetic problems ---------------------------------------------------

/// Breiman's 20-dimensional Gaussian benchmarks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticProblem {
    Twonorm,
    Threenorm,
    Ringnorm,
}

pub const SYNTHETIC_DIM: usize = 20;

impl SyntheticProblem {
    pub const ALL: [SyntheticProblem; 3] = [
        SyntheticProblem::Twonorm,
        SyntheticProblem::Threenorm,
        SyntheticProblem::Ringnorm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SyntheticProblem::Twonorm => "twonorm",
            SyntheticProblem::Threenorm => "threenorm",
            SyntheticProblem::Ringnorm => "ringnorm",
        }
    }

    /// Mean offset per coordinate.
    pub fn offset(self) -> f64 {
        match self {
            SyntheticProblem::Twonorm | SyntheticProblem::Threenorm => {
                2.0 / (SYNTHETIC_DIM as f64).sqrt()
            }
            SyntheticProblem::Ringnorm => 1.0 / (SYNTHETIC_DIM as f64).sqrt(),
        }
    }

    pub fn generate(self, n: usize, seed: u64) -> Result<Dataset> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("synthetic problem needs n >= 2, got {n}")));
        }
        let d = SYNTHETIC_DIM;
        let a = self.offset();
        let mut rng = rng_from_seed(seed);
        let mut features = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let class = usize::from(rng.random_bool(0.5));
            // (mean of coordinate j, standard deviation)
            let (sign_flip, alternating, scale) = match (self, class) {
                (SyntheticProblem::Twonorm, 0) => (1.0, false, 1.0),
                (SyntheticProblem::Twonorm, _) => (-1.0, false, 1.0),
                (SyntheticProblem::Threenorm, 0) => {
                    (if rng.random_bool(0.5) { 1.0 } else { -1.0 }, false, 1.0)
                }
                (SyntheticProblem::Threenorm, _) => (1.0, true, 1.0),
                (SyntheticProblem::Ringnorm, 0) => (0.0, false, 2.0),
                (SyntheticProblem::Ringnorm, _) => (1.0, false, 1.0),
            };
            for j in 0..d {
                let mean = if alternating && j % 2 == 1 { -a } else { a } * sign_flip;
                let z: f64 = rng.sample(StandardNormal);
                features.push(mean + scale * z);
            }
            labels.push(class);
        }
        Dataset::new(
            features,
            d,
            labels,
            vec!["0".into(), "1".into()],
            (1..=d).map(|j| format!("x{j}")).collect(),
        )
    }
}

impl fmt::Display for SyntheticProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyntheticProblem {
    type Err = Error;

    /// Accepts `twonorm` or the URI form `synthetic:twonorm`.
    fn from_str(s: &str) -> Result<Self> {
        let name = s.strip_prefix("synthetic:").unwrap_or(s);
        SyntheticProblem::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown synthetic problem `{s}`")))
    }
}

pub fn gen_twonorm(n: usize, seed: u64) -> Result<Dataset> {
    SyntheticProblem::Twonorm.generate(n, seed)
}

pub fn gen_threenorm(n: usize, seed: u64) -> Result<Dataset> {
    SyntheticProblem::Threenorm.generate(n, seed)
}

pub fn gen_ringnorm(n: usize, seed: u64) -> Result<Dataset> {
    SyntheticProblem::Ringnorm.generate(n, seed)
}
