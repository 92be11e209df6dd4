//! TOML run configuration layered over a named profile.
//!
//! ```toml
//! profile = "desk"            # base values: "paper" or "desk"
//! seed = 7
//!
//! [data]
//! datasets = ["synthetic:twonorm", "csv:data/colic.csv"]
//! label_column = "class"      # name or 0-based index
//! delimiter = ","
//! categorical = []
//! train_fraction = 0.6667     # stratified split for file datasets
//! train_n = 300               # synthetic sample sizes
//! test_n = 2000
//!
//! [ensemble]
//! t = 101
//! b = 5
//! subbag_rate = 0.5
//! mlp_epochs = 500
//! mlp_learning_rate = 0.1
//! smo_tolerance = 1e-3
//!
//! [grids]
//! svm_c_log2 = [-5, 15]       # inclusive range of base-2 exponents
//! svm_gamma_log2 = [-15, 3]
//! mlp_hidden = [3, 4, 5, 6, 7, 8, 9, 10]
//!
//! [simplex]
//! stride = 13
//! stride_policy = "remainder-to-last"   # or "strict"
//!
//! [experiment]
//! methods = ["E-SVM", "E-MLP", "RF", "SIM"]
//! repetitions = 20
//! cv_folds = 10
//! ```

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{CsvOptions, LabelColumn};
use crate::error::{Error, Result};
use crate::eval::{ExperimentConfig, Method};
use crate::homogeneous::{BuildOptions, GridAxis, ParamGrid};
use crate::learners::{MlpOptions, SmoOptions};
use crate::simplex::StridePolicy;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Full-scale settings: t = 1001, b = 10, stride 13, 100 repetitions.
    Paper,
    /// Reduced settings that finish on a desktop: t = 101, b = 5, 20 repetitions.
    #[default]
    Desk,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    profile: Option<Profile>,
    seed: Option<u64>,
    threads: Option<usize>,
    #[serde(default)]
    data: DataSection,
    #[serde(default)]
    ensemble: EnsembleSection,
    #[serde(default)]
    grids: GridSection,
    #[serde(default)]
    simplex: SimplexSection,
    #[serde(default)]
    experiment: ExperimentSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    datasets: Option<Vec<String>>,
    label_column: Option<String>,
    delimiter: Option<char>,
    categorical: Option<Vec<String>>,
    infer_categorical: Option<bool>,
    train_fraction: Option<f64>,
    train_n: Option<usize>,
    test_n: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleSection {
    t: Option<usize>,
    b: Option<usize>,
    subbag_rate: Option<f64>,
    mlp_epochs: Option<usize>,
    mlp_learning_rate: Option<f64>,
    smo_tolerance: Option<f64>,
    smo_max_iter: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    svm_c_log2: Option<[i32; 2]>,
    svm_gamma_log2: Option<[i32; 2]>,
    mlp_hidden: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimplexSection {
    stride: Option<usize>,
    stride_policy: Option<StridePolicy>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    methods: Option<Vec<String>>,
    repetitions: Option<usize>,
    cv_folds: Option<usize>,
}

/// Fully resolved settings; this is what the manifest records.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Settings {
    pub profile: Profile,
    pub seed: u64,
    /// 0 lets the thread pool pick.
    pub threads: usize,
    pub datasets: Vec<String>,
    pub label_column: String,
    pub delimiter: char,
    pub categorical: Vec<String>,
    pub infer_categorical: bool,
    pub train_fraction: f64,
    pub train_n: usize,
    pub test_n: usize,
    pub t: usize,
    pub b: usize,
    pub subbag_rate: f64,
    pub mlp_epochs: usize,
    pub mlp_learning_rate: f64,
    pub smo_tolerance: f64,
    pub smo_max_iter: Option<usize>,
    pub svm_c_log2: [i32; 2],
    pub svm_gamma_log2: [i32; 2],
    pub mlp_hidden: Vec<usize>,
    pub stride: usize,
    pub stride_policy: StridePolicy,
    pub methods: Vec<Method>,
    pub repetitions: usize,
    pub cv_folds: usize,
}

impl Settings {
    pub fn profile(profile: Profile) -> Self {
        let mlp = MlpOptions::default();
        let smo = SmoOptions::default();
        let base = Settings {
            profile,
            seed: 0,
            threads: 0,
            datasets: vec![
                "synthetic:twonorm".into(),
                "synthetic:ringnorm".into(),
                "synthetic:threenorm".into(),
            ],
            label_column: "class".into(),
            delimiter: ',',
            categorical: Vec::new(),
            infer_categorical: true,
            train_fraction: 2.0 / 3.0,
            train_n: 300,
            test_n: 2000,
            t: 1001,
            b: 10,
            subbag_rate: 0.5,
            mlp_epochs: mlp.epochs,
            mlp_learning_rate: mlp.learning_rate,
            smo_tolerance: smo.tolerance,
            smo_max_iter: smo.max_iter,
            svm_c_log2: [-5, 15],
            svm_gamma_log2: [-15, 3],
            mlp_hidden: (3..=10).collect(),
            stride: 13,
            stride_policy: StridePolicy::Strict,
            methods: vec![Method::ESvm, Method::EMlp, Method::Rf, Method::Sim],
            repetitions: 100,
            cv_folds: 10,
        };
        match profile {
            Profile::Paper => base,
            Profile::Desk => Settings {
                t: 101,
                b: 5,
                stride_policy: StridePolicy::RemainderToLast,
                repetitions: 20,
                ..base
            },
        }
    }

    /// Parses `text` layered over a profile: `profile_override` if given, else
    /// the file's `profile` key, else desk.
    pub fn from_toml(text: &str, profile_override: Option<Profile>) -> Result<Self> {
        let file: FileConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut s = Settings::profile(profile_override.or(file.profile).unwrap_or_default());
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(s.seed, file.seed);
        set!(s.threads, file.threads);
        let d = file.data;
        set!(s.datasets, d.datasets);
        set!(s.label_column, d.label_column);
        set!(s.delimiter, d.delimiter);
        set!(s.categorical, d.categorical);
        set!(s.infer_categorical, d.infer_categorical);
        set!(s.train_fraction, d.train_fraction);
        set!(s.train_n, d.train_n);
        set!(s.test_n, d.test_n);
        let e = file.ensemble;
        set!(s.t, e.t);
        set!(s.b, e.b);
        set!(s.subbag_rate, e.subbag_rate);
        set!(s.mlp_epochs, e.mlp_epochs);
        set!(s.mlp_learning_rate, e.mlp_learning_rate);
        set!(s.smo_tolerance, e.smo_tolerance);
        if e.smo_max_iter.is_some() {
            s.smo_max_iter = e.smo_max_iter;
        }
        let g = file.grids;
        set!(s.svm_c_log2, g.svm_c_log2);
        set!(s.svm_gamma_log2, g.svm_gamma_log2);
        set!(s.mlp_hidden, g.mlp_hidden);
        set!(s.stride, file.simplex.stride);
        set!(s.stride_policy, file.simplex.stride_policy);
        let x = file.experiment;
        if let Some(methods) = x.methods {
            s.methods = methods
                .iter()
                .map(|m| Method::from_str(m))
                .collect::<Result<_>>()
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        set!(s.repetitions, x.repetitions);
        set!(s.cv_folds, x.cv_folds);
        Ok(s)
    }

    pub fn load(path: &Path, profile_override: Option<Profile>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Settings::from_toml(&text, profile_override).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn log2_axis(name: &str, range: [i32; 2]) -> Result<GridAxis> {
        if range[0] > range[1] {
            return Err(Error::Config(format!("{name} range {range:?} is empty")));
        }
        Ok(GridAxis {
            name: name.into(),
            values: (range[0]..=range[1]).map(|q| 2f64.powi(q)).collect(),
        })
    }

    /// The experiment configuration these settings describe, validated.
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let svm_grid = ParamGrid::new(vec![
            Self::log2_axis("c", self.svm_c_log2)?,
            Self::log2_axis("gamma", self.svm_gamma_log2)?,
        ])
        .map_err(|e| Error::Config(e.to_string()))?;
        let mlp_grid = ParamGrid::new(vec![GridAxis {
            name: "hidden".into(),
            values: self.mlp_hidden.iter().map(|&h| h as f64).collect(),
        }])
        .map_err(|e| Error::Config(e.to_string()))?;
        let cfg = ExperimentConfig {
            datasets: self.datasets.clone(),
            methods: self.methods.clone(),
            repetitions: self.repetitions,
            t: self.t,
            b: self.b,
            stride: self.stride,
            stride_policy: self.stride_policy,
            svm_grid,
            mlp_grid,
            master_seed: self.seed,
            train_n: self.train_n,
            test_n: self.test_n,
            train_fraction: self.train_fraction,
            cv_folds: self.cv_folds,
            build: BuildOptions {
                subbag_rate: self.subbag_rate,
                mlp: MlpOptions {
                    epochs: self.mlp_epochs,
                    learning_rate: self.mlp_learning_rate,
                },
                smo: SmoOptions {
                    tolerance: self.smo_tolerance,
                    max_iter: self.smo_max_iter,
                    ..SmoOptions::default()
                },
            },
            csv: CsvOptions {
                label_column: self.label_column.parse::<LabelColumn>().map_err(|e| Error::Config(e.to_string()))?,
                delimiter: self.delimiter,
                categorical: self.categorical.clone(),
                infer_categorical: self.infer_categorical,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
