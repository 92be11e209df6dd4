//! Base classifiers: random decision trees, single-hidden-layer perceptrons
//! and RBF support vector machines, behind one [`BaseModel`] type.

pub mod mlp;
pub mod svm;
pub mod tree;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, IndexSample};
use crate::error::{Error, Result};

pub use mlp::{MlpOptions, Network};
pub use svm::{SmoOptions, SvmModel};
pub use tree::DecisionTree;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Svm,
    Mlp,
    Tree,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Svm => "svm",
            ModelKind::Mlp => "mlp",
            ModelKind::Tree => "tree",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            ModelKind::Svm => 1,
            ModelKind::Mlp => 2,
            ModelKind::Tree => 3,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(ModelKind::Svm),
            2 => Some(ModelKind::Mlp),
            3 => Some(ModelKind::Tree),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svm" => Ok(ModelKind::Svm),
            "mlp" => Ok(ModelKind::Mlp),
            "tree" | "rf" => Ok(ModelKind::Tree),
            _ => Err(Error::InvalidArgument(format!("unknown model kind `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HyperParams {
    Svm { c: f64, gamma: f64 },
    Mlp { hidden: usize },
    Tree { mtry: usize },
}

impl HyperParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            HyperParams::Svm { .. } => ModelKind::Svm,
            HyperParams::Mlp { .. } => ModelKind::Mlp,
            HyperParams::Tree { .. } => ModelKind::Tree,
        }
    }
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperParams::Svm { c, gamma } => write!(f, "C={c} gamma={gamma}"),
            HyperParams::Mlp { hidden } => write!(f, "hidden={hidden}"),
            HyperParams::Tree { mtry } => write!(f, "mtry={mtry}"),
        }
    }
}

/// Default random-forest feature subset size, `floor(√d)` (at least 1).
pub fn default_mtry(d: usize) -> usize {
    ((d as f64).sqrt().floor() as usize).clamp(1, d.max(1))
}

/// Per-feature z-score transform. Features with zero spread pass through
/// unscaled (shift only).
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub degenerate: Vec<usize>,
}

impl Standardizer {
    /// Mean and population standard deviation of every column of `ds`.
    pub fn fit(ds: &Dataset) -> Self {
        let n = ds.n_instances() as f64;
        let d = ds.n_features();
        let mut mean = vec![0.0; d];
        for row in ds.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in ds.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut degenerate = Vec::new();
        let scale = var
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let sd = (s / n).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    degenerate.push(j);
                    1.0
                }
            })
            .collect();
        Standardizer {
            mean,
            scale,
            degenerate,
        }
    }

    pub fn apply_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s));
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        self.apply_into(x, &mut out);
        out
    }

    pub fn transform(&self, ds: &Dataset) -> Result<Dataset> {
        let mut features = Vec::with_capacity(ds.features().len());
        let mut buf = Vec::new();
        for row in ds.rows() {
            self.apply_into(row, &mut buf);
            features.extend_from_slice(&buf);
        }
        Dataset::new(
            features,
            ds.n_features(),
            ds.labels().to_vec(),
            ds.class_names().to_vec(),
            ds.feature_names().to_vec(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelParams {
    Tree(DecisionTree),
    Mlp(Network),
    Svm(SvmModel),
}

/// One trained member, with the rows it was trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseModel {
    pub params: ModelParams,
    pub hyperparams: HyperParams,
    pub train_indices: IndexSample,
    pub n_features: usize,
    pub n_classes: usize,
    /// Applied to inputs before the model sees them.
    pub scaler: Option<Arc<Standardizer>>,
    /// False if the SVM solver hit its iteration cap.
    pub converged: bool,
}

impl BaseModel {
    pub fn kind(&self) -> ModelKind {
        self.hyperparams.kind()
    }

    pub fn with_scaler(mut self, scaler: Arc<Standardizer>) -> Self {
        self.scaler = Some(scaler);
        self
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    /// Prediction without the dimension check.
    pub fn predict_unchecked(&self, x: &[f64]) -> usize {
        match &self.scaler {
            Some(s) => self.predict_raw(&s.apply(x)),
            None => self.predict_raw(x),
        }
    }

    fn predict_raw(&self, x: &[f64]) -> usize {
        match &self.params {
            ModelParams::Tree(t) => t.predict(x),
            ModelParams::Mlp(n) => n.predict(x),
            ModelParams::Svm(s) => s.predict(x),
        }
    }

    /// Predictions for every row of `ds`.
    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<usize>> {
        if ds.n_features() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: ds.n_features(),
            });
        }
        let mut buf = Vec::with_capacity(self.n_features);
        Ok(ds
            .rows()
            .map(|x| match &self.scaler {
                Some(s) => {
                    s.apply_into(x, &mut buf);
                    self.predict_raw(&buf)
                }
                None => self.predict_raw(x),
            })
            .collect())
    }
}

pub fn train_tree(ds: &Dataset, sample: &IndexSample, mtry: usize, seed: u64) -> Result<BaseModel> {
    let tree = DecisionTree::fit(ds, sample, mtry, seed)?;
    Ok(BaseModel {
        params: ModelParams::Tree(tree),
        hyperparams: HyperParams::Tree { mtry },
        train_indices: sample.clone(),
        n_features: ds.n_features(),
        n_classes: ds.n_classes(),
        scaler: None,
        converged: true,
    })
}

pub fn train_mlp(ds: &Dataset, sample: &IndexSample, hidden: usize, seed: u64) -> Result<BaseModel> {
    train_mlp_with(ds, sample, hidden, &MlpOptions::default(), seed)
}

pub fn train_mlp_with(
    ds: &Dataset,
    sample: &IndexSample,
    hidden: usize,
    opts: &MlpOptions,
    seed: u64,
) -> Result<BaseModel> {
    let net = Network::fit(ds, sample, hidden, opts, seed)?;
    Ok(BaseModel {
        params: ModelParams::Mlp(net),
        hyperparams: HyperParams::Mlp { hidden },
        train_indices: sample.clone(),
        n_features: ds.n_features(),
        n_classes: ds.n_classes(),
        scaler: None,
        converged: true,
    })
}

pub fn train_svm(ds: &Dataset, sample: &IndexSample, c: f64, gamma: f64) -> Result<BaseModel> {
    train_svm_with(ds, sample, c, gamma, &SmoOptions::default())
}

pub fn train_svm_with(
    ds: &Dataset,
    sample: &IndexSample,
    c: f64,
    gamma: f64,
    opts: &SmoOptions,
) -> Result<BaseModel> {
    let svm = SvmModel::fit(ds, sample, c, gamma, opts)?;
    let converged = svm.converged;
    Ok(BaseModel {
        params: ModelParams::Svm(svm),
        hyperparams: HyperParams::Svm { c, gamma },
        train_indices: sample.clone(),
        n_features: ds.n_features(),
        n_classes: ds.n_classes(),
        scaler: None,
        converged,
    })
}

/// Trains a model of the kind implied by `hp`.
pub fn train(
    ds: &Dataset,
    sample: &IndexSample,
    hp: &HyperParams,
    mlp: &MlpOptions,
    smo: &SmoOptions,
    seed: u64,
) -> Result<BaseModel> {
    match *hp {
        HyperParams::Tree { mtry } => train_tree(ds, sample, mtry, seed),
        HyperParams::Mlp { hidden } => train_mlp_with(ds, sample, hidden, mlp, seed),
        HyperParams::Svm { c, gamma } => train_svm_with(ds, sample, c, gamma, smo),
    }
}
