//! Homogeneous ensembles: random forests, and subbagged SVM/MLP ensembles
//! whose hyperparameters come from `B` cheap single-subbag grid validations.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{bootstrap, subbag, Dataset};
use crate::error::{Error, Result};
use crate::learners::{self, default_mtry, BaseModel, HyperParams, MlpOptions, ModelKind, SmoOptions, Standardizer};
use crate::rng::{derive_path, stream};

pub const SUBBAG_RATE: f64 = 0.5;

/// Cartesian product of named axes. Nodes are enumerated row-major over the
/// axes in declaration order: the last axis varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub axes: Vec<GridAxis>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub name: String,
    pub values: Vec<f64>,
}

impl ParamGrid {
    pub fn new(axes: Vec<GridAxis>) -> Result<Self> {
        let grid = ParamGrid { axes };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::InvalidArgument("parameter grid has no axes".into()));
        }
        for axis in &self.axes {
            if axis.values.is_empty() {
                return Err(Error::InvalidArgument(format!("grid axis `{}` is empty", axis.name)));
            }
            if axis.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "grid axis `{}` has a non-finite value",
                    axis.name
                )));
            }
        }
        Ok(())
    }

    /// `C = 2^q, q ∈ −5..=15` × `γ = 2^p, p ∈ −15..=3`.
    pub fn svm_default() -> Self {
        ParamGrid {
            axes: vec![
                GridAxis {
                    name: "c".into(),
                    values: (-5..=15).map(|q| 2f64.powi(q)).collect(),
                },
                GridAxis {
                    name: "gamma".into(),
                    values: (-15..=3).map(|p| 2f64.powi(p)).collect(),
                },
            ],
        }
    }

    /// Hidden units in `3..=10`.
    pub fn mlp_default() -> Self {
        ParamGrid {
            axes: vec![GridAxis {
                name: "hidden".into(),
                values: (3..=10).map(f64::from).collect(),
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values of node `index`, one per axis.
    pub fn node(&self, mut index: usize) -> Vec<(&str, f64)> {
        let mut out = vec![("", 0.0); self.axes.len()];
        for (slot, axis) in out.iter_mut().zip(&self.axes).rev() {
            let m = axis.values.len();
            *slot = (axis.name.as_str(), axis.values[index % m]);
            index /= m;
        }
        out
    }

    pub fn hyperparams(&self, kind: ModelKind, index: usize) -> Result<HyperParams> {
        let node = self.node(index);
        let get = |name: &str| {
            node.iter()
                .find(|(n, _)| n.eq_ignore_ascii_case(name))
                .map(|&(_, v)| v)
                .ok_or_else(|| Error::InvalidArgument(format!("grid for {kind} has no `{name}` axis")))
        };
        match kind {
            ModelKind::Svm => Ok(HyperParams::Svm {
                c: get("c")?,
                gamma: get("gamma")?,
            }),
            ModelKind::Mlp => {
                let h = get("hidden")?;
                if h < 1.0 || h.fract() != 0.0 {
                    return Err(Error::InvalidArgument(format!("hidden units must be a positive integer, got {h}")));
                }
                Ok(HyperParams::Mlp { hidden: h as usize })
            }
            ModelKind::Tree => {
                let m = get("mtry")?;
                Ok(HyperParams::Tree { mtry: m as usize })
            }
        }
    }
}

/// Knobs shared by every ensemble build.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildOptions {
    pub subbag_rate: f64,
    pub mlp: MlpOptions,
    pub smo: SmoOptions,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            subbag_rate: SUBBAG_RATE,
            mlp: MlpOptions::default(),
            smo: SmoOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HomogeneousEnsemble {
    pub kind: ModelKind,
    pub models: Vec<BaseModel>,
    /// One entry per batch; empty for random forests.
    pub batch_params: Vec<HyperParams>,
    pub batch_sizes: Vec<usize>,
    pub train_fingerprint: String,
    pub master_seed: u64,
    pub scaler: Option<Arc<Standardizer>>,
    pub warnings: Vec<String>,
    pub n_features: usize,
    pub n_classes: usize,
}

impl HomogeneousEnsemble {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        ensemble_predict(&self.models, x)
    }

    /// Index into `batch_params` for model `j`.
    pub fn batch_of(&self, j: usize) -> Option<usize> {
        batch_index(j, &self.batch_sizes)
    }
}

/// Sizes of `b` batches covering `t` models, as equal as possible with the
/// remainder going to the first batches.
pub fn batch_sizes(t: usize, b: usize) -> Result<Vec<usize>> {
    if b == 0 || b > t {
        return Err(Error::InvalidArgument(format!(
            "batch count {b} must be in [1, {t}]"
        )));
    }
    let (q, r) = (t / b, t % b);
    Ok((0..b).map(|i| q + usize::from(i < r)).collect())
}

pub fn batch_index(j: usize, sizes: &[usize]) -> Option<usize> {
    let mut end = 0;
    for (b, &s) in sizes.iter().enumerate() {
        end += s;
        if j < end {
            return Some(b);
        }
    }
    None
}

/// Outcome of one partial optimization, with every node's validation error.
#[derive(Clone, Debug, PartialEq)]
pub struct GridValidation {
    pub best: HyperParams,
    pub best_index: usize,
    /// `None` where training failed.
    pub errors: Vec<Option<f64>>,
}

/// Picks hyperparameters from one subbag: a model per grid node is trained on
/// the subbag and scored on the rows left out. Ties go to the lower node index.
pub fn partial_optimize(kind: ModelKind, ds: &Dataset, grid: &ParamGrid, seed: u64) -> Result<HyperParams> {
    partial_optimize_with(kind, ds, grid, seed, &BuildOptions::default()).map(|v| v.best)
}

pub fn partial_optimize_with(
    kind: ModelKind,
    ds: &Dataset,
    grid: &ParamGrid,
    seed: u64,
    opts: &BuildOptions,
) -> Result<GridValidation> {
    grid.validate()?;
    if ds.n_instances() < 4 {
        return Err(Error::InvalidArgument(format!(
            "partial optimization needs at least 4 instances, got {}",
            ds.n_instances()
        )));
    }
    let sample = subbag(ds.n_instances(), opts.subbag_rate, derive_path(seed, &[stream::SAMPLE]))?;
    let held_out = sample.out_of_bag(ds.n_instances());
    if held_out.is_empty() {
        return Err(Error::InvalidArgument("subbag leaves no rows for validation".into()));
    }
    let params: Vec<HyperParams> = (0..grid.len())
        .map(|i| grid.hyperparams(kind, i))
        .collect::<Result<_>>()?;
    let outcomes: Vec<Result<f64>> = params
        .par_iter()
        .enumerate()
        .map(|(i, hp)| {
            let model = learners::train(
                ds,
                &sample,
                hp,
                &opts.mlp,
                &opts.smo,
                derive_path(seed, &[stream::INIT, i as u64]),
            )?;
            let wrong = held_out
                .iter()
                .filter(|&&k| model.predict_unchecked(ds.row(k)) != ds.label(k))
                .count();
            Ok(wrong as f64 / held_out.len() as f64)
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    let mut first_err = None;
    let mut errors = Vec::with_capacity(outcomes.len());
    for (i, r) in outcomes.into_iter().enumerate() {
        match r {
            Ok(e) => {
                if best.is_none_or(|(_, b)| e < b) {
                    best = Some((i, e));
                }
                errors.push(Some(e));
            }
            Err(err) => {
                first_err.get_or_insert(err);
                errors.push(None);
            }
        }
    }
    match best {
        Some((i, _)) => Ok(GridValidation {
            best: params[i],
            best_index: i,
            errors,
        }),
        None => Err(first_err.expect("grid is nonempty")),
    }
}

/// `t` subbagged models in `b` batches, batch `k` trained with the
/// hyperparameters of the `k`-th partial optimization. Inputs are
/// standardized with moments of `ds`; the scaler travels with every model.
pub fn build_batched_ensemble(
    kind: ModelKind,
    ds: &Dataset,
    t: usize,
    b: usize,
    grid: &ParamGrid,
    master_seed: u64,
) -> Result<HomogeneousEnsemble> {
    build_batched_ensemble_with(kind, ds, t, b, grid, master_seed, &BuildOptions::default())
}

pub fn build_batched_ensemble_with(
    kind: ModelKind,
    ds: &Dataset,
    t: usize,
    b: usize,
    grid: &ParamGrid,
    master_seed: u64,
    opts: &BuildOptions,
) -> Result<HomogeneousEnsemble> {
    if kind == ModelKind::Tree {
        return Err(Error::InvalidArgument(
            "batched ensembles are built from SVMs or MLPs; use build_random_forest".into(),
        ));
    }
    let sizes = batch_sizes(t, b)?;
    let scaler = Arc::new(Standardizer::fit(ds));
    let warnings: Vec<String> = scaler
        .degenerate
        .iter()
        .map(|&j| format!("feature `{}` has zero variance and is not scaled", ds.feature_names()[j]))
        .collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    let z = scaler.transform(ds)?;
    let n = z.n_instances();

    let batch_params: Vec<HyperParams> = (0..b)
        .into_par_iter()
        .map(|k| {
            partial_optimize_with(kind, &z, grid, derive_path(master_seed, &[stream::OPTIMIZE, k as u64]), opts)
                .map(|v| v.best)
        })
        .collect::<Result<_>>()?;

    let models: Vec<BaseModel> = (0..t)
        .into_par_iter()
        .map(|j| {
            let seed = derive_path(master_seed, &[stream::MODEL, j as u64]);
            let sample = subbag(n, opts.subbag_rate, derive_path(seed, &[stream::SAMPLE]))?;
            let hp = batch_params[batch_index(j, &sizes).expect("j < t")];
            let model = learners::train(&z, &sample, &hp, &opts.mlp, &opts.smo, derive_path(seed, &[stream::INIT]))?;
            Ok(model.with_scaler(scaler.clone()))
        })
        .collect::<Result<_>>()?;

    Ok(HomogeneousEnsemble {
        kind,
        models,
        batch_params,
        batch_sizes: sizes,
        train_fingerprint: ds.fingerprint(),
        master_seed,
        scaler: Some(scaler),
        warnings,
        n_features: ds.n_features(),
        n_classes: ds.n_classes(),
    })
}

/// `t` trees, each on its own bootstrap sample with `mtry = floor(√d)`.
pub fn build_random_forest(ds: &Dataset, t: usize, master_seed: u64) -> Result<HomogeneousEnsemble> {
    if t == 0 {
        return Err(Error::InvalidArgument("forest needs at least one tree".into()));
    }
    let mtry = default_mtry(ds.n_features());
    let n = ds.n_instances();
    let models: Vec<BaseModel> = (0..t)
        .into_par_iter()
        .map(|j| {
            let seed = derive_path(master_seed, &[stream::MODEL, j as u64]);
            let sample = bootstrap(n, derive_path(seed, &[stream::SAMPLE]))?;
            learners::train_tree(ds, &sample, mtry, derive_path(seed, &[stream::INIT]))
        })
        .collect::<Result<_>>()?;
    Ok(HomogeneousEnsemble {
        kind: ModelKind::Tree,
        models,
        batch_params: Vec::new(),
        batch_sizes: Vec::new(),
        train_fingerprint: ds.fingerprint(),
        master_seed,
        scaler: None,
        warnings: Vec::new(),
        n_features: ds.n_features(),
        n_classes: ds.n_classes(),
    })
}

/// Argmax of a vote tally, ties to the lowest class.
pub fn tally_winner(votes: &[u32]) -> usize {
    let mut best = 0;
    for (c, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = c;
        }
    }
    best
}

/// Unweighted majority vote of `models` on `x`, ties to the lowest class.
pub fn ensemble_predict<'a, I>(models: I, x: &[f64]) -> Result<usize>
where
    I: IntoIterator<Item = &'a BaseModel>,
{
    let mut votes: Vec<u32> = Vec::new();
    for m in models {
        if votes.is_empty() {
            votes = vec![0; m.n_classes];
        }
        let p = m.predict(x)?;
        votes[p] += 1;
    }
    if votes.is_empty() {
        return Err(Error::InvalidArgument("cannot vote with an empty model list".into()));
    }
    Ok(tally_winner(&votes))
}

/// `out[m][i]`: prediction of model `m` on row `i` of `ds`.
pub fn member_predictions(models: &[&BaseModel], ds: &Dataset) -> Result<Vec<Vec<usize>>> {
    models.par_iter().map(|m| m.predict_dataset(ds)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_twonorm;

    #[test]
    fn grid_enumeration_order_and_size() {
        let g = ParamGrid::svm_default();
        assert_eq!(g.len(), 21 * 19);
        assert_eq!(g.node(0), [("c", 2f64.powi(-5)), ("gamma", 2f64.powi(-15))]);
        assert_eq!(g.node(1), [("c", 2f64.powi(-5)), ("gamma", 2f64.powi(-14))]);
        assert_eq!(g.node(19), [("c", 2f64.powi(-4)), ("gamma", 2f64.powi(-15))]);
        assert_eq!(ParamGrid::mlp_default().len(), 8);
        assert_eq!(
            ParamGrid::mlp_default().hyperparams(ModelKind::Mlp, 7).unwrap(),
            HyperParams::Mlp { hidden: 10 }
        );
        assert!(ParamGrid::new(vec![GridAxis { name: "c".into(), values: vec![] }]).is_err());
    }

    #[test]
    fn batches_split_evenly_with_remainder_first() {
        assert_eq!(batch_sizes(10, 2).unwrap(), [5, 5]);
        let s = batch_sizes(1001, 10).unwrap();
        assert_eq!(s.iter().sum::<usize>(), 1001);
        assert_eq!(s, [101, 100, 100, 100, 100, 100, 100, 100, 100, 100]);
        assert!(batch_sizes(3, 4).is_err());
        assert!(batch_sizes(3, 0).is_err());
        let s = batch_sizes(10, 2).unwrap();
        let map: Vec<usize> = (0..10).map(|j| batch_index(j, &s).unwrap()).collect();
        assert_eq!(map, [0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn single_node_grid_is_returned() {
        let ds = gen_twonorm(40, 1).unwrap();
        let grid = ParamGrid {
            axes: vec![
                GridAxis { name: "c".into(), values: vec![2.0] },
                GridAxis { name: "gamma".into(), values: vec![0.5] },
            ],
        };
        let hp = partial_optimize(ModelKind::Svm, &ds, &grid, 3).unwrap();
        assert_eq!(hp, HyperParams::Svm { c: 2.0, gamma: 0.5 });
    }

    #[test]
    fn validation_ties_pick_lowest_index() {
        // identical nodes give identical validation errors
        let ds = gen_twonorm(40, 1).unwrap();
        let grid = ParamGrid {
            axes: vec![
                GridAxis { name: "c".into(), values: vec![1.0, 1.0] },
                GridAxis { name: "gamma".into(), values: vec![0.1] },
            ],
        };
        let v = partial_optimize_with(ModelKind::Svm, &ds, &grid, 9, &BuildOptions::default()).unwrap();
        assert_eq!(v.errors[0], v.errors[1]);
        assert_eq!(v.best_index, 0);
    }

    #[test]
    fn batched_ensemble_layout() {
        let ds = gen_twonorm(60, 5).unwrap();
        let grid = ParamGrid {
            axes: vec![
                GridAxis { name: "c".into(), values: vec![0.5, 8.0] },
                GridAxis { name: "gamma".into(), values: vec![0.01, 0.5] },
            ],
        };
        let ens = build_batched_ensemble(ModelKind::Svm, &ds, 10, 2, &grid, 77).unwrap();
        assert_eq!(ens.len(), 10);
        assert_eq!(ens.batch_params.len(), 2);
        for (j, m) in ens.models.iter().enumerate() {
            let b = if j < 5 { 0 } else { 1 };
            assert_eq!(m.hyperparams, ens.batch_params[b]);
            assert_eq!(m.train_indices.len(), 30);
            assert!(!m.train_indices.with_replacement);
            assert!(m.scaler.is_some());
        }
        assert_eq!(ens, build_batched_ensemble(ModelKind::Svm, &ds, 10, 2, &grid, 77).unwrap());
        assert!(build_batched_ensemble(ModelKind::Tree, &ds, 10, 2, &grid, 77).is_err());
    }

    #[test]
    fn forest_is_deterministic_with_nonempty_oob() {
        let ds = gen_twonorm(100, 2).unwrap();
        let f1 = build_random_forest(&ds, 25, 4).unwrap();
        let f2 = build_random_forest(&ds, 25, 4).unwrap();
        let probe = gen_twonorm(50, 99).unwrap();
        for x in probe.rows() {
            assert_eq!(f1.predict(x).unwrap(), f2.predict(x).unwrap());
        }
        for m in &f1.models {
            assert!(!m.train_indices.out_of_bag(100).is_empty());
            assert_eq!(m.hyperparams, HyperParams::Tree { mtry: 4 });
        }
        assert_eq!(build_random_forest(&ds, 1, 0).unwrap().len(), 1);
    }

    #[test]
    fn vote_rules() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![1.0]], vec![0, 1], 2).unwrap();
        let leaf = |class: usize| {
            let s = crate::data::IndexSample { indices: vec![class], with_replacement: false };
            learners::train_tree(&ds, &s, 1, 0).unwrap()
        };
        let (a, b) = (leaf(0), leaf(1));
        assert_eq!(ensemble_predict([&b, &b, &a], &[0.0]).unwrap(), 1);
        assert_eq!(ensemble_predict([&a, &b], &[0.0]).unwrap(), 0);
        assert!(ensemble_predict(std::iter::empty(), &[0.0]).is_err());
        assert!(ensemble_predict([&a], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn vote_matches_brute_force_tally() {
        let ds = gen_twonorm(80, 12).unwrap();
        let forest = build_random_forest(&ds, 15, 8).unwrap();
        let probe = gen_twonorm(40, 13).unwrap();
        for x in probe.rows() {
            let mut counts = [0usize; 2];
            for m in &forest.models {
                counts[m.predict(x).unwrap()] += 1;
            }
            let expected = if counts[1] > counts[0] { 1 } else { 0 };
            assert_eq!(forest.predict(x).unwrap(), expected);
        }
    }
}
