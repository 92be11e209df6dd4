//! Search over heterogeneous compositions.
//!
//! A composition `(t_1, …, t_M)` pools the first `t_j` members of the `j`-th
//! homogeneous ensemble. Compositions on a stride grid are scored by
//! out-of-bag error: each training row is voted on only by pooled members
//! whose training sample excluded it.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::homogeneous::{tally_winner, HomogeneousEnsemble};
use crate::learners::{BaseModel, ModelKind};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Composition {
    pub counts: Vec<usize>,
}

impl Composition {
    pub fn new(counts: Vec<usize>) -> Self {
        Composition { counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn arity(&self) -> usize {
        self.counts.len()
    }

    /// Fractions of the total, for entropy reporting.
    pub fn proportions(&self) -> Vec<f64> {
        let t = self.total() as f64;
        self.counts.iter().map(|&c| if t > 0.0 { c as f64 / t } else { 0.0 }).collect()
    }

    /// All members from ensemble `j`.
    pub fn vertex(m: usize, j: usize, t: usize) -> Self {
        let mut counts = vec![0; m];
        counts[j] = t;
        Composition { counts }
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl FromStr for Composition {
    type Err = Error;

    /// Parses `3,2,5` or `(3,2,5)`.
    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let counts = inner
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("bad composition `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Composition { counts })
    }
}

/// How a stride that does not divide `t` is handled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StridePolicy {
    /// Every coordinate is a multiple of the stride; the stride must divide `t`.
    #[default]
    Strict,
    /// The first `M − 1` coordinates are multiples of the stride and the last
    /// one takes whatever is left, so any stride `≤ t` works.
    RemainderToLast,
}

/// `C(n, k)`, exact for the sizes used here.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc
}

/// Number of grid points [`enumerate_compositions_with`] produces.
pub fn composition_count(t: usize, m: usize, stride: usize) -> u128 {
    if m == 0 || stride == 0 {
        return 0;
    }
    binomial((t / stride + m - 1) as u64, (m - 1) as u64)
}

/// All `m`-vectors of multiples of `stride` summing to `t`, in lexicographic order.
pub fn enumerate_compositions(t: usize, m: usize, stride: usize) -> Result<Vec<Composition>> {
    enumerate_compositions_with(t, m, stride, StridePolicy::Strict)
}

pub fn enumerate_compositions_with(
    t: usize,
    m: usize,
    stride: usize,
    policy: StridePolicy,
) -> Result<Vec<Composition>> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one ensemble".into()));
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    if policy == StridePolicy::Strict && !t.is_multiple_of(stride) {
        return Err(Error::InvalidArgument(format!("stride {stride} does not divide {t}")));
    }
    let units = t / stride;
    let mut out = Vec::with_capacity(composition_count(t, m, stride) as usize);
    let mut current = vec![0usize; m];

    // assign units to coordinates 0..m-1, the last coordinate absorbs the rest
    fn fill(pos: usize, left: usize, stride: usize, t: usize, current: &mut Vec<usize>, out: &mut Vec<Composition>) {
        let m = current.len();
        if pos == m - 1 {
            let used: usize = current[..m - 1].iter().sum();
            current[m - 1] = t - used;
            out.push(Composition::new(current.clone()));
            return;
        }
        for u in 0..=left {
            current[pos] = u * stride;
            fill(pos + 1, left - u, stride, t, current, out);
        }
    }
    fill(0, units, stride, t, &mut current, &mut out);
    Ok(out)
}

/// The first `t_j` members of ensemble `j`, concatenated in ensemble order.
pub fn pool<'a>(ensembles: &'a [HomogeneousEnsemble], comp: &Composition) -> Result<Vec<&'a BaseModel>> {
    if comp.arity() != ensembles.len() {
        return Err(Error::InvalidArgument(format!(
            "composition has {} entries for {} ensembles",
            comp.arity(),
            ensembles.len()
        )));
    }
    check_fingerprints(ensembles)?;
    let mut pooled = Vec::with_capacity(comp.total());
    for (j, (ens, &tj)) in ensembles.iter().zip(&comp.counts).enumerate() {
        if tj > ens.len() {
            return Err(Error::CompositionTooLarge {
                ensemble: j,
                requested: tj,
                available: ens.len(),
            });
        }
        pooled.extend(ens.models[..tj].iter());
    }
    Ok(pooled)
}

pub fn check_fingerprints(ensembles: &[HomogeneousEnsemble]) -> Result<()> {
    if let Some(first) = ensembles.first() {
        for e in &ensembles[1..] {
            if e.train_fingerprint != first.train_fingerprint {
                return Err(Error::FingerprintMismatch(
                    first.train_fingerprint.clone(),
                    e.train_fingerprint.clone(),
                ));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OobEstimate {
    /// Mean 0-1 loss over rows with at least one out-of-bag voter.
    pub error: f64,
    /// Fraction of rows with at least one out-of-bag voter.
    pub covered_fraction: f64,
}

fn score_votes(votes: &[u32], labels: &[usize], k: usize) -> OobEstimate {
    let n = labels.len();
    let mut covered = 0usize;
    let mut wrong = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let v = &votes[i * k..(i + 1) * k];
        if v.iter().any(|&c| c > 0) {
            covered += 1;
            if tally_winner(v) != label {
                wrong += 1;
            }
        }
    }
    OobEstimate {
        error: if covered > 0 { wrong as f64 / covered as f64 } else { 0.0 },
        covered_fraction: covered as f64 / n as f64,
    }
}

/// Out-of-bag error of a pooled model list on its training set.
pub fn oob_error(pooled: &[&BaseModel], train: &Dataset) -> Result<OobEstimate> {
    if pooled.is_empty() {
        return Err(Error::InvalidArgument("pooled model list is empty".into()));
    }
    let (n, k) = (train.n_instances(), train.n_classes());
    let mut votes = vec![0u32; n * k];
    for m in pooled {
        let mask = m.train_indices.in_bag_mask(n);
        for i in (0..n).filter(|&i| !mask[i]) {
            let p = m.predict(train.row(i))?;
            votes[i * k + p] += 1;
        }
    }
    Ok(score_votes(&votes, train.labels(), k))
}

/// Cumulative out-of-bag vote tallies per ensemble, so that any composition
/// can be scored in `O(n·K·M)` without touching the models again.
#[derive(Clone, Debug)]
pub struct OobCache {
    n: usize,
    k: usize,
    labels: Vec<usize>,
    /// `prefix[j][t·n·k + i·k + c]`: votes for class `c` on row `i` from the
    /// first `t` members of ensemble `j` that left row `i` out.
    prefix: Vec<Vec<u32>>,
    sizes: Vec<usize>,
}

impl OobCache {
    pub fn new(ensembles: &[HomogeneousEnsemble], train: &Dataset) -> Result<Self> {
        check_fingerprints(ensembles)?;
        if let Some(e) = ensembles.first() {
            if e.train_fingerprint != train.fingerprint() {
                return Err(Error::FingerprintMismatch(e.train_fingerprint.clone(), train.fingerprint()));
            }
        }
        let (n, k) = (train.n_instances(), train.n_classes());
        let prefix = ensembles
            .iter()
            .map(|ens| {
                let per_model: Vec<Vec<Option<usize>>> = ens
                    .models
                    .par_iter()
                    .map(|m| {
                        let mask = m.train_indices.in_bag_mask(n);
                        let preds = m.predict_dataset(train)?;
                        Ok(preds
                            .into_iter()
                            .zip(mask)
                            .map(|(p, inb)| (!inb).then_some(p))
                            .collect())
                    })
                    .collect::<Result<_>>()?;
                let stride = n * k;
                let mut table = vec![0u32; (ens.len() + 1) * stride];
                for (t, preds) in per_model.iter().enumerate() {
                    let (done, rest) = table.split_at_mut((t + 1) * stride);
                    let prev = &done[t * stride..];
                    let cur = &mut rest[..stride];
                    cur.copy_from_slice(prev);
                    for (i, p) in preds.iter().enumerate() {
                        if let Some(c) = p {
                            cur[i * k + c] += 1;
                        }
                    }
                }
                Ok(table)
            })
            .collect::<Result<_>>()?;
        Ok(OobCache {
            n,
            k,
            labels: train.labels().to_vec(),
            prefix,
            sizes: ensembles.iter().map(HomogeneousEnsemble::len).collect(),
        })
    }

    pub fn evaluate(&self, comp: &Composition) -> Result<OobEstimate> {
        if comp.arity() != self.prefix.len() {
            return Err(Error::InvalidArgument(format!(
                "composition has {} entries for {} ensembles",
                comp.arity(),
                self.prefix.len()
            )));
        }
        if comp.total() == 0 {
            return Err(Error::InvalidArgument("pooled model list is empty".into()));
        }
        let stride = self.n * self.k;
        let mut votes = vec![0u32; stride];
        for (j, &tj) in comp.counts.iter().enumerate() {
            if tj > self.sizes[j] {
                return Err(Error::CompositionTooLarge {
                    ensemble: j,
                    requested: tj,
                    available: self.sizes[j],
                });
            }
            let slice = &self.prefix[j][tj * stride..(tj + 1) * stride];
            for (v, s) in votes.iter_mut().zip(slice) {
                *v += s;
            }
        }
        Ok(score_votes(&votes, &self.labels, self.k))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub composition: Composition,
    pub oob_error: f64,
    pub covered_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexScan {
    pub kinds: Vec<ModelKind>,
    pub total: usize,
    pub stride: usize,
    pub policy: StridePolicy,
    pub entries: Vec<ScanEntry>,
    pub minima: Vec<Composition>,
    pub optimum: Composition,
    /// Out-of-bag estimate at the selected optimum (which may lie off-grid).
    pub optimum_estimate: OobEstimate,
}

impl SimplexScan {
    pub fn min_error(&self) -> f64 {
        self.entries.iter().map(|e| e.oob_error).fold(f64::INFINITY, f64::min)
    }
}

pub fn scan_simplex(ensembles: &[HomogeneousEnsemble], t: usize, stride: usize, train: &Dataset) -> Result<SimplexScan> {
    scan_simplex_with(ensembles, t, stride, StridePolicy::Strict, train)
}

pub fn scan_simplex_with(
    ensembles: &[HomogeneousEnsemble],
    t: usize,
    stride: usize,
    policy: StridePolicy,
    train: &Dataset,
) -> Result<SimplexScan> {
    let cache = OobCache::new(ensembles, train)?;
    scan_cached(&cache, ensembles.iter().map(|e| e.kind).collect(), t, stride, policy)
}

/// Scan using an existing cache.
pub fn scan_cached(
    cache: &OobCache,
    kinds: Vec<ModelKind>,
    t: usize,
    stride: usize,
    policy: StridePolicy,
) -> Result<SimplexScan> {
    let grid = enumerate_compositions_with(t, kinds.len(), stride, policy)?;
    let entries: Vec<ScanEntry> = grid
        .into_par_iter()
        .map(|composition| {
            let est = cache.evaluate(&composition)?;
            Ok(ScanEntry {
                composition,
                oob_error: est.error,
                covered_fraction: est.covered_fraction,
            })
        })
        .collect::<Result<_>>()?;
    let min = entries.iter().map(|e| e.oob_error).fold(f64::INFINITY, f64::min);
    let minima: Vec<Composition> = entries
        .iter()
        .filter(|e| e.oob_error == min)
        .map(|e| e.composition.clone())
        .collect();
    let optimum = select_optimum(&minima, t)?;
    let optimum_estimate = cache.evaluate(&optimum)?;
    Ok(SimplexScan {
        kinds,
        total: t,
        stride,
        policy,
        entries,
        minima,
        optimum,
        optimum_estimate,
    })
}

/// The single minimum, or the coordinate-wise mean of several, rounded back
/// to an integer composition summing to `t` by largest remainder (ties to
/// the lowest coordinate).
pub fn select_optimum(minima: &[Composition], t: usize) -> Result<Composition> {
    let Some(first) = minima.first() else {
        return Err(Error::InvalidArgument("no minima to select from".into()));
    };
    if minima.len() == 1 {
        return Ok(first.clone());
    }
    let m = first.arity();
    if minima.iter().any(|c| c.arity() != m) {
        return Err(Error::InvalidArgument("minima have different arities".into()));
    }
    let count = minima.len() as f64;
    let mean: Vec<f64> = (0..m)
        .map(|j| minima.iter().map(|c| c.counts[j] as f64).sum::<f64>() / count)
        .collect();
    Ok(apportion(&mean, t))
}

/// Largest-remainder rounding of nonnegative `shares` to integers summing to `t`.
pub fn apportion(shares: &[f64], t: usize) -> Composition {
    let mut counts: Vec<usize> = shares.iter().map(|s| s.max(0.0).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    if assigned > t {
        // only reachable if shares sum above t; trim from the back
        let mut excess = assigned - t;
        for c in counts.iter_mut().rev() {
            let cut = excess.min(*c);
            *c -= cut;
            excess -= cut;
        }
        return Composition { counts };
    }
    let mut order: Vec<usize> = (0..shares.len()).collect();
    // stable sort keeps lower indices first among equal remainders
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.total_cmp(&ra)
    });
    let deficit = t - assigned;
    for i in 0..deficit {
        counts[order[i % order.len()]] += 1;
    }
    Composition { counts }
}

fn heatmap_columns(kinds: &[ModelKind]) -> [usize; 3] {
    let pos = |k| kinds.iter().position(|&x| x == k);
    match (pos(ModelKind::Svm), pos(ModelKind::Mlp), pos(ModelKind::Tree)) {
        (Some(s), Some(m), Some(t)) => [s, m, t],
        _ => [0, 1, 2],
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Writes the error surface for a three-ensemble scan. Horizontal coordinate
/// `x` is the number of MLPs and vertical `y` the SVMs minus the trees. One
/// trailing row, marked `optimum`, holds the selected composition.
pub fn export_heatmap(scan: &SimplexScan, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_heatmap(scan, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn write_heatmap(scan: &SimplexScan, mut w: impl Write) -> Result<()> {
    let m = scan.kinds.len();
    if m != 3 {
        return Err(Error::HeatmapArity(m));
    }
    let [s, p, r] = heatmap_columns(&scan.kinds);
    let io = |e| Error::io("<heatmap>", e);
    writeln!(w, "t_svm,t_mlp,t_tree,x,y,oob_error,covered_fraction,marker").map_err(io)?;
    let row = |w: &mut dyn Write, c: &Composition, err: f64, cov: f64, marker: &str| -> std::io::Result<()> {
        let (ts, tm, tt) = (c.counts[s], c.counts[p], c.counts[r]);
        writeln!(
            w,
            "{ts},{tm},{tt},{tm},{},{},{},{marker}",
            ts as i64 - tt as i64,
            fmt_f64(err),
            fmt_f64(cov)
        )
    };
    for e in &scan.entries {
        row(&mut w, &e.composition, e.oob_error, e.covered_fraction, "grid").map_err(io)?;
    }
    row(
        &mut w,
        &scan.optimum,
        scan.optimum_estimate.error,
        scan.optimum_estimate.covered_fraction,
        "optimum",
    )
    .map_err(io)?;
    Ok(())
}

/// One row per grid composition (`marker = grid`) with minimum/optimum
/// flags, then a final `marker = optimum` row.
pub fn write_scan_csv(scan: &SimplexScan, mut w: impl Write) -> Result<()> {
    let io = |e| Error::io("<scan>", e);
    let mut header: Vec<String> = scan.kinds.iter().map(|k| format!("t_{k}")).collect();
    header.extend(["oob_error", "covered_fraction", "is_minimum", "is_optimum", "marker"].map(String::from));
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    let counts = |c: &Composition| c.counts.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    for e in &scan.entries {
        let is_min = scan.minima.contains(&e.composition);
        let is_opt = e.composition == scan.optimum;
        writeln!(
            w,
            "{},{},{},{},{},grid",
            counts(&e.composition),
            fmt_f64(e.oob_error),
            fmt_f64(e.covered_fraction),
            u8::from(is_min),
            u8::from(is_opt)
        )
        .map_err(io)?;
    }
    writeln!(
        w,
        "{},{},{},{},1,optimum",
        counts(&scan.optimum),
        fmt_f64(scan.optimum_estimate.error),
        fmt_f64(scan.optimum_estimate.covered_fraction),
        u8::from(scan.minima.contains(&scan.optimum)),
    )
    .map_err(io)?;
    Ok(())
}

pub fn save_scan_csv(scan: &SimplexScan, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_scan_csv(scan, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads the optimum row back from a file written by [`save_scan_csv`].
pub fn read_scan_optimum(path: impl AsRef<Path>) -> Result<Composition> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let m = header.iter().take_while(|h| h.starts_with("t_")).count();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.last() == Some(&"optimum") {
            return fields[..m].join(",").parse();
        }
    }
    Err(Error::Format(format!("{path:?}: no optimum row")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_twonorm, IndexSample};
    use crate::homogeneous::{build_random_forest, ensemble_predict};
    use crate::learners::train_tree;
    use proptest::prelude::*;

    fn brute_count(t: usize, m: usize, s: usize) -> usize {
        // independent oracle: odometer over all vectors in [0, t]^m
        let mut count = 0;
        let mut v = vec![0usize; m];
        loop {
            if v.iter().sum::<usize>() == t && v.iter().all(|c| c % s == 0) {
                count += 1;
            }
            let mut i = 0;
            loop {
                if i == m {
                    return count;
                }
                v[i] += s;
                if v[i] <= t {
                    break;
                }
                v[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn counts_match_known_values() {
        assert_eq!(enumerate_compositions(101, 3, 1).unwrap().len(), 5253);
        assert_eq!(enumerate_compositions(3, 1, 1).unwrap(), [Composition::new(vec![3])]);
        assert_eq!(enumerate_compositions(1001, 3, 13).unwrap().len(), 3081);
        assert_eq!(binomial(79, 2), 3081);
        assert_eq!(enumerate_compositions(30, 3, 10).unwrap().len(), 10);
        assert!(enumerate_compositions(10, 3, 3).is_err());
        assert!(enumerate_compositions(10, 0, 1).is_err());
    }

    #[test]
    fn lexicographic_order() {
        let c = enumerate_compositions(2, 3, 1).unwrap();
        let v: Vec<Vec<usize>> = c.into_iter().map(|c| c.counts).collect();
        assert_eq!(
            v,
            [[0, 0, 2], [0, 1, 1], [0, 2, 0], [1, 0, 1], [1, 1, 0], [2, 0, 0]].map(|a| a.to_vec())
        );
    }

    #[test]
    fn remainder_to_last_grid() {
        let grid = enumerate_compositions_with(101, 3, 13, StridePolicy::RemainderToLast).unwrap();
        assert_eq!(grid.len() as u128, binomial(7 + 2, 2));
        assert!(grid.iter().all(|c| c.total() == 101 && c.counts[0] % 13 == 0 && c.counts[1] % 13 == 0));
        assert!(grid.contains(&Composition::new(vec![0, 0, 101])));
        assert!(grid.contains(&Composition::new(vec![91, 0, 10])));
    }

    #[test]
    fn exhaustive_count_identity() {
        for m in 1..=4 {
            for s in 1..=3 {
                for u in 0..=12 {
                    let t = u * s;
                    let got = enumerate_compositions(t, m, s).unwrap();
                    assert_eq!(got.len() as u128, composition_count(t, m, s));
                    assert_eq!(got.len(), brute_count(t, m, s), "t={t} m={m} s={s}");
                }
            }
        }
    }

    #[test]
    fn optimum_selection() {
        let c = |v: &[usize]| Composition::new(v.to_vec());
        assert_eq!(select_optimum(&[c(&[13, 0, 88])], 101).unwrap(), c(&[13, 0, 88]));
        assert_eq!(select_optimum(&[c(&[10, 0, 0]), c(&[0, 10, 0])], 10).unwrap(), c(&[5, 5, 0]));
        assert_eq!(select_optimum(&[c(&[3, 3, 4]), c(&[4, 4, 2])], 10).unwrap(), c(&[4, 3, 3]));
        assert!(select_optimum(&[], 10).is_err());
    }

    fn tiny_forests() -> (Dataset, Vec<HomogeneousEnsemble>) {
        let ds = gen_twonorm(40, 3).unwrap();
        let ens = vec![
            build_random_forest(&ds, 6, 1).unwrap(),
            build_random_forest(&ds, 6, 2).unwrap(),
            build_random_forest(&ds, 6, 3).unwrap(),
        ];
        (ds, ens)
    }

    #[test]
    fn pool_takes_prefixes() {
        let (_, ens) = tiny_forests();
        let p = pool(&ens, &Composition::new(vec![2, 1, 0])).unwrap();
        assert_eq!(p.len(), 3);
        assert!(std::ptr::eq(p[0], &ens[0].models[0]));
        assert!(std::ptr::eq(p[1], &ens[0].models[1]));
        assert!(std::ptr::eq(p[2], &ens[1].models[0]));
        let v = pool(&ens, &Composition::new(vec![0, 0, 6])).unwrap();
        assert!(v.iter().zip(&ens[2].models).all(|(a, b)| std::ptr::eq(*a, b)));
        assert!(matches!(
            pool(&ens, &Composition::new(vec![7, 0, 0])),
            Err(Error::CompositionTooLarge { .. })
        ));
        let mut other = ens.clone();
        other[1].train_fingerprint = "x".into();
        assert!(matches!(
            pool(&other, &Composition::new(vec![1, 1, 1])),
            Err(Error::FingerprintMismatch(..))
        ));
    }

    #[test]
    fn oob_single_model_covers_left_out_row() {
        let ds = gen_twonorm(10, 1).unwrap();
        let s = IndexSample {
            indices: (0..9).collect(),
            with_replacement: false,
        };
        let m = train_tree(&ds, &s, 2, 0).unwrap();
        let est = oob_error(&[&m], &ds).unwrap();
        assert_eq!(est.covered_fraction, 0.1);
        assert!(oob_error(&[], &ds).is_err());
    }

    #[test]
    fn oob_constant_majority_and_duplication() {
        // 7 of class 0, 3 of class 1; a leaf trained on one class-0 row
        // predicts 0 everywhere
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let labels = vec![0, 0, 0, 0, 0, 0, 0, 1, 1, 1];
        let ds = Dataset::from_rows(&rows, labels, 2).unwrap();
        let a = train_tree(&ds, &IndexSample { indices: vec![0], with_replacement: false }, 1, 0).unwrap();
        let b = train_tree(&ds, &IndexSample { indices: vec![1], with_replacement: false }, 1, 0).unwrap();
        let est = oob_error(&[&a, &b], &ds).unwrap();
        assert_eq!(est.covered_fraction, 1.0);
        assert!((est.error - 0.3).abs() < 1e-12);
        let (ds, ens) = tiny_forests();
        let models: Vec<&BaseModel> = ens[0].models.iter().collect();
        let doubled: Vec<&BaseModel> = models.iter().chain(models.iter()).copied().collect();
        assert_eq!(oob_error(&models, &ds).unwrap(), oob_error(&doubled, &ds).unwrap());
    }

    #[test]
    fn cache_agrees_with_direct_oob() {
        let (ds, ens) = tiny_forests();
        let cache = OobCache::new(&ens, &ds).unwrap();
        for comp in enumerate_compositions(6, 3, 2).unwrap() {
            let pooled = pool(&ens, &comp).unwrap();
            assert_eq!(cache.evaluate(&comp).unwrap(), oob_error(&pooled, &ds).unwrap());
        }
    }

    #[test]
    fn scan_vertices_and_heatmap() {
        let (ds, ens) = tiny_forests();
        let scan = scan_simplex(&ens, 6, 3, &ds).unwrap();
        assert_eq!(scan.entries.len(), 6);
        for j in 0..3 {
            let v = Composition::vertex(3, j, 6);
            let entry = scan.entries.iter().find(|e| e.composition == v).unwrap();
            let models: Vec<&BaseModel> = ens[j].models.iter().collect();
            assert_eq!(entry.oob_error, oob_error(&models, &ds).unwrap().error);
            // pooled vertex predictions equal the homogeneous ensemble's
            let pooled = pool(&ens, &v).unwrap();
            for x in ds.rows() {
                assert_eq!(ensemble_predict(pooled.iter().copied(), x).unwrap(), ens[j].predict(x).unwrap());
            }
        }
        assert_eq!(scan.min_error(), scan.optimum_estimate.error.min(scan.min_error()));
        let mut buf = Vec::new();
        write_heatmap(&scan, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let grid_rows = text.lines().filter(|l| l.ends_with(",grid")).count();
        assert_eq!(grid_rows, scan.entries.len());
        assert_eq!(text.lines().filter(|l| l.ends_with(",optimum")).count(), 1);
    }

    #[test]
    fn heatmap_axes() {
        let scan = SimplexScan {
            kinds: vec![ModelKind::Svm, ModelKind::Mlp, ModelKind::Tree],
            total: 10,
            stride: 10,
            policy: StridePolicy::Strict,
            entries: vec![
                ScanEntry { composition: Composition::new(vec![0, 10, 0]), oob_error: 0.1, covered_fraction: 1.0 },
                ScanEntry { composition: Composition::new(vec![10, 0, 0]), oob_error: 0.2, covered_fraction: 1.0 },
            ],
            minima: vec![Composition::new(vec![0, 10, 0])],
            optimum: Composition::new(vec![0, 10, 0]),
            optimum_estimate: OobEstimate { error: 0.1, covered_fraction: 1.0 },
        };
        let mut buf = Vec::new();
        write_heatmap(&scan, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "0,10,0,10,0,0.1,1,grid");
        assert_eq!(lines[2], "10,0,0,0,10,0.2,1,grid");
        let mut two = scan.clone();
        two.kinds.pop();
        let err = write_heatmap(&two, Vec::new()).unwrap_err();
        assert!(err.to_string().contains("heatmap export requires 3 ensemble types"));
    }

    #[test]
    fn scan_file_round_trips_optimum() {
        let (ds, ens) = tiny_forests();
        let scan = scan_simplex(&ens, 6, 2, &ds).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scan.csv");
        save_scan_csv(&scan, &path).unwrap();
        assert_eq!(read_scan_optimum(&path).unwrap(), scan.optimum);
    }

    proptest! {
        #[test]
        fn apportion_is_a_valid_composition(
            raw in proptest::collection::vec(proptest::collection::vec(0usize..20, 3), 1..6)
        ) {
            let t = 20;
            // scale each vector to sum to t so the minima are valid compositions
            let minima: Vec<Composition> = raw.iter().map(|v| {
                let mut c = v.clone();
                let s: usize = c.iter().sum();
                if s == 0 { c[0] = t; } else {
                    let shares: Vec<f64> = c.iter().map(|&x| x as f64 * t as f64 / s as f64).collect();
                    c = apportion(&shares, t).counts;
                }
                Composition::new(c)
            }).collect();
            let opt = select_optimum(&minima, t).unwrap();
            prop_assert_eq!(opt.total(), t);
            prop_assert_eq!(opt.arity(), 3);
        }

        #[test]
        fn enumerated_compositions_are_valid(t_units in 0usize..15, m in 1usize..5, s in 1usize..4) {
            let t = t_units * s;
            for c in enumerate_compositions(t, m, s).unwrap() {
                prop_assert_eq!(c.total(), t);
                prop_assert!(c.counts.iter().all(|x| x % s == 0));
            }
        }
    }
}
