//! CART classification tree with random feature subsets at each node.

use rand::seq::SliceRandom;

use crate::data::{Dataset, IndexSample};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Leaf {
        class: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Nodes stored in an arena; node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    pub(crate) nodes: Vec<Node>,
}

pub(crate) fn majority(counts: &[usize]) -> usize {
    // first maximum wins, so ties go to the lowest class index
    let mut best = 0;
    for (c, &v) in counts.iter().enumerate() {
        if v > counts[best] {
            best = c;
        }
    }
    best
}

struct Builder<'a> {
    ds: &'a Dataset,
    mtry: usize,
    rng: crate::rng::Rng,
    nodes: Vec<Node>,
    features: Vec<usize>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn grow(&mut self, mut rows: Vec<usize>) -> usize {
        let k = self.ds.n_classes();
        let mut counts = vec![0usize; k];
        for &r in &rows {
            counts[self.ds.label(r)] += 1;
        }
        let id = self.nodes.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || rows.len() < 2 {
            self.nodes.push(Node::Leaf {
                class: majority(&counts),
            });
            return id;
        }
        let Some(split) = self.best_split(&mut rows, &counts) else {
            self.nodes.push(Node::Leaf {
                class: majority(&counts),
            });
            return id;
        };
        self.nodes.push(Node::Leaf { class: 0 });
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.ds.row(r)[split.feature] <= split.threshold);
        drop(rows);
        let left = self.grow(left_rows);
        let right = self.grow(right_rows);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    /// Best Gini split over `mtry` random features. If none of those can
    /// separate the rows, further features are drawn until one can.
    fn best_split(&mut self, rows: &mut [usize], counts: &[usize]) -> Option<BestSplit> {
        let d = self.ds.n_features();
        self.features.shuffle(&mut self.rng);
        let mut best: Option<BestSplit> = None;
        for (tried, fi) in (0..d).enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            let feature = self.features[fi];
            if let Some(s) = self.best_for_feature(rows, counts, feature) {
                if best.as_ref().is_none_or(|b| s.score > b.score) {
                    best = Some(s);
                }
            }
        }
        best
    }

    fn best_for_feature(&self, rows: &mut [usize], counts: &[usize], feature: usize) -> Option<BestSplit> {
        let ds = self.ds;
        rows.sort_by(|&a, &b| ds.row(a)[feature].total_cmp(&ds.row(b)[feature]));
        let n = rows.len() as f64;
        let mut left = vec![0usize; counts.len()];
        let mut best: Option<BestSplit> = None;
        for i in 0..rows.len() - 1 {
            left[ds.label(rows[i])] += 1;
            let lo = ds.row(rows[i])[feature];
            let hi = ds.row(rows[i + 1])[feature];
            if lo == hi {
                continue;
            }
            let nl = (i + 1) as f64;
            let nr = n - nl;
            // maximizing Σc²/n over both children minimizes weighted Gini
            let (mut sl, mut sr) = (0.0, 0.0);
            for (c, &l) in left.iter().enumerate() {
                let r = counts[c] - l;
                sl += (l * l) as f64;
                sr += (r * r) as f64;
            }
            let score = sl / nl + sr / nr;
            if best.as_ref().is_none_or(|b| score > b.score) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(BestSplit {
                    feature,
                    threshold,
                    score,
                });
            }
        }
        best
    }
}

impl DecisionTree {
    pub fn fit(ds: &Dataset, sample: &IndexSample, mtry: usize, seed: u64) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        let d = ds.n_features();
        if mtry == 0 || mtry > d {
            return Err(Error::InvalidArgument(format!("mtry {mtry} not in [1, {d}]")));
        }
        if let Some(&bad) = sample.indices.iter().find(|&&i| i >= ds.n_instances()) {
            return Err(Error::InvalidArgument(format!("sample index {bad} out of range")));
        }
        let mut b = Builder {
            ds,
            mtry,
            rng: rng_from_seed(seed),
            nodes: Vec::new(),
            features: (0..d).collect(),
        };
        b.grow(sample.indices.clone());
        Ok(DecisionTree { nodes: b.nodes })
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all(n: usize) -> IndexSample {
        IndexSample {
            indices: (0..n).collect(),
            with_replacement: false,
        }
    }

    fn training_errors(tree: &DecisionTree, ds: &Dataset) -> usize {
        (0..ds.n_instances())
            .filter(|&i| tree.predict(ds.row(i)) != ds.label(i))
            .count()
    }

    #[test]
    fn single_instance_gives_constant_leaf() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![1.0]], vec![0, 1], 2).unwrap();
        let sample = IndexSample {
            indices: vec![1],
            with_replacement: true,
        };
        let tree = DecisionTree::fit(&ds, &sample, 1, 0).unwrap();
        assert_eq!(tree.n_nodes(), 1);
        for x in [-5.0, 0.0, 7.0] {
            assert_eq!(tree.predict(&[x]), 1);
        }
    }

    #[test]
    fn separable_set_is_fit_exactly() {
        let rows = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![2.0, 0.0], vec![2.0, 1.0]];
        let ds = Dataset::from_rows(&rows, vec![0, 0, 1, 1], 2).unwrap();
        let tree = DecisionTree::fit(&ds, &all(4), 1, 3).unwrap();
        assert_eq!(training_errors(&tree, &ds), 0);
    }

    #[test]
    fn xor_needs_depth_two() {
        let rows = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let ds = Dataset::from_rows(&rows, vec![0, 1, 1, 0], 2).unwrap();
        for seed in 0..10 {
            let tree = DecisionTree::fit(&ds, &all(4), 1, seed).unwrap();
            assert_eq!(training_errors(&tree, &ds), 0);
            assert_eq!(tree.depth(), 2);
        }
    }

    #[test]
    fn empty_sample_and_bad_mtry_are_rejected() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![1.0]], vec![0, 1], 2).unwrap();
        let empty = IndexSample {
            indices: vec![],
            with_replacement: false,
        };
        assert!(matches!(DecisionTree::fit(&ds, &empty, 1, 0), Err(Error::EmptySample)));
        assert!(DecisionTree::fit(&ds, &all(2), 2, 0).is_err());
    }

    #[test]
    fn pure_growth_on_random_data() {
        // distinct points, so a tree grown to purity has zero training error
        let ds = crate::data::gen_ringnorm(120, 9).unwrap();
        for seed in 0..5 {
            let tree = DecisionTree::fit(&ds, &all(120), 4, seed).unwrap();
            assert_eq!(training_errors(&tree, &ds), 0);
            assert_eq!(tree, DecisionTree::fit(&ds, &all(120), 4, seed).unwrap());
        }
    }

    #[test]
    fn conflicting_duplicates_end_in_majority_leaf() {
        let rows = vec![vec![1.0], vec![1.0], vec![1.0]];
        let ds = Dataset::from_rows(&rows, vec![1, 0, 1], 2).unwrap();
        let tree = DecisionTree::fit(&ds, &all(3), 1, 0).unwrap();
        assert_eq!(tree.n_nodes(), 1);
        assert_eq!(tree.predict(&[1.0]), 1);
    }
}
