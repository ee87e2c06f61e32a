//! CART trees with sample weights, plus the forest and boosting ensembles
//! built on them.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{argmax, Classifier, HyperValue, Rows};
use crate::error::{Error, Result};

pub(crate) const FOREST_SIZE: usize = 20;
const DEPTH_GUARD: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Criterion {
    Gini,
    Entropy,
}

impl Criterion {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gini" => Ok(Criterion::Gini),
            "entropy" => Ok(Criterion::Entropy),
            other => Err(Error::InvalidArgument(format!("unknown split criterion `{other}`"))),
        }
    }

    /// Impurity of a weighted class histogram with total `w`.
    fn impurity(self, counts: &[f64], w: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        match self {
            Criterion::Gini => 1.0 - counts.iter().map(|c| (c / w) * (c / w)).sum::<f64>(),
            Criterion::Entropy => -counts
                .iter()
                .filter(|&&c| c > 0.0)
                .map(|c| (c / w) * (c / w).ln())
                .sum::<f64>(),
        }
    }
}

/// `min_samples_split` as an absolute count or a fraction of the training set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum MinSplit {
    Count(usize),
    Fraction(f64),
}

impl MinSplit {
    pub fn from_hyper(v: &HyperValue) -> Result<Self> {
        match v {
            HyperValue::Int(c) if *c >= 2 => Ok(MinSplit::Count(*c as usize)),
            HyperValue::Float(f) if *f > 0.0 && *f <= 1.0 => Ok(MinSplit::Fraction(*f)),
            other => Err(Error::InvalidArgument(format!("bad min_samples_split {other}"))),
        }
    }

    fn resolve(self, n: usize) -> usize {
        match self {
            MinSplit::Count(c) => c,
            MinSplit::Fraction(f) => ((f * n as f64).ceil() as usize).max(2),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct TreeParams {
    pub criterion: Criterion,
    pub min_samples_split: MinSplit,
    pub max_depth: Option<usize>,
    /// Features considered per split; `None` means all.
    pub max_features: Option<usize>,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(usize),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Tree {
    nodes: Vec<Node>,
}

struct Grower<'a> {
    x: &'a Rows,
    y: &'a [usize],
    w: &'a [f64],
    n_classes: usize,
    params: &'a TreeParams,
    min_split: usize,
    rng: ChaCha8Rng,
}

impl Tree {
    /// Grow a tree on the rows with positive weight.
    pub fn grow(x: &Rows, y: &[usize], w: &[f64], n_classes: usize, params: &TreeParams, seed: u64) -> Tree {
        let idx: Vec<usize> = (0..x.n).filter(|&i| w[i] > 0.0).collect();
        let mut g = Grower {
            x,
            y,
            w,
            n_classes,
            params,
            min_split: params.min_samples_split.resolve(idx.len()),
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let mut tree = Tree { nodes: Vec::new() };
        // explicit stack: (node slot, indices, depth)
        tree.nodes.push(Node::Leaf(0));
        let mut stack = vec![(0usize, idx, 0usize)];
        while let Some((slot, idx, depth)) = stack.pop() {
            let counts = g.histogram(&idx);
            let leaf = argmax(&counts);
            let total: f64 = counts.iter().sum();
            let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
            let depth_cap = params.max_depth.unwrap_or(DEPTH_GUARD).min(DEPTH_GUARD);
            if pure || idx.len() < g.min_split || depth >= depth_cap {
                tree.nodes[slot] = Node::Leaf(leaf);
                continue;
            }
            let parent = params.criterion.impurity(&counts, total) * total;
            match g.best_split(&idx, parent) {
                None => tree.nodes[slot] = Node::Leaf(leaf),
                Some((feature, threshold)) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        idx.iter().partition(|&&i| x.row(i)[feature] <= threshold);
                    let left = tree.nodes.len();
                    tree.nodes.push(Node::Leaf(leaf));
                    let right = tree.nodes.len();
                    tree.nodes.push(Node::Leaf(leaf));
                    tree.nodes[slot] = Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    };
                    stack.push((right, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        tree
    }

    fn predict_row(&self, row: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(c) => return *c,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    fn predict_rows(&self, q: &Rows) -> Vec<usize> {
        (0..q.n).map(|i| self.predict_row(q.row(i))).collect()
    }
}

impl Grower<'_> {
    fn histogram(&self, idx: &[usize]) -> Vec<f64> {
        let mut counts = vec![0.0; self.n_classes];
        for &i in idx {
            counts[self.y[i]] += self.w[i];
        }
        counts
    }

    /// Best `(feature, threshold)` by weighted impurity decrease, or `None`
    /// when no split improves on the parent.
    fn best_split(&mut self, idx: &[usize], parent: f64) -> Option<(usize, f64)> {
        let p = self.x.p;
        let features: Vec<usize> = match self.params.max_features {
            Some(m) if m < p => {
                let mut f = sample(&mut self.rng, p, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        };
        let total = self.histogram(idx);
        let wsum: f64 = total.iter().sum();
        let crit = self.params.criterion;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        let mut left = vec![0.0; self.n_classes];
        let mut right = vec![0.0; self.n_classes];
        for f in features {
            order.sort_by(|&a, &b| self.x.row(a)[f].total_cmp(&self.x.row(b)[f]).then(a.cmp(&b)));
            left.iter_mut().for_each(|v| *v = 0.0);
            right.copy_from_slice(&total);
            let mut wl = 0.0;
            for pos in 0..order.len() - 1 {
                let i = order[pos];
                left[self.y[i]] += self.w[i];
                right[self.y[i]] -= self.w[i];
                wl += self.w[i];
                let (va, vb) = (self.x.row(i)[f], self.x.row(order[pos + 1])[f]);
                if va >= vb {
                    continue;
                }
                let wr = wsum - wl;
                let score = crit.impurity(&left, wl) * wl + crit.impurity(&right, wr.max(0.0)) * wr.max(0.0);
                if best.is_none_or(|(s, _, _)| score < s) {
                    best = Some((score, f, 0.5 * (va + vb)));
                }
            }
        }
        best.filter(|(s, _, _)| *s < parent - 1e-12 * parent.abs().max(1e-300))
            .map(|(_, f, t)| (f, t))
    }
}

pub(crate) struct DecisionTree {
    tree: Tree,
}

impl DecisionTree {
    pub fn fit(x: &Rows, y: &[usize], n_classes: usize, params: &TreeParams, seed: u64) -> Self {
        let w = vec![1.0; x.n];
        Self {
            tree: Tree::grow(x, y, &w, n_classes, params, seed),
        }
    }
}

impl Classifier for DecisionTree {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        self.tree.predict_rows(&Rows::new(x))
    }
}

/// Bagged trees with per-split feature subsampling; bootstrap draws enter
/// as integer sample weights.
pub(crate) struct RandomForest {
    trees: Vec<Tree>,
    n_classes: usize,
}

impl RandomForest {
    pub fn fit(x: &Rows, y: &[usize], n_classes: usize, params: &TreeParams, n_trees: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trees = (0..n_trees)
            .map(|_| {
                let mut w = vec![0.0; x.n];
                for _ in 0..x.n {
                    w[rng.random_range(0..x.n)] += 1.0;
                }
                Tree::grow(x, y, &w, n_classes, params, rng.random())
            })
            .collect();
        Self { trees, n_classes }
    }
}

impl Classifier for RandomForest {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        let q = Rows::new(x);
        let per_tree: Vec<Vec<usize>> = self.trees.iter().map(|t| t.predict_rows(&q)).collect();
        (0..q.n)
            .map(|i| {
                let mut votes = vec![0.0; self.n_classes];
                for p in &per_tree {
                    votes[p[i]] += 1.0;
                }
                argmax(&votes)
            })
            .collect()
    }
}

/// SAMME boosting over depth-1 stumps.
pub(crate) struct AdaBoost {
    stumps: Vec<(Tree, f64)>,
    n_classes: usize,
}

impl AdaBoost {
    pub fn fit(x: &Rows, y: &[usize], n_classes: usize, n_estimators: usize, learning_rate: f64) -> Self {
        let params = TreeParams {
            criterion: Criterion::Gini,
            min_samples_split: MinSplit::Count(2),
            max_depth: Some(1),
            max_features: None,
        };
        let k = n_classes as f64;
        let mut w = vec![1.0 / x.n as f64; x.n];
        let mut stumps = Vec::new();
        for round in 0..n_estimators {
            let stump = Tree::grow(x, y, &w, n_classes, &params, round as u64);
            let pred = stump.predict_rows(x);
            let wsum: f64 = w.iter().sum();
            let err: f64 = (0..x.n).filter(|&i| pred[i] != y[i]).map(|i| w[i]).sum::<f64>() / wsum;
            if err <= 1e-12 {
                stumps.push((stump, 1.0));
                break;
            }
            if err >= 1.0 - 1.0 / k {
                if stumps.is_empty() {
                    stumps.push((stump, 1.0));
                }
                break;
            }
            let alpha = learning_rate * (((1.0 - err) / err).ln() + (k - 1.0).ln());
            stumps.push((stump, alpha));
            let boost = alpha.exp();
            for i in 0..x.n {
                if pred[i] != y[i] {
                    w[i] *= boost;
                }
            }
            let total: f64 = w.iter().sum();
            if !total.is_finite() || total <= 0.0 {
                break;
            }
            w.iter_mut().for_each(|v| *v /= total);
        }
        Self { stumps, n_classes }
    }
}

impl Classifier for AdaBoost {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        let q = Rows::new(x);
        let mut scores = vec![vec![0.0; self.n_classes]; q.n];
        for (stump, alpha) in &self.stumps {
            for (i, c) in stump.predict_rows(&q).into_iter().enumerate() {
                scores[i][c] += alpha;
            }
        }
        scores.iter().map(|s| argmax(s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor() -> (DMatrix<f64>, Vec<usize>) {
        let mut pts = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let a = if i % 2 == 0 { 1.0 } else { -1.0 };
            let b = if (i / 2) % 2 == 0 { 1.0 } else { -1.0 };
            let jitter = (i as f64) * 0.01;
            pts.push([a + jitter, b - jitter]);
            y.push(usize::from(a * b > 0.0));
        }
        (DMatrix::from_fn(40, 2, |i, j| pts[i][j]), y)
    }

    fn params(min_split: usize) -> TreeParams {
        TreeParams {
            criterion: Criterion::Gini,
            min_samples_split: MinSplit::Count(min_split),
            max_depth: None,
            max_features: None,
        }
    }

    #[test]
    fn deep_tree_fits_xor() {
        let (x, y) = xor();
        let t = DecisionTree::fit(&Rows::new(&x), &y, 2, &params(2), 0);
        assert_eq!(t.predict(&x), y);
    }

    #[test]
    fn huge_min_split_yields_single_leaf() {
        let (x, y) = xor();
        let t = DecisionTree::fit(&Rows::new(&x), &y, 2, &params(1000), 0);
        let p = t.predict(&x);
        assert!(p.iter().all(|&c| c == p[0]));
    }

    #[test]
    fn entropy_criterion_also_splits() {
        let (x, y) = xor();
        let mut pr = params(2);
        pr.criterion = Criterion::Entropy;
        let t = DecisionTree::fit(&Rows::new(&x), &y, 2, &pr, 0);
        assert_eq!(t.predict(&x), y);
    }

    #[test]
    fn fractional_min_split_resolves_against_n() {
        assert_eq!(MinSplit::Fraction(0.01).resolve(1000), 10);
        assert_eq!(MinSplit::Fraction(1e-5).resolve(100), 2);
    }

    #[test]
    fn forest_is_seed_deterministic() {
        let (x, y) = xor();
        let mut pr = params(2);
        pr.max_features = Some(1);
        let a = RandomForest::fit(&Rows::new(&x), &y, 2, &pr, 5, 3).predict(&x);
        let b = RandomForest::fit(&Rows::new(&x), &y, 2, &pr, 5, 3).predict(&x);
        assert_eq!(a, b);
    }

    #[test]
    fn adaboost_beats_single_stump_on_staircase() {
        // 1-D labels 0,1,0 in three bands: one stump cannot fit it
        let xs: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let y: Vec<usize> = xs.iter().map(|&v| usize::from((10.0..20.0).contains(&v))).collect();
        let x = DMatrix::from_column_slice(30, 1, &xs);
        let rows = Rows::new(&x);
        let ada = AdaBoost::fit(&rows, &y, 2, 25, 1.0).predict(&x);
        let errs = ada.iter().zip(&y).filter(|(a, b)| a != b).count();
        assert!(errs < 10, "{errs} errors");
    }
}
