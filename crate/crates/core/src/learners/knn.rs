use nalgebra::DMatrix;

use super::{Classifier, Rows};

/// k-nearest neighbours with Minkowski distance `p ∈ {1, 2}`.
pub(crate) struct Knn {
    train: Rows,
    labels: Vec<usize>,
    n_classes: usize,
    k: usize,
    p: u32,
}

impl Knn {
    pub fn fit(train: Rows, y: &[usize], n_classes: usize, k: usize, p: u32) -> Self {
        let k = k.min(train.n);
        Self {
            train,
            labels: y.to_vec(),
            n_classes,
            k,
            p,
        }
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.p {
            1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            _ => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
        }
    }

    fn predict_one(&self, q: &[f64], scratch: &mut Vec<(f64, usize)>) -> usize {
        scratch.clear();
        scratch.extend((0..self.train.n).map(|i| (self.distance(q, self.train.row(i)), i)));
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < scratch.len() {
            scratch.select_nth_unstable_by(self.k - 1, cmp);
            scratch.truncate(self.k);
        }
        scratch.sort_by(cmp);
        let mut votes = vec![0usize; self.n_classes];
        for &(_, i) in scratch.iter() {
            votes[self.labels[i]] += 1;
        }
        let top = *votes.iter().max().unwrap();
        // tie between classes: the nearest neighbour among tied classes wins
        scratch
            .iter()
            .map(|&(_, i)| self.labels[i])
            .find(|&c| votes[c] == top)
            .unwrap()
    }
}

impl Classifier for Knn {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        let q = Rows::new(x);
        let mut scratch = Vec::with_capacity(self.train.n);
        (0..q.n).map(|i| self.predict_one(q.row(i), &mut scratch)).collect()
    }
}
