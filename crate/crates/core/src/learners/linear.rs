use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{argmax, Classifier, Rows};
use crate::error::{Error, Result};

const LOGREG_ITERS: usize = 500;
const PERCEPTRON_EPOCHS: usize = 20;

/// Multinomial logistic regression, full-batch gradient descent with an L2
/// penalty `||W||² / (2 C n)` on the non-bias weights.
pub(crate) struct LogisticRegression {
    /// `n_classes × (p + 1)`, bias last.
    weights: Vec<Vec<f64>>,
}

impl LogisticRegression {
    pub fn fit(x: &Rows, y: &[usize], n_classes: usize, c: f64) -> Result<Self> {
        let (n, p) = (x.n, x.p);
        let lambda = 1.0 / (c * n as f64);
        // step 1/L with L = λmax(X̃ᵀX̃/n)/2 + λ bounding the Hessian
        let step = 1.0 / (0.5 * gram_top_eigenvalue(x) + lambda);
        let mut w = vec![vec![0.0; p + 1]; n_classes];
        let mut grad = vec![vec![0.0; p + 1]; n_classes];
        let mut probs = vec![0.0; n_classes];

        for _ in 0..LOGREG_ITERS {
            for g in grad.iter_mut() {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            for i in 0..n {
                let row = x.row(i);
                softmax_scores(&w, row, &mut probs);
                for (k, g) in grad.iter_mut().enumerate() {
                    let r = probs[k] - f64::from(u8::from(y[i] == k));
                    for j in 0..p {
                        g[j] += r * row[j];
                    }
                    g[p] += r;
                }
            }
            for (wk, gk) in w.iter_mut().zip(&grad) {
                for j in 0..=p {
                    let reg = if j < p { lambda * wk[j] } else { 0.0 };
                    wk[j] -= step * (gk[j] / n as f64 + reg);
                }
            }
        }
        if w.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Learner("logistic regression diverged".into()));
        }
        Ok(Self { weights: w })
    }
}

fn softmax_scores(w: &[Vec<f64>], row: &[f64], out: &mut [f64]) {
    let p = row.len();
    for (k, wk) in w.iter().enumerate() {
        out[k] = wk[p] + row.iter().zip(wk).map(|(a, b)| a * b).sum::<f64>();
    }
    let mx = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in out.iter_mut() {
        *v = (*v - mx).exp();
        total += *v;
    }
    for v in out.iter_mut() {
        *v /= total;
    }
}

/// Largest eigenvalue of `X̃ᵀX̃ / n` (bias column included) by power iteration.
fn gram_top_eigenvalue(x: &Rows) -> f64 {
    let d = x.p + 1;
    let mut gram = vec![0.0; d * d];
    for i in 0..x.n {
        let row = x.row(i);
        for a in 0..d {
            let xa = if a < x.p { row[a] } else { 1.0 };
            for b in 0..d {
                let xb = if b < x.p { row[b] } else { 1.0 };
                gram[a * d + b] += xa * xb;
            }
        }
    }
    gram.iter_mut().for_each(|g| *g /= x.n as f64);
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut nv = vec![0.0; d];
        for a in 0..d {
            nv[a] = (0..d).map(|b| gram[a * d + b] * v[b]).sum();
        }
        let nrm = nv.iter().map(|t| t * t).sum::<f64>().sqrt();
        if nrm == 0.0 {
            break;
        }
        lambda = nrm;
        v = nv.into_iter().map(|t| t / nrm).collect();
    }
    // power iteration approaches from below; pad so the step stays stable
    (lambda * 1.05).max(1e-12)
}

impl Classifier for LogisticRegression {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        let q = Rows::new(x);
        let mut probs = vec![0.0; self.weights.len()];
        (0..q.n)
            .map(|i| {
                softmax_scores(&self.weights, q.row(i), &mut probs);
                argmax(&probs)
            })
            .collect()
    }
}

/// Multiclass perceptron with a seeded sample order per epoch.
pub(crate) struct Perceptron {
    weights: Vec<Vec<f64>>,
}

impl Perceptron {
    pub fn fit(x: &Rows, y: &[usize], n_classes: usize, seed: u64) -> Self {
        let p = x.p;
        let mut w = vec![vec![0.0; p + 1]; n_classes];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..x.n).collect();
        let mut scores = vec![0.0; n_classes];
        for _ in 0..PERCEPTRON_EPOCHS {
            order.shuffle(&mut rng);
            let mut mistakes = 0;
            for &i in &order {
                let row = x.row(i);
                linear_scores(&w, row, &mut scores);
                let pred = argmax(&scores);
                if pred != y[i] {
                    mistakes += 1;
                    for j in 0..p {
                        w[y[i]][j] += row[j];
                        w[pred][j] -= row[j];
                    }
                    w[y[i]][p] += 1.0;
                    w[pred][p] -= 1.0;
                }
            }
            if mistakes == 0 {
                break;
            }
        }
        Self { weights: w }
    }
}

fn linear_scores(w: &[Vec<f64>], row: &[f64], out: &mut [f64]) {
    let p = row.len();
    for (k, wk) in w.iter().enumerate() {
        out[k] = wk[p] + row.iter().zip(wk).map(|(a, b)| a * b).sum::<f64>();
    }
}

impl Classifier for Perceptron {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        let q = Rows::new(x);
        let mut scores = vec![0.0; self.weights.len()];
        (0..q.n)
            .map(|i| {
                linear_scores(&self.weights, q.row(i), &mut scores);
                argmax(&scores)
            })
            .collect()
    }
}
