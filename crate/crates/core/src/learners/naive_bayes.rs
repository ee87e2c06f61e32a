use nalgebra::DMatrix;

use super::{argmax, Classifier, Rows};

const VAR_SMOOTHING: f64 = 1e-9;

/// Gaussian naive Bayes with per-class diagonal variances.
pub(crate) struct GaussianNb {
    /// `None` for classes absent from the training data.
    classes: Vec<Option<ClassModel>>,
}

struct ClassModel {
    log_prior: f64,
    means: Vec<f64>,
    vars: Vec<f64>,
}

impl GaussianNb {
    pub fn fit(x: &Rows, y: &[usize], n_classes: usize) -> Self {
        let p = x.p;
        // smoothing relative to the largest feature variance, as in scikit-learn
        let mut max_var: f64 = 0.0;
        for j in 0..p {
            let mean = (0..x.n).map(|i| x.row(i)[j]).sum::<f64>() / x.n as f64;
            let var = (0..x.n).map(|i| (x.row(i)[j] - mean).powi(2)).sum::<f64>() / x.n as f64;
            max_var = max_var.max(var);
        }
        let eps = VAR_SMOOTHING * max_var.max(1e-300) + 1e-300;

        let classes = (0..n_classes)
            .map(|c| {
                let members: Vec<usize> = (0..x.n).filter(|&i| y[i] == c).collect();
                if members.is_empty() {
                    return None;
                }
                let cnt = members.len() as f64;
                let means: Vec<f64> = (0..p).map(|j| members.iter().map(|&i| x.row(i)[j]).sum::<f64>() / cnt).collect();
                let vars: Vec<f64> = (0..p)
                    .map(|j| members.iter().map(|&i| (x.row(i)[j] - means[j]).powi(2)).sum::<f64>() / cnt + eps)
                    .collect();
                Some(ClassModel {
                    log_prior: (cnt / x.n as f64).ln(),
                    means,
                    vars,
                })
            })
            .collect();
        Self { classes }
    }
}

impl Classifier for GaussianNb {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        let q = Rows::new(x);
        (0..q.n)
            .map(|i| {
                let row = q.row(i);
                let scores: Vec<f64> = self
                    .classes
                    .iter()
                    .map(|cm| match cm {
                        None => f64::NEG_INFINITY,
                        Some(cm) => {
                            cm.log_prior
                                + row
                                    .iter()
                                    .zip(cm.means.iter().zip(&cm.vars))
                                    .map(|(&v, (&m, &s2))| {
                                        -0.5 * ((2.0 * std::f64::consts::PI * s2).ln() + (v - m).powi(2) / s2)
                                    })
                                    .sum::<f64>()
                        }
                    })
                    .collect();
                argmax(&scores)
            })
            .collect()
    }
}
