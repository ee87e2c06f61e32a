use crate::error::{Error, Result};

/// Balanced error rate: the mean over classes of `1 - recall`.
///
/// Classes with no true instances are left out of the average. For two
/// classes this equals `(FPR + FNR) / 2`.
pub fn balanced_error_rate(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<f64> {
    if y_true.is_empty() {
        return Err(Error::InvalidArgument("balanced error rate of empty input".into()));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::InvalidArgument(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut support = vec![0usize; n_classes];
    let mut correct = vec![0usize; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::InvalidArgument(format!("label out of range 0..{n_classes}")));
        }
        support[t] += 1;
        if t == p {
            correct[t] += 1;
        }
    }
    let (sum, present) = support
        .iter()
        .zip(&correct)
        .filter(|(&s, _)| s > 0)
        .fold((0.0, 0usize), |(acc, n), (&s, &c)| (acc + 1.0 - c as f64 / s as f64, n + 1));
    Ok(sum / present as f64)
}

/// Same as [`balanced_error_rate`] for inputs already known to be valid.
pub(crate) fn ber(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> f64 {
    balanced_error_rate(y_true, y_pred, n_classes).expect("validated labels")
}
