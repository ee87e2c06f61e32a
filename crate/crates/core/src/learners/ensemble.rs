use serde::{Deserialize, Serialize};

use super::metric::ber;

pub const DEFAULT_MEMBER_CAP: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub model: usize,
    pub multiplicity: usize,
    pub cv_error: f64,
}

/// Hard majority vote over members counted with multiplicity.
///
/// A tie between classes goes to the label of the lowest-`cv_error` member
/// voting for one of the tied classes (then lowest model index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub members: Vec<EnsembleMember>,
    /// Balanced error of the vote on the data it was selected on.
    pub selection_error: f64,
}

impl Ensemble {
    pub fn single(model: usize, cv_error: f64) -> Self {
        Self {
            members: vec![EnsembleMember {
                model,
                multiplicity: 1,
                cv_error,
            }],
            selection_error: cv_error,
        }
    }

    pub fn distinct_members(&self) -> usize {
        self.members.len()
    }

    pub fn total_multiplicity(&self) -> usize {
        self.members.iter().map(|m| m.multiplicity).sum()
    }

    /// Combine per-member predictions; `predictions[i]` belongs to
    /// `self.members[i]`.
    pub fn vote(&self, predictions: &[&[usize]], n_classes: usize) -> Vec<usize> {
        let weighted: Vec<(usize, f64, usize, &[usize])> = self
            .members
            .iter()
            .zip(predictions)
            .map(|(m, p)| (m.multiplicity, m.cv_error, m.model, *p))
            .collect();
        vote_weighted(&weighted, n_classes)
    }
}

/// `members`: (multiplicity, cv_error, model index, predictions).
fn vote_weighted(members: &[(usize, f64, usize, &[usize])], n_classes: usize) -> Vec<usize> {
    let n = members.first().map_or(0, |m| m.3.len());
    let mut priority: Vec<usize> = (0..members.len()).filter(|&i| members[i].0 > 0).collect();
    priority.sort_by(|&a, &b| members[a].1.total_cmp(&members[b].1).then(members[a].2.cmp(&members[b].2)));
    let mut votes = vec![0usize; n_classes];
    (0..n)
        .map(|i| {
            votes.iter_mut().for_each(|v| *v = 0);
            for m in members {
                votes[m.3[i]] += m.0;
            }
            let top = *votes.iter().max().unwrap();
            if votes.iter().filter(|&&v| v == top).count() == 1 {
                return votes.iter().position(|&v| v == top).unwrap();
            }
            priority
                .iter()
                .map(|&m| members[m].3[i])
                .find(|&c| votes[c] == top)
                .unwrap()
        })
        .collect()
}

/// Greedy forward ensemble selection with replacement.
///
/// Starts from the lowest-error candidate and repeatedly adds the candidate
/// whose inclusion lowers the vote's balanced error the most. Under hard
/// voting with error-ordered tie-breaks a two-member vote always reproduces
/// its better member, so when no single addition strictly helps, the best
/// pair addition is tried before stopping. Total multiplicity is capped at
/// [`DEFAULT_MEMBER_CAP`].
pub fn ensemble_selection(
    candidates: &[usize],
    errors: &[f64],
    predictions: &[Vec<usize>],
    y_true: &[usize],
    n_classes: usize,
) -> Ensemble {
    ensemble_selection_with_cap(candidates, errors, predictions, y_true, n_classes, DEFAULT_MEMBER_CAP)
}

pub fn ensemble_selection_with_cap(
    candidates: &[usize],
    errors: &[f64],
    predictions: &[Vec<usize>],
    y_true: &[usize],
    n_classes: usize,
    cap: usize,
) -> Ensemble {
    assert!(!candidates.is_empty(), "ensemble selection needs a candidate");
    assert_eq!(candidates.len(), errors.len());
    assert_eq!(candidates.len(), predictions.len());
    let c = candidates.len();
    // candidate order by (error, model index) drives every tie-break
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| errors[a].total_cmp(&errors[b]).then(candidates[a].cmp(&candidates[b])));

    let score = |mult: &[usize]| -> f64 {
        let members: Vec<(usize, f64, usize, &[usize])> = (0..c)
            .filter(|&i| mult[i] > 0)
            .map(|i| (mult[i], errors[i], candidates[i], predictions[i].as_slice()))
            .collect();
        ber(y_true, &vote_weighted(&members, n_classes), n_classes)
    };

    let mut mult = vec![0usize; c];
    mult[order[0]] = 1;
    let mut first_added = vec![usize::MAX; c];
    first_added[order[0]] = 0;
    let mut step = 1;
    let mut current = score(&mult);
    let cap = cap.max(1);

    while mult.iter().sum::<usize>() < cap {
        let mut best: Option<(f64, usize, Option<usize>)> = None;
        for &i in &order {
            mult[i] += 1;
            let s = score(&mult);
            mult[i] -= 1;
            if s < current && best.is_none_or(|b| s < b.0) {
                best = Some((s, i, None));
            }
        }
        if best.is_none() && mult.iter().sum::<usize>() + 2 <= cap {
            for (a_pos, &a) in order.iter().enumerate() {
                for &b in &order[a_pos..] {
                    mult[a] += 1;
                    mult[b] += 1;
                    let s = score(&mult);
                    mult[a] -= 1;
                    mult[b] -= 1;
                    if s < current && best.is_none_or(|bb| s < bb.0) {
                        best = Some((s, a, Some(b)));
                    }
                }
            }
        }
        let Some((s, a, b)) = best else { break };
        for i in std::iter::once(a).chain(b) {
            mult[i] += 1;
            if first_added[i] == usize::MAX {
                first_added[i] = step;
                step += 1;
            }
        }
        current = s;
    }

    let mut chosen: Vec<usize> = (0..c).filter(|&i| mult[i] > 0).collect();
    chosen.sort_by_key(|&i| first_added[i]);
    Ensemble {
        members: chosen
            .into_iter()
            .map(|i| EnsembleMember {
                model: candidates[i],
                multiplicity: mult[i],
                cv_error: errors[i],
            })
            .collect(),
        selection_error: current,
    }
}
