//! Threshold filtering and score-weighted averaging of scored candidates.

use crate::error::{Error, Result};
use crate::traj::ActionChunk;

/// Added to shifted scores when the threshold is negative.
pub const NEGATIVE_THRESHOLD_EPS: f64 = 1e-9;
pub const DEFAULT_THRESHOLD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidates {
    pub candidates: Vec<ActionChunk>,
    pub scores: Vec<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionReport {
    pub retained_count: usize,
    pub used_fallback: bool,
}

/// Keeps candidates scoring strictly above the threshold and returns their
/// score-weighted average; with no survivors, returns the best-scoring
/// candidate (lowest index on ties).
///
/// For a negative threshold the weights are `q - threshold + eps`; for a
/// threshold of negative infinity, the limit of that rule, uniform weights.
pub fn select_action(scored: &ScoredCandidates) -> Result<(ActionChunk, SelectionReport)> {
    let ScoredCandidates {
        candidates,
        scores,
        threshold,
    } = scored;
    if candidates.is_empty() {
        return Err(Error::Rejected("empty candidate set".into()));
    }
    let dim = candidates[0].horizon();
    if candidates.iter().any(|c| c.horizon() != dim) {
        return Err(Error::Rejected("candidates differ in horizon".into()));
    }
    let flats: Vec<Vec<f64>> = candidates.iter().map(ActionChunk::flatten).collect();
    match select_weights(scores, *threshold, candidates.len())? {
        Selection::Fallback(i) => Ok((
            candidates[i].clone(),
            SelectionReport {
                retained_count: 0,
                used_fallback: true,
            },
        )),
        Selection::Weighted(w) if w.len() == 1 => Ok((
            candidates[w[0].0].clone(),
            SelectionReport {
                retained_count: 1,
                used_fallback: false,
            },
        )),
        Selection::Weighted(w) => {
            let report = SelectionReport {
                retained_count: w.len(),
                used_fallback: false,
            };
            Ok((ActionChunk::from_flat(&blend(&flats, &w))?, report))
        }
    }
}

/// [`select_action`] over plain vectors, without the `[0, 1]` clamp of chunks.
pub fn select_vector(candidates: &[Vec<f64>], scores: &[f64], threshold: f64) -> Result<(Vec<f64>, SelectionReport)> {
    if candidates.is_empty() {
        return Err(Error::Rejected("empty candidate set".into()));
    }
    if candidates.iter().any(|c| c.len() != candidates[0].len()) {
        return Err(Error::Rejected("candidates differ in length".into()));
    }
    Ok(match select_weights(scores, threshold, candidates.len())? {
        Selection::Fallback(i) => (
            candidates[i].clone(),
            SelectionReport {
                retained_count: 0,
                used_fallback: true,
            },
        ),
        Selection::Weighted(w) => {
            let out = if w.len() == 1 {
                candidates[w[0].0].clone()
            } else {
                blend(candidates, &w)
            };
            (
                out,
                SelectionReport {
                    retained_count: w.len(),
                    used_fallback: false,
                },
            )
        }
    })
}

enum Selection {
    Fallback(usize),
    /// `(index, normalized weight)` for every retained candidate, in index order.
    Weighted(Vec<(usize, f64)>),
}

fn select_weights(scores: &[f64], threshold: f64, count: usize) -> Result<Selection> {
    if count == 0 {
        return Err(Error::Rejected("empty candidate set".into()));
    }
    if scores.len() != count {
        return Err(Error::Rejected(format!("{count} candidates but {} scores", scores.len())));
    }
    if scores.iter().any(|q| !q.is_finite()) {
        return Err(Error::Rejected("non-finite score".into()));
    }
    if threshold.is_nan() {
        return Err(Error::Rejected("threshold is NaN".into()));
    }
    let retained: Vec<usize> = (0..count).filter(|&i| scores[i] > threshold).collect();
    if retained.is_empty() {
        let mut best = 0;
        for i in 1..count {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        return Ok(Selection::Fallback(best));
    }
    let raw: Vec<f64> = retained
        .iter()
        .map(|&i| {
            if threshold >= 0.0 {
                scores[i]
            } else if threshold.is_finite() {
                scores[i] - threshold + NEGATIVE_THRESHOLD_EPS
            } else {
                1.0
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(Selection::Weighted(
        retained.into_iter().zip(raw).map(|(i, w)| (i, w / total)).collect(),
    ))
}

fn blend(candidates: &[Vec<f64>], weights: &[(usize, f64)]) -> Vec<f64> {
    let mut acc = vec![0.0; candidates[0].len()];
    for &(i, w) in weights {
        for (a, v) in acc.iter_mut().zip(&candidates[i]) {
            *a += w * v;
        }
    }
    acc
}
