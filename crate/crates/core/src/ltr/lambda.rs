//! LambdaRank pairwise gradients with |ΔNDCG| weights.
//!
//! For every pair with `label_i > label_j`:
//!
//! ```text
//! ρ_ij  = 1 / (1 + exp(σ (s_i - s_j)))
//! λ_i  -= σ ρ_ij |ΔNDCG_ij|      λ_j += σ ρ_ij |ΔNDCG_ij|
//! loss += |ΔNDCG_ij| log(1 + exp(-σ (s_i - s_j)))
//! ```
//!
//! `|ΔNDCG_ij|` is the NDCG change from swapping `i` and `j` in the current
//! score order (ties broken by original position), with gains `2^label - 1`,
//! discounts `1 / log2(rank + 1)` over the full list, normalized by the ideal
//! DCG. The lambdas are exactly `∂loss/∂s` with the swap weights held at
//! their current values.

use crate::data::EngagementLabel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SIGMA: f64 = 1.0;

/// Per-item gradients of the lambdaRank loss with respect to the scores.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSet<T>(Vec<T>);

impl<T: Scalar> LambdaSet<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn sum(&self) -> T {
        self.0.iter().copied().sum()
    }
}

/// Item indices sorted by descending score; ties keep original order.
pub fn score_order<T: Scalar>(scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

#[inline]
fn discount(rank0: usize) -> f64 {
    1.0 / ((rank0 + 2) as f64).log2()
}

pub fn ideal_dcg(labels: &[EngagementLabel], k: Option<usize>) -> f64 {
    let mut gains: Vec<f64> = labels.iter().map(|l| l.gain()).collect();
    gains.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let k = k.unwrap_or(gains.len()).min(gains.len());
    gains[..k].iter().enumerate().map(|(r, g)| g * discount(r)).sum()
}

/// NDCG@k of the score order; `None` when no item has positive gain.
pub fn ndcg_at<T: Scalar>(scores: &[T], labels: &[EngagementLabel], k: Option<usize>) -> Option<f64> {
    let ideal = ideal_dcg(labels, k);
    if ideal == 0.0 {
        return None;
    }
    let order = score_order(scores);
    let k = k.unwrap_or(order.len()).min(order.len());
    let dcg: f64 = order[..k]
        .iter()
        .enumerate()
        .map(|(r, &i)| labels[i].gain() * discount(r))
        .sum();
    Some(dcg / ideal)
}

fn check(scores_len: usize, labels_len: usize) -> Result<()> {
    if scores_len != labels_len {
        return Err(Error::InvalidArgument(format!(
            "{scores_len} scores for {labels_len} labels"
        )));
    }
    if scores_len < 2 {
        return Err(Error::InvalidArgument("lambdaRank needs at least 2 items".into()));
    }
    Ok(())
}

#[inline]
fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Loss value and lambdas in a single pass.
pub fn lambda_loss_and_gradients<T: Scalar>(
    scores: &[T],
    labels: &[EngagementLabel],
) -> Result<(T, LambdaSet<T>)> {
    check(scores.len(), labels.len())?;
    let n = scores.len();
    let mut lambdas = vec![T::zero(); n];
    let ideal = ideal_dcg(labels, None);
    if ideal == 0.0 {
        return Ok((T::zero(), LambdaSet(lambdas)));
    }
    let order = score_order(scores);
    let mut rank = vec![0usize; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let sigma = T::of(SIGMA);
    let mut loss = T::zero();
    for i in 0..n {
        for j in 0..n {
            if labels[i] <= labels[j] {
                continue;
            }
            let dgain = labels[i].gain() - labels[j].gain();
            let ddisc = discount(rank[i]) - discount(rank[j]);
            let delta = T::of((dgain * ddisc).abs() / ideal);
            let diff = scores[i] - scores[j];
            let rho = T::one() / (T::one() + (sigma * diff).exp());
            let g = sigma * rho * delta;
            lambdas[i] -= g;
            lambdas[j] += g;
            loss += delta * softplus(-sigma * diff);
        }
    }
    Ok((loss, LambdaSet(lambdas)))
}

pub fn lambda_gradients<T: Scalar>(scores: &[T], labels: &[EngagementLabel]) -> Result<LambdaSet<T>> {
    lambda_loss_and_gradients(scores, labels).map(|(_, l)| l)
}

pub fn lambda_loss<T: Scalar>(scores: &[T], labels: &[EngagementLabel]) -> Result<T> {
    lambda_loss_and_gradients(scores, labels).map(|(l, _)| l)
}
