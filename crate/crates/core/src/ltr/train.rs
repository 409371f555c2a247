use std::hash::Hasher;

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::lambda::{lambda_loss_and_gradients, ndcg_at};
use super::model::{FeatureLayout, RankerModel, Scorer, TrainingSummary};
use crate::data::EngagementLabel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One impression's items in model column order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankGroup<T> {
    pub session: String,
    pub ordinal: u64,
    pub rows: Vec<Vec<T>>,
    pub labels: Vec<EngagementLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankerHyperParams {
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub clip: f64,
    pub seed: u64,
    /// Hidden width of the one-layer scorer; `None` trains a linear scorer.
    pub hidden: Option<usize>,
}

impl Default for RankerHyperParams {
    fn default() -> Self {
        RankerHyperParams {
            steps: 4000,
            lr: 0.05,
            batch: 8,
            clip: 1.0,
            seed: 0,
            hidden: Some(super::model::DEFAULT_HIDDEN),
        }
    }
}

/// Deterministic 80/20 session split keyed by `salt`.
pub fn is_validation_session(session: &str, salt: u64) -> bool {
    let mut h = FnvHasher::with_key(salt ^ 0x5eed_0f_5a1e);
    h.write(session.as_bytes());
    h.finish() % 5 == 0
}

/// LambdaRank loss of one group of standardized rows; accumulates the
/// scorer gradient into `grad`.
pub fn group_loss_and_grad<T: Scalar>(
    scorer: &Scorer<T>,
    rows: &[Vec<T>],
    labels: &[EngagementLabel],
    grad: &mut Scorer<T>,
) -> Result<T> {
    let scores: Vec<T> = rows.iter().map(|x| scorer.forward(x)).collect();
    let (loss, lambdas) = lambda_loss_and_gradients(&scores, labels)?;
    for (x, &l) in rows.iter().zip(lambdas.as_slice()) {
        if l != T::zero() {
            scorer.backward(x, l, grad);
        }
    }
    Ok(loss)
}

/// Mean NDCG@k over groups with at least one engaged item.
pub fn mean_group_ndcg<T: Scalar>(model: &RankerModel<T>, groups: &[RankGroup<T>], k: usize) -> Result<Option<f64>> {
    let mut total = 0.0;
    let mut n = 0usize;
    for g in groups {
        let scores = g.rows.iter().map(|x| model.score(x)).collect::<Result<Vec<T>>>()?;
        if let Some(v) = ndcg_at(&scores, &g.labels, Some(k)) {
            total += v;
            n += 1;
        }
    }
    Ok((n > 0).then(|| total / n as f64))
}

fn fit_standardization<T: Scalar>(groups: &[&RankGroup<T>], cols: usize) -> (Vec<T>, Vec<T>) {
    let mut sum = vec![0.0f64; cols];
    let mut sq = vec![0.0f64; cols];
    let mut n = 0usize;
    for g in groups {
        for row in &g.rows {
            for (c, v) in row.iter().enumerate() {
                let v = v.as_f64();
                sum[c] += v;
                sq[c] += v * v;
            }
            n += 1;
        }
    }
    let n = n.max(1) as f64;
    let mut shift = Vec::with_capacity(cols);
    let mut scale = Vec::with_capacity(cols);
    for c in 0..cols {
        let mean = sum[c] / n;
        let var = (sq[c] / n - mean * mean).max(0.0);
        shift.push(T::of(mean));
        scale.push(T::of(if var > 1e-12 { 1.0 / var.sqrt() } else { 1.0 }));
    }
    (shift, scale)
}

/// Trains a ranker for `variant` on groups already in `layout` order.
///
/// Groups are deduplicated by `(session, ordinal)` and visited in seeded
/// shuffled passes over a canonical ordering, so the result does not depend
/// on input order or repetition. Sessions hashing into the validation fifth
/// are held out and only used for the NDCG summary.
pub fn train_ranker<T: Scalar>(
    variant: &str,
    layout: FeatureLayout,
    groups: &[RankGroup<T>],
    hp: &RankerHyperParams,
) -> Result<RankerModel<T>> {
    if groups.is_empty() {
        return Err(Error::InvalidArgument(format!("no training data for {variant}")));
    }
    if hp.batch == 0 {
        return Err(Error::InvalidArgument("batch must be positive".into()));
    }
    for g in groups {
        if g.rows.len() != g.labels.len() || g.rows.iter().any(|r| r.len() != layout.len()) {
            return Err(Error::Layout(format!(
                "impression {}:{} does not match the {} declared columns of {variant}",
                g.session,
                g.ordinal,
                layout.len()
            )));
        }
    }
    let mut unique: Vec<&RankGroup<T>> = groups.iter().collect();
    unique.sort_by(|a, b| (&a.session, a.ordinal).cmp(&(&b.session, b.ordinal)));
    unique.dedup_by(|a, b| a.session == b.session && a.ordinal == b.ordinal);
    let (val, train): (Vec<&RankGroup<T>>, Vec<&RankGroup<T>>) = unique
        .into_iter()
        .partition(|g| is_validation_session(&g.session, hp.seed));
    let train: Vec<&RankGroup<T>> = train
        .into_iter()
        .filter(|g| g.rows.len() >= 2 && g.labels.iter().any(|l| l.is_engaged()))
        .collect();
    if train.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no trainable impressions for {variant} after the validation split"
        )));
    }

    let mut model = RankerModel::new(variant, layout, hp.hidden, hp.seed);
    let (shift, scale) = fit_standardization(&train, model.layout.len());
    model.shift = shift;
    model.scale = scale;
    let standardized: Vec<Vec<Vec<T>>> = train
        .iter()
        .map(|g| {
            g.rows
                .iter()
                .map(|r| {
                    let mut x = Vec::new();
                    model.standardize(r, &mut x);
                    x
                })
                .collect()
        })
        .collect();
    let val_owned: Vec<RankGroup<T>> = val.into_iter().cloned().collect();
    let val_before = mean_group_ndcg(&model, &val_owned, 10)?;

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    let mut grad = model.scorer.zeros_like();
    let mut loss_trace = Vec::with_capacity(hp.steps);
    let lr = T::of(hp.lr);
    let inv = T::one() / T::of_usize(hp.batch);
    for step in 0..hp.steps {
        for (_, t) in grad.tensors_mut() {
            t.iter_mut().for_each(|v| *v = T::zero());
        }
        let mut batch_loss = 0.0;
        for _ in 0..hp.batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let i = order[cursor];
            cursor += 1;
            batch_loss +=
                group_loss_and_grad(&model.scorer, &standardized[i], &train[i].labels, &mut grad)?.as_f64();
        }
        let mean_loss = batch_loss / hp.batch as f64;
        let mut sq = 0.0;
        for (_, t) in grad.tensors_mut() {
            for v in t.iter_mut() {
                *v *= inv;
                sq += v.as_f64() * v.as_f64();
            }
        }
        if !mean_loss.is_finite() || !sq.is_finite() {
            return Err(Error::NonFinite { what: "ranker loss", step });
        }
        loss_trace.push(mean_loss);
        let norm = sq.sqrt();
        let factor = if norm > hp.clip { T::of(hp.clip / norm) } else { T::one() };
        for ((_, w), (_, g)) in model.scorer.tensors_mut().into_iter().zip(grad.tensors()) {
            for (wv, &gv) in w.iter_mut().zip(g) {
                *wv -= lr * factor * gv;
            }
        }
        if !model.is_finite() {
            return Err(Error::NonFinite { what: "ranker weights", step });
        }
    }
    model.summary = TrainingSummary {
        steps: hp.steps,
        loss_trace,
        val_ndcg_before: val_before,
        val_ndcg_after: mean_group_ndcg(&model, &val_owned, 10)?,
    };
    Ok(model)
}
