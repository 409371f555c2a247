use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::encoder::{cosine_grad_acc, cosine_parts, flatten};
use super::{EncoderMode, EncoderWeights};
use crate::data::EngagementLabel;
use crate::embed::Vector;
use crate::error::{Error, Result};
use crate::ltr::{lambda_loss_and_gradients, ndcg_at};
use crate::scalar::Scalar;

/// One impression prepared for encoder training: the query and click
/// embeddings (most recent first) and the embedded, labelled SERP items.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqExample<T> {
    pub query: Vector<T>,
    pub context: Vec<Vector<T>>,
    pub items: Vec<Vector<T>>,
    pub labels: Vec<EngagementLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderHyperParams {
    pub steps: usize,
    pub lr: f64,
    /// Impressions averaged per update.
    pub batch: usize,
    /// Global gradient-norm bound.
    pub clip: f64,
    /// Seeds the example order.
    pub seed: u64,
}

impl Default for EncoderHyperParams {
    fn default() -> Self {
        EncoderHyperParams {
            steps: 200,
            lr: 0.05,
            batch: 32,
            clip: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedEncoder<T> {
    pub weights: EncoderWeights<T>,
    /// Mean batch loss per step.
    pub loss_trace: Vec<f64>,
}

fn item_scores<T: Scalar>(out: &[T], items: &[Vector<T>]) -> Vec<(T, T, T)> {
    items.iter().map(|v| cosine_parts(out, v.as_slice())).collect()
}

/// LambdaRank loss of one impression scored by `cosine(item, encoder output)`,
/// accumulating its parameter gradient into `grad`.
pub fn example_loss_and_grad<T: Scalar>(
    weights: &EncoderWeights<T>,
    example: &SeqExample<T>,
    grad: &mut EncoderWeights<T>,
) -> Result<T> {
    let tokens = flatten(weights, &example.context)?;
    let query = match weights.config.mode {
        EncoderMode::Trans => None,
        EncoderMode::Perc => Some(example.query.as_slice()),
    };
    let (out, cache) = weights.forward(query, &tokens);
    let parts = item_scores(&out, &example.items);
    let scores: Vec<T> = parts.iter().map(|p| p.0).collect();
    let (loss, lambdas) = lambda_loss_and_gradients(&scores, &example.labels)?;
    let mut dout = vec![T::zero(); out.len()];
    for ((&(c, nu, nv), item), &l) in parts.iter().zip(&example.items).zip(lambdas.as_slice()) {
        if l != T::zero() {
            cosine_grad_acc(&out, item.as_slice(), c, nu, nv, l, &mut dout);
        }
    }
    weights.backward(&cache, &dout, grad);
    Ok(loss)
}

/// Mean NDCG@k over the examples that have at least one engaged item.
pub fn mean_ndcg<T: Scalar>(weights: &EncoderWeights<T>, examples: &[SeqExample<T>], k: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for ex in examples {
        let enc = weights.encode(Some(&ex.query), &ex.context)?;
        let scores: Vec<T> = item_scores(enc.vector.as_slice(), &ex.items)
            .into_iter()
            .map(|p| p.0)
            .collect();
        if let Some(v) = ndcg_at(&scores, &ex.labels, Some(k)) {
            total += v;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no example has an engaged item".into()));
    }
    Ok(total / n as f64)
}

/// Scales `grad` so its global L2 norm is at most `clip`.
fn clip_global_norm<T: Scalar>(grad: &mut EncoderWeights<T>, clip: f64) {
    let sq: f64 = grad
        .tensors()
        .iter()
        .flat_map(|(_, t)| t.iter())
        .map(|v| v.as_f64() * v.as_f64())
        .sum();
    let norm = sq.sqrt();
    if norm > clip {
        let s = T::of(clip / norm);
        for (_, t) in grad.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// SGD on the lambdaRank loss, visiting examples in seeded shuffled passes.
pub fn train_sequence_encoder<T: Scalar>(
    init: EncoderWeights<T>,
    examples: &[SeqExample<T>],
    hp: &EncoderHyperParams,
) -> Result<TrainedEncoder<T>> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("encoder training set is empty".into()));
    }
    if hp.batch == 0 {
        return Err(Error::InvalidArgument("batch must be positive".into()));
    }
    let mut weights = init;
    let mut grad = weights.zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut cursor = order.len();
    let mut loss_trace = Vec::with_capacity(hp.steps);
    let lr = T::of(hp.lr);
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
            let ex = &examples[order[cursor]];
            cursor += 1;
            batch_loss += example_loss_and_grad(&weights, ex, &mut grad)?.as_f64();
        }
        let inv = T::one() / T::of_usize(hp.batch);
        for (_, t) in grad.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= inv);
        }
        let mean_loss = batch_loss / hp.batch as f64;
        if !mean_loss.is_finite() || !grad.is_finite() {
            return Err(Error::NonFinite { what: "encoder loss", step });
        }
        loss_trace.push(mean_loss);
        if hp.lr == 0.0 {
            continue;
        }
        clip_global_norm(&mut grad, hp.clip);
        for ((_, w), (_, g)) in weights.tensors_mut().into_iter().zip(grad.tensors()) {
            for (wv, &gv) in w.iter_mut().zip(g) {
                *wv -= lr * gv;
            }
        }
        if !weights.is_finite() {
            return Err(Error::NonFinite { what: "encoder weights", step });
        }
    }
    Ok(TrainedEncoder { weights, loss_trace })
}
