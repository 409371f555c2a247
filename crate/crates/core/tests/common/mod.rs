//! Helpers shared by the integration test targets.
//!
//! The finite-difference checker compares analytic lambdaRank gradients with
//! central differences. The loss is `sum |dNDCG_ij| softplus(-(s_i - s_j))`
//! with the metric swap weights read off the current ranking, so it is smooth
//! only while the ranking does not change. Coordinates whose perturbation
//! reorders the scores are skipped and counted.

#![allow(dead_code)]

use ctxrank::data::EngagementLabel;
use ctxrank::embed::Vector;
use ctxrank::ltr::{group_loss_and_grad, score_order, FeatureLayout, Scorer};
use ctxrank::seq::{example_loss_and_grad, EncoderConfig, EncoderMode, EncoderWeights, SeqExample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct FdStats {
    pub checked: usize,
    pub skipped: usize,
}

pub const STEP: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-3;
pub const ABS_FLOOR: f64 = 1e-7;

fn labels10() -> Vec<EngagementLabel> {
    use EngagementLabel::*;
    vec![None, Click, None, Sale, None, None, Click, None, Sale, None]
}

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= REL_TOL * analytic.abs().max(numeric.abs()) + ABS_FLOOR
}

/// Walks every parameter of `model`, comparing `grad` to central differences.
/// `eval` returns the loss and the score vector at the current parameters.
fn check<M: Clone>(
    model: &M,
    grad: &[(&'static str, Vec<f64>)],
    params: impl Fn(&mut M) -> Vec<&mut [f64]>,
    eval: impl Fn(&M) -> (f64, Vec<f64>),
) -> Result<FdStats, String> {
    let live = grad.iter().flat_map(|(_, g)| g).filter(|v| v.abs() > 1e-6).count();
    if live * 2 <= grad.iter().map(|(_, g)| g.len()).sum::<usize>() {
        return Err("gradient mostly zero".into());
    }
    let (_, base_scores) = eval(model);
    let base_order = score_order(&base_scores);
    let mut checked = 0usize;
    let mut skipped = 0usize;
    let mut failures = Vec::new();
    for (t, (name, g)) in grad.iter().enumerate() {
        for (i, &analytic) in g.iter().enumerate() {
            let mut up = model.clone();
            params(&mut up)[t][i] += STEP;
            let mut dn = model.clone();
            params(&mut dn)[t][i] -= STEP;
            let (lu, su) = eval(&up);
            let (ld, sd) = eval(&dn);
            if score_order(&su) != base_order || score_order(&sd) != base_order {
                skipped += 1;
                continue;
            }
            let numeric = (lu - ld) / (2.0 * STEP);
            checked += 1;
            if !close(analytic, numeric) {
                failures.push(format!("{name}[{i}]: analytic {analytic:e} numeric {numeric:e}"));
            }
        }
    }
    if !failures.is_empty() {
        return Err(format!("{} of {checked} mismatched:\n{}", failures.len(), failures.join("\n")));
    }
    if checked == 0 || skipped * 100 > checked {
        return Err(format!("{skipped} reorderings in {checked} coordinates"));
    }
    Ok(FdStats { checked, skipped })
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

pub fn check_scorer(hidden: Option<usize>, seed: u64) -> Result<FdStats, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = FeatureLayout::new((0..8).map(|i| format!("f{i}")).collect()).unwrap();
    let mut scorer = Scorer::<f64>::init(&layout, hidden, seed);
    // move off the symmetric init so every parameter carries gradient
    for (_, t) in scorer.tensors_mut() {
        t.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
    }
    let rows = random_rows(&mut rng, 10, 8);
    let labels = labels10();
    let mut grad = scorer.zeros_like();
    group_loss_and_grad(&scorer, &rows, &labels, &mut grad).unwrap();
    let grads: Vec<_> = grad.tensors().into_iter().map(|(n, t)| (n, t.to_vec())).collect();
    check(
        &scorer,
        &grads,
        |s| s.tensors_mut().into_iter().map(|(_, t)| t).collect(),
        |s| {
            let mut scratch = s.zeros_like();
            let loss = group_loss_and_grad(s, &rows, &labels, &mut scratch).unwrap();
            (loss, rows.iter().map(|x| s.forward(x)).collect())
        },
    )
}


fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vector<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Vector::new(v.into_iter().map(|x| x / n).collect()).unwrap()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Dim-8 encoder on a 5-click context scoring a 10-item impression.
pub fn check_encoder(mode: EncoderMode, seed: u64) -> Result<FdStats, String> {
    let d = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe7c0);
    let weights = EncoderWeights::<f64>::init(EncoderConfig::new(mode, d, seed)).unwrap();
    let example = SeqExample {
        query: unit(&mut rng, d),
        context: (0..5).map(|_| unit(&mut rng, d)).collect(),
        items: (0..10).map(|_| unit(&mut rng, d)).collect(),
        labels: labels10(),
    };
    let mut grad = weights.zeros_like();
    example_loss_and_grad(&weights, &example, &mut grad).unwrap();
    let grads: Vec<_> = grad.tensors().into_iter().map(|(n, t)| (n, t.to_vec())).collect();
    if grads.iter().map(|(_, t)| t.len()).sum::<usize>() != weights.param_count() {
        return Err("gradient does not cover every parameter".into());
    }
    check(
        &weights,
        &grads,
        |w| w.tensors_mut().into_iter().map(|(_, t)| t).collect(),
        |w| {
            let mut scratch = w.zeros_like();
            let loss = example_loss_and_grad(w, &example, &mut scratch).unwrap();
            let out = w.encode(Some(&example.query), &example.context).unwrap();
            let scores = example
                .items
                .iter()
                .map(|v| cosine(out.vector.as_slice(), v.as_slice()))
                .collect();
            (loss, scores)
        },
    )
}
