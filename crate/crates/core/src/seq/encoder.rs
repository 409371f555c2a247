use super::{EncoderMode, EncoderWeights, SeqEmbedding};
use crate::data::CONTEXT_WINDOW;
use crate::embed::{cosine_similarity, dot, Vector};
use crate::error::{Error, Result};
use crate::scalar::{gelu, gelu_grad, Scalar};

fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `dlogit = p ⊙ (dp - <p, dp>)`
fn softmax_backward<T: Scalar>(p: &[T], dp: &[T], dlogit: &mut [T]) {
    let inner = dot(p, dp);
    for ((o, &pi), &gi) in dlogit.iter_mut().zip(p).zip(dp) {
        *o = pi * (gi - inner);
    }
}

pub(super) fn cosine_parts<T: Scalar>(u: &[T], v: &[T]) -> (T, T, T) {
    let tiny = T::of(1e-12);
    let nu = dot(u, u).sqrt().max(tiny);
    let nv = dot(v, v).sqrt().max(tiny);
    (dot(u, v) / (nu * nv), nu, nv)
}

/// Accumulates `dc * ∂cos(u, v)/∂u` into `du`.
pub(super) fn cosine_grad_acc<T: Scalar>(u: &[T], v: &[T], c: T, nu: T, nv: T, dc: T, du: &mut [T]) {
    let a = dc / (nu * nv);
    let b = dc * c / (nu * nu);
    for ((d, &ui), &vi) in du.iter_mut().zip(u).zip(v) {
        *d += a * vi - b * ui;
    }
}

struct LayerNormCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

fn layer_norm_forward<T: Scalar>(
    x: &[T],
    d: usize,
    gain: &[T],
    bias: &[T],
    y: &mut [T],
) -> LayerNormCache<T> {
    let n = x.len() / d;
    let eps = T::of(super::EncoderConfig::LAYER_NORM_EPS);
    let dn = T::of_usize(d);
    let mut xhat = vec![T::zero(); x.len()];
    let mut inv_std = vec![T::zero(); n];
    for t in 0..n {
        let row = &x[t * d..(t + 1) * d];
        let mu = row.iter().copied().sum::<T>() / dn;
        let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / dn;
        let inv = T::one() / (var + eps).sqrt();
        inv_std[t] = inv;
        for c in 0..d {
            let h = (row[c] - mu) * inv;
            xhat[t * d + c] = h;
            y[t * d + c] = gain[c] * h + bias[c];
        }
    }
    LayerNormCache { xhat, inv_std }
}

/// Accumulates parameter gradients and returns the input gradient.
fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    d: usize,
    gain: &[T],
    cache: &LayerNormCache<T>,
    dgain: &mut [T],
    dbias: &mut [T],
) -> Vec<T> {
    let n = dy.len() / d;
    let dn = T::of_usize(d);
    let mut dx = vec![T::zero(); dy.len()];
    let mut dxhat = vec![T::zero(); d];
    for t in 0..n {
        let xh = &cache.xhat[t * d..(t + 1) * d];
        let g = &dy[t * d..(t + 1) * d];
        for c in 0..d {
            dgain[c] += g[c] * xh[c];
            dbias[c] += g[c];
            dxhat[c] = g[c] * gain[c];
        }
        let mean_dxhat = dxhat.iter().copied().sum::<T>() / dn;
        let mean_dxhat_xhat = dot(&dxhat, xh) / dn;
        let inv = cache.inv_std[t];
        for c in 0..d {
            dx[t * d + c] = inv * (dxhat[c] - mean_dxhat - xh[c] * mean_dxhat_xhat);
        }
    }
    dx
}

pub(super) struct LayerCache<T> {
    n: usize,
    x0: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// `heads × n × n` attention probabilities.
    probs: Vec<T>,
    o: Vec<T>,
    ln1: LayerNormCache<T>,
    y1: Vec<T>,
    hpre: Vec<T>,
    hact: Vec<T>,
    ln2: LayerNormCache<T>,
}

pub(super) struct CrossCache<T> {
    query: Vec<T>,
    x: Vec<T>,
    qp: Vec<T>,
    kp: Vec<T>,
    vp: Vec<T>,
    cos: Vec<T>,
    qn: T,
    kn: Vec<T>,
    weights: Vec<T>,
}

pub(super) struct ForwardCache<T> {
    pub(super) layer: LayerCache<T>,
    pub(super) cross: Option<CrossCache<T>>,
}

impl<T: Scalar> EncoderWeights<T> {
    /// Encoder layer plus mean pooling over `n` tokens; token `t` sits in
    /// recency slot `t`.
    fn layer_forward(&self, tokens: &[T]) -> (Vec<T>, LayerCache<T>) {
        let d = self.config.dim;
        let h = self.config.heads;
        let dh = d / h;
        let f = self.config.ff_hidden;
        let n = tokens.len() / d;
        let scale = T::one() / T::of_usize(dh).sqrt();

        let mut x0 = tokens.to_vec();
        for t in 0..n {
            for (x, &p) in x0[t * d..(t + 1) * d].iter_mut().zip(self.pos.row(t)) {
                *x += p;
            }
        }
        let mut q = vec![T::zero(); n * d];
        let mut k = vec![T::zero(); n * d];
        let mut v = vec![T::zero(); n * d];
        for t in 0..n {
            let x = &x0[t * d..(t + 1) * d];
            self.wq.mv(x, &mut q[t * d..(t + 1) * d]);
            self.wk.mv(x, &mut k[t * d..(t + 1) * d]);
            self.wv.mv(x, &mut v[t * d..(t + 1) * d]);
        }
        let mut probs = vec![T::zero(); h * n * n];
        let mut o = vec![T::zero(); n * d];
        for head in 0..h {
            let cols = head * dh..(head + 1) * dh;
            for t in 0..n {
                let row = &mut probs[(head * n + t) * n..(head * n + t + 1) * n];
                for (u, s) in row.iter_mut().enumerate() {
                    *s = dot(&q[t * d + cols.start..t * d + cols.end], &k[u * d + cols.start..u * d + cols.end])
                        * scale;
                }
                softmax_in_place(row);
                for u in 0..n {
                    let p = row[u];
                    for c in cols.clone() {
                        o[t * d + c] += p * v[u * d + c];
                    }
                }
            }
        }
        let mut r1 = x0.clone();
        let mut tmp = vec![T::zero(); d];
        for t in 0..n {
            self.wo.mv(&o[t * d..(t + 1) * d], &mut tmp);
            for (r, &a) in r1[t * d..(t + 1) * d].iter_mut().zip(&tmp) {
                *r += a;
            }
        }
        let mut y1 = vec![T::zero(); n * d];
        let ln1 = layer_norm_forward(&r1, d, &self.ln1_gain, &self.ln1_bias, &mut y1);

        let mut hpre = vec![T::zero(); n * f];
        let mut hact = vec![T::zero(); n * f];
        let mut r2 = y1.clone();
        for t in 0..n {
            let hp = &mut hpre[t * f..(t + 1) * f];
            self.ff_w1.mv(&y1[t * d..(t + 1) * d], hp);
            for (x, &b) in hp.iter_mut().zip(&self.ff_b1) {
                *x += b;
            }
            let ha = &mut hact[t * f..(t + 1) * f];
            for (a, &x) in ha.iter_mut().zip(hp.iter()) {
                *a = gelu(x);
            }
            self.ff_w2.mv(ha, &mut tmp);
            for ((r, &y), &b) in r2[t * d..(t + 1) * d].iter_mut().zip(&tmp).zip(&self.ff_b2) {
                *r += y + b;
            }
        }
        let mut y2 = vec![T::zero(); n * d];
        let ln2 = layer_norm_forward(&r2, d, &self.ln2_gain, &self.ln2_bias, &mut y2);

        let inv_n = T::one() / T::of_usize(n);
        let mut out = vec![T::zero(); d];
        for t in 0..n {
            for (o, &y) in out.iter_mut().zip(&y2[t * d..(t + 1) * d]) {
                *o += y * inv_n;
            }
        }
        let cache = LayerCache {
            n,
            x0,
            q,
            k,
            v,
            probs,
            o,
            ln1,
            y1,
            hpre,
            hact,
            ln2,
        };
        (out, cache)
    }

    /// Backpropagates `dout` through pooling and the layer; returns the
    /// gradient with respect to the input tokens.
    fn layer_backward(&self, cache: &LayerCache<T>, dout: &[T], g: &mut EncoderWeights<T>) -> Vec<T> {
        let d = self.config.dim;
        let h = self.config.heads;
        let dh = d / h;
        let f = self.config.ff_hidden;
        let n = cache.n;
        let scale = T::one() / T::of_usize(dh).sqrt();
        let inv_n = T::one() / T::of_usize(n);

        let mut dy2 = vec![T::zero(); n * d];
        for t in 0..n {
            for (o, &g) in dy2[t * d..(t + 1) * d].iter_mut().zip(dout) {
                *o = g * inv_n;
            }
        }
        let dr2 = layer_norm_backward(&dy2, d, &self.ln2_gain, &cache.ln2, &mut g.ln2_gain, &mut g.ln2_bias);

        let mut dy1 = dr2.clone();
        let mut dhact = vec![T::zero(); f];
        for t in 0..n {
            let dffo = &dr2[t * d..(t + 1) * d];
            let ha = &cache.hact[t * f..(t + 1) * f];
            g.ff_w2.outer_acc(dffo, ha);
            for (b, &x) in g.ff_b2.iter_mut().zip(dffo) {
                *b += x;
            }
            dhact.iter_mut().for_each(|v| *v = T::zero());
            self.ff_w2.mtv_acc(dffo, &mut dhact);
            let hp = &cache.hpre[t * f..(t + 1) * f];
            for (dv, &x) in dhact.iter_mut().zip(hp) {
                *dv *= gelu_grad(x);
            }
            g.ff_w1.outer_acc(&dhact, &cache.y1[t * d..(t + 1) * d]);
            for (b, &x) in g.ff_b1.iter_mut().zip(&dhact) {
                *b += x;
            }
            self.ff_w1.mtv_acc(&dhact, &mut dy1[t * d..(t + 1) * d]);
        }
        let dr1 = layer_norm_backward(&dy1, d, &self.ln1_gain, &cache.ln1, &mut g.ln1_gain, &mut g.ln1_bias);

        let mut dx0 = dr1.clone();
        let mut d_o = vec![T::zero(); n * d];
        for t in 0..n {
            let da = &dr1[t * d..(t + 1) * d];
            g.wo.outer_acc(da, &cache.o[t * d..(t + 1) * d]);
            self.wo.mtv_acc(da, &mut d_o[t * d..(t + 1) * d]);
        }
        let mut dq = vec![T::zero(); n * d];
        let mut dk = vec![T::zero(); n * d];
        let mut dv = vec![T::zero(); n * d];
        let mut dp = vec![T::zero(); n];
        let mut ds = vec![T::zero(); n];
        for head in 0..h {
            let cols = head * dh..(head + 1) * dh;
            for t in 0..n {
                let p = &cache.probs[(head * n + t) * n..(head * n + t + 1) * n];
                let dot_row = &d_o[t * d + cols.start..t * d + cols.end];
                for u in 0..n {
                    dp[u] = dot(dot_row, &cache.v[u * d + cols.start..u * d + cols.end]);
                    for (c, &go) in cols.clone().zip(dot_row) {
                        dv[u * d + c] += p[u] * go;
                    }
                }
                softmax_backward(p, &dp, &mut ds);
                for u in 0..n {
                    let s = ds[u] * scale;
                    if s == T::zero() {
                        continue;
                    }
                    for c in cols.clone() {
                        dq[t * d + c] += s * cache.k[u * d + c];
                        dk[u * d + c] += s * cache.q[t * d + c];
                    }
                }
            }
        }
        for t in 0..n {
            let x = &cache.x0[t * d..(t + 1) * d];
            let (dqt, dkt, dvt) = (&dq[t * d..(t + 1) * d], &dk[t * d..(t + 1) * d], &dv[t * d..(t + 1) * d]);
            g.wq.outer_acc(dqt, x);
            g.wk.outer_acc(dkt, x);
            g.wv.outer_acc(dvt, x);
            let dxt = &mut dx0[t * d..(t + 1) * d];
            self.wq.mtv_acc(dqt, dxt);
            self.wk.mtv_acc(dkt, dxt);
            self.wv.mtv_acc(dvt, dxt);
        }
        for t in 0..n {
            for (p, &x) in g.pos.row_mut(t).iter_mut().zip(&dx0[t * d..(t + 1) * d]) {
                *p += x;
            }
        }
        dx0
    }

    fn cross_forward(&self, query: &[T], x: &[T]) -> (Vec<T>, CrossCache<T>) {
        let cross = self.cross.as_ref().expect("perc weights carry cross projections");
        let d = self.config.dim;
        let n = x.len() / d;
        let inv_tau = T::one() / T::of(self.config.tau);
        let qp = cross.wq.mv_new(query);
        let mut kp = vec![T::zero(); n * d];
        let mut vp = vec![T::zero(); n * d];
        let mut cos = vec![T::zero(); n];
        let mut kn = vec![T::zero(); n];
        let mut qn = T::one();
        for t in 0..n {
            cross.wk.mv(&x[t * d..(t + 1) * d], &mut kp[t * d..(t + 1) * d]);
            cross.wv.mv(&x[t * d..(t + 1) * d], &mut vp[t * d..(t + 1) * d]);
            let (c, nq, nk) = cosine_parts(&qp, &kp[t * d..(t + 1) * d]);
            cos[t] = c;
            qn = nq;
            kn[t] = nk;
        }
        let mut weights: Vec<T> = cos.iter().map(|&c| c * inv_tau).collect();
        softmax_in_place(&mut weights);
        let mut z = vec![T::zero(); n * d];
        for t in 0..n {
            for c in 0..d {
                z[t * d + c] = weights[t] * vp[t * d + c];
            }
        }
        let cache = CrossCache {
            query: query.to_vec(),
            x: x.to_vec(),
            qp,
            kp,
            vp,
            cos,
            qn,
            kn,
            weights,
        };
        (z, cache)
    }

    fn cross_backward(&self, cache: &CrossCache<T>, dz: &[T], g: &mut EncoderWeights<T>) {
        let cross = g.cross.as_mut().expect("perc gradients carry cross projections");
        let d = self.config.dim;
        let n = cache.weights.len();
        let inv_tau = T::one() / T::of(self.config.tau);
        let mut dw = vec![T::zero(); n];
        let mut dvp = vec![T::zero(); d];
        for t in 0..n {
            let dzt = &dz[t * d..(t + 1) * d];
            dw[t] = dot(dzt, &cache.vp[t * d..(t + 1) * d]);
            for (o, &x) in dvp.iter_mut().zip(dzt) {
                *o = cache.weights[t] * x;
            }
            cross.wv.outer_acc(&dvp, &cache.x[t * d..(t + 1) * d]);
        }
        let mut dlogit = vec![T::zero(); n];
        softmax_backward(&cache.weights, &dw, &mut dlogit);
        let mut dqp = vec![T::zero(); d];
        let mut dkp = vec![T::zero(); d];
        for t in 0..n {
            let dc = dlogit[t] * inv_tau;
            let kpt = &cache.kp[t * d..(t + 1) * d];
            cosine_grad_acc(&cache.qp, kpt, cache.cos[t], cache.qn, cache.kn[t], dc, &mut dqp);
            dkp.iter_mut().for_each(|v| *v = T::zero());
            cosine_grad_acc(kpt, &cache.qp, cache.cos[t], cache.kn[t], cache.qn, dc, &mut dkp);
            cross.wk.outer_acc(&dkp, &cache.x[t * d..(t + 1) * d]);
        }
        cross.wq.outer_acc(&dqp, &cache.query);
    }

    pub(super) fn forward(&self, query: Option<&[T]>, tokens: &[T]) -> (Vec<T>, ForwardCache<T>) {
        match (self.config.mode, query) {
            (EncoderMode::Perc, Some(q)) => {
                let (z, cross) = self.cross_forward(q, tokens);
                let (out, layer) = self.layer_forward(&z);
                (out, ForwardCache { layer, cross: Some(cross) })
            }
            (EncoderMode::Perc, None) => panic!("perc forward needs a query"),
            (EncoderMode::Trans, _) => {
                let (out, layer) = self.layer_forward(tokens);
                (out, ForwardCache { layer, cross: None })
            }
        }
    }

    pub(super) fn backward(&self, cache: &ForwardCache<T>, dout: &[T], g: &mut EncoderWeights<T>) {
        let dtokens = self.layer_backward(&cache.layer, dout, g);
        if let Some(cross) = &cache.cross {
            self.cross_backward(cross, &dtokens, g);
        }
    }

    /// Attention probabilities of one forward pass.
    pub fn trace(&self, query: Option<&Vector<T>>, context: &[Vector<T>]) -> Result<EncodeTrace<T>> {
        let tokens = flatten(self, context)?;
        if self.config.mode == EncoderMode::Perc && query.is_none() {
            return Err(Error::InvalidArgument("perc encoder needs a query embedding".into()));
        }
        let (_, cache) = self.forward(query.map(|q| q.as_slice()), &tokens);
        let n = context.len();
        let self_attention = cache
            .layer
            .probs
            .chunks(n)
            .map(<[T]>::to_vec)
            .collect();
        Ok(EncodeTrace {
            self_attention,
            cross_attention: cache.cross.map(|c| c.weights),
        })
    }
}

/// Attention rows recorded during one encode.
#[derive(Debug, Clone)]
pub struct EncodeTrace<T> {
    /// One row per (head, query token), each a distribution over tokens.
    pub self_attention: Vec<Vec<T>>,
    /// Per-click cross-attention weights (perc only).
    pub cross_attention: Option<Vec<T>>,
}

pub(super) fn flatten<T: Scalar>(w: &EncoderWeights<T>, context: &[Vector<T>]) -> Result<Vec<T>> {
    if context.is_empty() {
        return Err(Error::InvalidArgument("sequence encoders need a non-empty click context".into()));
    }
    if context.len() > CONTEXT_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "context longer than {CONTEXT_WINDOW} clicks"
        )));
    }
    let d = w.config.dim;
    let mut tokens = Vec::with_capacity(context.len() * d);
    for v in context {
        if v.dim() != d {
            return Err(Error::DimMismatch {
                expected: d,
                found: v.dim(),
            });
        }
        tokens.extend_from_slice(v.as_slice());
    }
    Ok(tokens)
}

/// Self-attention encoding of the click context (most recent first).
pub fn transformer_encode<T: Scalar>(
    weights: &EncoderWeights<T>,
    context: &[Vector<T>],
) -> Result<SeqEmbedding<T>> {
    let tokens = flatten(weights, context)?;
    let (out, _) = weights.layer_forward(&tokens);
    Ok(SeqEmbedding {
        vector: Vector::new(out)?,
        source: EncoderMode::Trans,
    })
}

/// Query-conditioned cross-attention reweighting followed by the encoder layer.
pub fn perceiver_encode<T: Scalar>(
    weights: &EncoderWeights<T>,
    query: &Vector<T>,
    context: &[Vector<T>],
) -> Result<SeqEmbedding<T>> {
    if weights.cross.is_none() {
        return Err(Error::InvalidArgument("weights have no cross-attention projections".into()));
    }
    if query.dim() != weights.config.dim {
        return Err(Error::DimMismatch {
            expected: weights.config.dim,
            found: query.dim(),
        });
    }
    let tokens = flatten(weights, context)?;
    let (z, _) = weights.cross_forward(query.as_slice(), &tokens);
    let (out, _) = weights.layer_forward(&z);
    Ok(SeqEmbedding {
        vector: Vector::new(out)?,
        source: EncoderMode::Perc,
    })
}

/// Cosine between an item embedding and the encoded context; `None` when
/// there was no context to encode.
pub fn seq_context_feature<T: Scalar>(
    item: &Vector<T>,
    seq: Option<&SeqEmbedding<T>>,
) -> Result<Option<T>> {
    seq.map(|s| cosine_similarity(item, &s.vector)).transpose()
}

#[cfg(test)]
mod tests {
    use super::super::{EncoderConfig, Mat};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vector<f64> {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        Vector::new(v.into_iter().map(|x| x / n).collect()).unwrap()
    }

    #[test]
    fn gelu_derivative_matches_difference() {
        for x in [-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((gelu_grad(x) - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn empty_context_is_rejected() {
        let w = EncoderWeights::<f64>::init(EncoderConfig::new(EncoderMode::Trans, 8, 1)).unwrap();
        assert!(transformer_encode(&w, &[]).is_err());
        let p = EncoderWeights::<f64>::init(EncoderConfig::new(EncoderMode::Perc, 8, 1)).unwrap();
        let q = Vector::new(vec![1.0; 8]).unwrap();
        assert!(perceiver_encode(&p, &q, &[]).is_err());
    }

    /// Independent scalar-loop forward pass at dim 4, one head.
    fn hand_forward(xs: &[[f64; 4]], pos: &[[f64; 4]]) -> [f64; 4] {
        let n = xs.len();
        let x0: Vec<[f64; 4]> = (0..n)
            .map(|t| [0, 1, 2, 3].map(|c| xs[t][c] + pos[t][c]))
            .collect();
        let ln = |r: [f64; 4]| {
            let mu = r.iter().sum::<f64>() / 4.0;
            let var = r.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 4.0;
            r.map(|v| (v - mu) / (var + 1e-5).sqrt())
        };
        let mut out = [0.0; 4];
        for t in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|u| (0..4).map(|c| x0[t][c] * x0[u][c]).sum::<f64>() / 2.0)
                .collect();
            let m = scores.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            let mut r1 = x0[t];
            for u in 0..n {
                for c in 0..4 {
                    r1[c] += e[u] / z * x0[u][c];
                }
            }
            // zeroed feed-forward output leaves the second residual equal to y1
            let y2 = ln(ln(r1));
            for c in 0..4 {
                out[c] += y2[c] / n as f64;
            }
        }
        out
    }

    #[test]
    fn identity_projections_match_hand_computation() {
        let mut c = EncoderConfig::new(EncoderMode::Trans, 4, 0);
        c.heads = 1;
        let mut w = EncoderWeights::<f64>::init(c).unwrap();
        w.wq = Mat::identity(4);
        w.wk = Mat::identity(4);
        w.wv = Mat::identity(4);
        w.wo = Mat::identity(4);
        w.ff_w2 = Mat::zeros(4, 8);
        w.ff_b2 = vec![0.0; 4];
        let xs = [[0.5, -0.1, 0.3, 0.9], [0.2, 0.2, -0.7, 0.1], [-0.4, 0.6, 0.0, 0.3]];
        let mut pos = [[0.0; 4]; 5];
        for (t, p) in pos.iter_mut().enumerate() {
            for (c, v) in p.iter_mut().enumerate() {
                *v = w.pos.row(t)[c];
            }
        }
        let expected = hand_forward(&xs, &pos);
        let ctx: Vec<Vector<f64>> = xs.iter().map(|x| Vector::new(x.to_vec()).unwrap()).collect();
        let got = transformer_encode(&w, &ctx).unwrap();
        for (g, e) in got.vector.as_slice().iter().zip(expected) {
            assert!((g - e).abs() < 1e-6, "{g} vs {e}");
        }
    }

    #[test]
    fn attention_rows_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for mode in [EncoderMode::Trans, EncoderMode::Perc] {
            let w = EncoderWeights::<f64>::init(EncoderConfig::new(mode, 16, 5)).unwrap();
            let q = random_unit(&mut rng, 16);
            let ctx: Vec<_> = (0..4).map(|_| random_unit(&mut rng, 16)).collect();
            let tr = w.trace(Some(&q), &ctx).unwrap();
            assert_eq!(tr.self_attention.len(), 4 * 4);
            for row in &tr.self_attention {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            if let Some(cw) = tr.cross_attention {
                assert!((cw.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_click_gets_all_cross_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = EncoderWeights::<f64>::init(EncoderConfig::new(EncoderMode::Perc, 8, 5)).unwrap();
        let q = random_unit(&mut rng, 8);
        let one = vec![random_unit(&mut rng, 8)];
        let tr = w.trace(Some(&q), &one).unwrap();
        assert_eq!(tr.cross_attention.unwrap(), vec![1.0]);
        let a = perceiver_encode(&w, &q, &one).unwrap();
        let b = perceiver_encode(&w, &q, &one).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn query_matching_click_dominates_cross_attention() {
        let d = 5;
        let mut c = EncoderConfig::new(EncoderMode::Perc, d, 5);
        c.heads = 1;
        let mut w = EncoderWeights::<f64>::init(c).unwrap();
        let cross = w.cross.as_mut().unwrap();
        cross.wq = Mat::identity(d);
        cross.wk = Mat::identity(d);
        cross.wv = Mat::identity(d);
        let basis = |i: usize| {
            let mut v = vec![0.0; d];
            v[i] = 1.0;
            Vector::new(v).unwrap()
        };
        let q = basis(2);
        let ctx: Vec<_> = (0..5).map(basis).collect();
        let weights = w.trace(Some(&q), &ctx).unwrap().cross_attention.unwrap();
        // closed form: softmax over cosines {1,0,0,0,0} / tau
        let e1 = (1.0f64 / 0.1).exp();
        let expected_top = e1 / (e1 + 4.0);
        let expected_rest = 1.0 / (e1 + 4.0);
        for (t, &a) in weights.iter().enumerate() {
            let want = if t == 2 { expected_top } else { expected_rest };
            assert!((a - want).abs() < 1e-12, "{t}: {a} vs {want}");
        }
    }

    #[test]
    fn seq_feature_handles_missing_context() {
        let v = Vector::new(vec![0.3, 0.4]).unwrap();
        assert_eq!(seq_context_feature::<f64>(&v, None).unwrap(), None);
        let s = SeqEmbedding {
            vector: v.clone(),
            source: EncoderMode::Trans,
        };
        assert!((seq_context_feature(&v, Some(&s)).unwrap().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_precision_forward_is_finite() {
        let w = EncoderWeights::<f32>::init(EncoderConfig::new(EncoderMode::Perc, 8, 5)).unwrap();
        let q: Vector<f32> = Vector::new(vec![0.5; 8]).unwrap();
        let ctx = vec![Vector::new(vec![0.1f32, -0.2, 0.3, 0.0, 0.5, 0.1, -0.1, 0.2]).unwrap(); 3];
        let out = perceiver_encode(&w, &q, &ctx).unwrap();
        assert!(out.vector.as_slice().iter().all(|v| v.is_finite()));
    }
}
