//! Attention-based context encoders over the last clicks of a session.
//!
//! Two modes share one encoder layer (learned recency-slot positions,
//! multi-head self-attention, residual + layer norm, GELU feed-forward,
//! residual + layer norm, mean pooling):
//!
//! * `trans` feeds the click embeddings straight into the layer.
//! * `perc` first reweights the clicks by a softmax over cosine scores
//!   between the projected query and projected clicks (temperature `tau`),
//!   producing one value-projected token per click, then runs the layer.
//!
//! Both are trained with lambdaRank on `cosine(item, encoder output)` scores.

mod encoder;
mod mat;
mod train;

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use encoder::{perceiver_encode, seq_context_feature, transformer_encode, EncodeTrace};
pub use mat::Mat;
pub use train::{
    example_loss_and_grad, mean_ndcg, train_sequence_encoder, EncoderHyperParams, SeqExample,
    TrainedEncoder,
};

use crate::data::CONTEXT_WINDOW;
use crate::embed::Vector;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncoderMode {
    Trans,
    Perc,
}

impl EncoderMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EncoderMode::Trans => "trans",
            EncoderMode::Perc => "perc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "trans" => Some(EncoderMode::Trans),
            "perc" => Some(EncoderMode::Perc),
            _ => None,
        }
    }
}

/// Architecture of one encoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub mode: EncoderMode,
    pub dim: usize,
    pub heads: usize,
    pub ff_hidden: usize,
    /// Cross-attention softmax temperature (perc only).
    pub tau: f64,
    pub seed: u64,
}

impl EncoderConfig {
    pub const LAYERS: usize = 1;
    pub const DEFAULT_TAU: f64 = 0.1;
    pub const LAYER_NORM_EPS: f64 = 1e-5;

    pub fn new(mode: EncoderMode, dim: usize, seed: u64) -> Self {
        EncoderConfig {
            mode,
            dim,
            heads: 4,
            ff_hidden: 2 * dim,
            tau: Self::DEFAULT_TAU,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            )));
        }
        if self.ff_hidden == 0 {
            return Err(Error::InvalidArgument("ff_hidden must be positive".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidArgument("tau must be positive".into()));
        }
        Ok(())
    }
}

/// Where the weights came from; checked before they are applied to ranker data.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EncoderProvenance {
    /// Latest session epoch seen in training.
    pub max_train_epoch: Option<u32>,
    pub config_hash: Option<String>,
}

/// Query/key/value projections of the perc cross-attention stage.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossProjections<T> {
    pub wq: Mat<T>,
    pub wk: Mat<T>,
    pub wv: Mat<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights<T> {
    pub config: EncoderConfig,
    pub provenance: EncoderProvenance,
    /// One learned vector per recency slot, slot 0 = most recent click.
    pub pos: Mat<T>,
    pub wq: Mat<T>,
    pub wk: Mat<T>,
    pub wv: Mat<T>,
    pub wo: Mat<T>,
    pub ln1_gain: Vec<T>,
    pub ln1_bias: Vec<T>,
    pub ff_w1: Mat<T>,
    pub ff_b1: Vec<T>,
    pub ff_w2: Mat<T>,
    pub ff_b2: Vec<T>,
    pub ln2_gain: Vec<T>,
    pub ln2_bias: Vec<T>,
    pub cross: Option<CrossProjections<T>>,
}

impl<T: Scalar> EncoderWeights<T> {
    /// Seeded initialization: Glorot projections, small positions, unit
    /// layer-norm gains, zero biases, near-identity cross projections.
    pub fn init(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let f = config.ff_hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let pos = Mat::uniform(CONTEXT_WINDOW, d, 0.05, &mut rng);
        let wq = Mat::glorot(d, d, &mut rng);
        let wk = Mat::glorot(d, d, &mut rng);
        let wv = Mat::glorot(d, d, &mut rng);
        let wo = Mat::glorot(d, d, &mut rng);
        let ff_w1 = Mat::glorot(f, d, &mut rng);
        let ff_w2 = Mat::glorot(d, f, &mut rng);
        let cross = match config.mode {
            EncoderMode::Trans => None,
            EncoderMode::Perc => {
                let mut near_identity = || {
                    let mut m = Mat::<T>::uniform(d, d, 0.1 / (d as f64).sqrt(), &mut rng);
                    for i in 0..d {
                        m.data[i * d + i] += T::one();
                    }
                    m
                };
                Some(CrossProjections {
                    wq: near_identity(),
                    wk: near_identity(),
                    wv: near_identity(),
                })
            }
        };
        Ok(EncoderWeights {
            config,
            provenance: EncoderProvenance::default(),
            pos,
            wq,
            wk,
            wv,
            wo,
            ln1_gain: vec![T::one(); d],
            ln1_bias: vec![T::zero(); d],
            ff_w1,
            ff_b1: vec![T::zero(); f],
            ff_w2,
            ff_b2: vec![T::zero(); d],
            ln2_gain: vec![T::one(); d],
            ln2_bias: vec![T::zero(); d],
            cross,
        })
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.iter_mut().for_each(|v| *v = T::zero());
        }
        z
    }

    /// Every parameter tensor in serialization order.
    pub fn tensors(&self) -> Vec<(&'static str, &[T])> {
        let mut out: Vec<(&'static str, &[T])> = vec![
            ("pos", &self.pos.data),
            ("attn.wq", &self.wq.data),
            ("attn.wk", &self.wk.data),
            ("attn.wv", &self.wv.data),
            ("attn.wo", &self.wo.data),
            ("ln1.gain", &self.ln1_gain),
            ("ln1.bias", &self.ln1_bias),
            ("ff.w1", &self.ff_w1.data),
            ("ff.b1", &self.ff_b1),
            ("ff.w2", &self.ff_w2.data),
            ("ff.b2", &self.ff_b2),
            ("ln2.gain", &self.ln2_gain),
            ("ln2.bias", &self.ln2_bias),
        ];
        if let Some(c) = &self.cross {
            out.push(("cross.wq", &c.wq.data));
            out.push(("cross.wk", &c.wk.data));
            out.push(("cross.wv", &c.wv.data));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [T])> {
        let mut out: Vec<(&'static str, &mut [T])> = vec![
            ("pos", &mut self.pos.data),
            ("attn.wq", &mut self.wq.data),
            ("attn.wk", &mut self.wk.data),
            ("attn.wv", &mut self.wv.data),
            ("attn.wo", &mut self.wo.data),
            ("ln1.gain", &mut self.ln1_gain),
            ("ln1.bias", &mut self.ln1_bias),
            ("ff.w1", &mut self.ff_w1.data),
            ("ff.b1", &mut self.ff_b1),
            ("ff.w2", &mut self.ff_w2.data),
            ("ff.b2", &mut self.ff_b2),
            ("ln2.gain", &mut self.ln2_gain),
            ("ln2.bias", &mut self.ln2_bias),
        ];
        if let Some(c) = &mut self.cross {
            out.push(("cross.wq", &mut c.wq.data));
            out.push(("cross.wk", &mut c.wk.data));
            out.push(("cross.wv", &mut c.wv.data));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Mode-dispatching encode; `query` is required for perc and ignored for trans.
    pub fn encode(&self, query: Option<&Vector<T>>, context: &[Vector<T>]) -> Result<SeqEmbedding<T>> {
        match self.config.mode {
            EncoderMode::Trans => transformer_encode(self, context),
            EncoderMode::Perc => {
                let q = query.ok_or_else(|| {
                    Error::InvalidArgument("perc encoder needs a query embedding".into())
                })?;
                perceiver_encode(self, q, context)
            }
        }
    }

    /// Text serialization: `key=value` header lines, then one
    /// `name<TAB>count<TAB>v1,v2,...` line per tensor in [`Self::tensors`] order.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = String::from("# ctxrank encoder weights\n");
        writeln!(out, "mode={}", c.mode.as_str()).unwrap();
        writeln!(out, "dim={}", c.dim).unwrap();
        writeln!(out, "heads={}", c.heads).unwrap();
        writeln!(out, "layers={}", EncoderConfig::LAYERS).unwrap();
        writeln!(out, "ff_hidden={}", c.ff_hidden).unwrap();
        writeln!(out, "tau={}", c.tau).unwrap();
        writeln!(out, "seed={}", c.seed).unwrap();
        if let Some(e) = self.provenance.max_train_epoch {
            writeln!(out, "max_train_epoch={e}").unwrap();
        }
        if let Some(h) = &self.provenance.config_hash {
            writeln!(out, "config_hash={h}").unwrap();
        }
        for (name, values) in self.tensors() {
            write!(out, "{name}\t{}\t", values.len()).unwrap();
            write_values(&mut out, values);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut header = std::collections::HashMap::new();
        let mut arrays: Vec<(usize, String, Vec<T>)> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((name, rest)) = line.split_once('\t') {
                let (count, values) = rest
                    .split_once('\t')
                    .ok_or_else(|| Error::parse(line_no, "tensor line needs name, count, values"))?;
                let count: usize = count
                    .parse()
                    .map_err(|_| Error::parse(line_no, "bad tensor length"))?;
                let values = parse_values::<T>(values, line_no)?;
                if values.len() != count {
                    return Err(Error::parse(line_no, format!("{name}: expected {count} values")));
                }
                arrays.push((line_no, name.to_owned(), values));
            } else if let Some((k, v)) = line.split_once('=') {
                header.insert(k.to_owned(), v.to_owned());
            } else {
                return Err(Error::parse(line_no, "expected key=value or tensor line"));
            }
        }
        let get = |k: &str| {
            header
                .get(k)
                .ok_or_else(|| Error::parse(0, format!("missing header field {k}")))
        };
        let num = |k: &str| -> Result<u64> {
            get(k)?
                .parse()
                .map_err(|_| Error::parse(0, format!("bad header field {k}")))
        };
        let mode = EncoderMode::parse(get("mode")?)
            .ok_or_else(|| Error::parse(0, "unknown encoder mode"))?;
        if num("layers")? as usize != EncoderConfig::LAYERS {
            return Err(Error::parse(0, "only single-layer encoders are supported"));
        }
        let config = EncoderConfig {
            mode,
            dim: num("dim")? as usize,
            heads: num("heads")? as usize,
            ff_hidden: num("ff_hidden")? as usize,
            tau: get("tau")?
                .parse()
                .map_err(|_| Error::parse(0, "bad header field tau"))?,
            seed: num("seed")?,
        };
        let mut weights = EncoderWeights::init(config)?;
        weights.provenance = EncoderProvenance {
            max_train_epoch: header
                .get("max_train_epoch")
                .map(|v| v.parse().map_err(|_| Error::parse(0, "bad max_train_epoch")))
                .transpose()?,
            config_hash: header.get("config_hash").cloned(),
        };
        let mut tensors = weights.tensors_mut();
        if tensors.len() != arrays.len() {
            return Err(Error::parse(
                0,
                format!("expected {} tensors, found {}", tensors.len(), arrays.len()),
            ));
        }
        for ((name, slot), (line_no, found, values)) in tensors.iter_mut().zip(arrays) {
            if *name != found {
                return Err(Error::parse(line_no, format!("expected tensor {name}, found {found}")));
            }
            if slot.len() != values.len() {
                return Err(Error::parse(line_no, format!("{name}: wrong length for header shape")));
            }
            slot.copy_from_slice(&values);
        }
        Ok(weights)
    }
}

pub(crate) fn write_values<T: Scalar>(out: &mut String, values: &[T]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{v}").unwrap();
    }
}

pub(crate) fn parse_values<T: Scalar>(text: &str, line: usize) -> Result<Vec<T>> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|v| {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(T::of)
                .ok_or_else(|| Error::parse(line, format!("bad value {v:?}")))
        })
        .collect()
}

/// Unified context embedding produced by one of the encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqEmbedding<T> {
    pub vector: Vector<T>,
    pub source: EncoderMode,
}
