use std::collections::HashMap;
use std::fmt::Write as _;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hash::Hasher;

use crate::embed::dot;
use crate::error::{Error, Result};
use crate::scalar::{gelu, gelu_grad, Scalar};
use crate::seq::{parse_values, write_values, Mat};

pub const DEFAULT_HIDDEN: usize = 32;

/// Ordered, named input columns of a ranker.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureLayout {
    columns: Vec<String>,
}

impl FeatureLayout {
    pub fn new(columns: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for c in &columns {
            if c.is_empty() || c.contains([',', '\t', '\n']) {
                return Err(Error::Layout(format!("bad column name {c:?}")));
            }
            if !seen.insert(c.as_str()) {
                return Err(Error::Layout(format!("column {c} declared twice")));
            }
        }
        Ok(FeatureLayout { columns })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Index in `available` of each of our columns, in our order.
    pub fn project_from(&self, available: &FeatureLayout) -> Result<Vec<usize>> {
        let index: HashMap<&str, usize> = available
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let missing: Vec<&str> = self
            .columns
            .iter()
            .filter(|c| !index.contains_key(c.as_str()))
            .map(String::as_str)
            .collect();
        if !missing.is_empty() {
            return Err(Error::Layout(format!("missing columns: {}", missing.join(", "))));
        }
        Ok(self.columns.iter().map(|c| index[c.as_str()]).collect())
    }

    /// Exact-match check; the error names missing and extra columns.
    pub fn expect_same(&self, found: &FeatureLayout) -> Result<()> {
        if self == found {
            return Ok(());
        }
        let missing: Vec<&str> = self
            .columns
            .iter()
            .filter(|c| found.position(c).is_none())
            .map(String::as_str)
            .collect();
        let extra: Vec<&str> = found
            .columns
            .iter()
            .filter(|c| self.position(c).is_none())
            .map(String::as_str)
            .collect();
        let msg = if missing.is_empty() && extra.is_empty() {
            "columns out of order".to_owned()
        } else {
            format!("missing [{}], extra [{}]", missing.join(", "), extra.join(", "))
        };
        Err(Error::Layout(msg))
    }
}

/// Score function over standardized inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum Scorer<T> {
    /// `s = w·x`
    Linear { w: Vec<T> },
    /// `s = w2·gelu(W1 x + b1)`
    Mlp { w1: Mat<T>, b1: Vec<T>, w2: Vec<T> },
}

fn column_rng(seed: u64, column: &str) -> ChaCha8Rng {
    let mut h = FnvHasher::with_key(seed);
    h.write(column.as_bytes());
    ChaCha8Rng::seed_from_u64(h.finish())
}

impl<T: Scalar> Scorer<T> {
    /// Seeded initialization. First-layer weights of each column come from a
    /// stream keyed by the column name, so adding a column leaves the
    /// initial weights of the others untouched.
    pub fn init(layout: &FeatureLayout, hidden: Option<usize>, seed: u64) -> Self {
        use rand::Rng;
        let n = layout.len();
        match hidden {
            None => Scorer::Linear {
                w: vec![T::zero(); n],
            },
            Some(h) => {
                let bound = 1.0 / (h as f64).sqrt();
                let mut w1 = Mat::zeros(h, n);
                for (c, name) in layout.columns().iter().enumerate() {
                    let mut rng = column_rng(seed, name);
                    for r in 0..h {
                        w1.data[r * n + c] = T::of(rng.random_range(-bound..bound));
                    }
                }
                let mut rng = column_rng(seed, "\u{0}output");
                let out_bound = (6.0 / (h + 1) as f64).sqrt();
                let w2 = (0..h).map(|_| T::of(rng.random_range(-out_bound..out_bound))).collect();
                Scorer::Mlp {
                    w1,
                    b1: vec![T::zero(); h],
                    w2,
                }
            }
        }
    }

    pub fn inputs(&self) -> usize {
        match self {
            Scorer::Linear { w } => w.len(),
            Scorer::Mlp { w1, .. } => w1.cols,
        }
    }

    pub fn forward(&self, x: &[T]) -> T {
        match self {
            Scorer::Linear { w } => dot(w, x),
            Scorer::Mlp { w1, b1, w2 } => {
                let mut acc = T::zero();
                for r in 0..w1.rows {
                    acc += w2[r] * gelu(dot(w1.row(r), x) + b1[r]);
                }
                acc
            }
        }
    }

    /// Accumulates `ds * ∂s/∂θ` into `grad` (same variant and shapes).
    pub fn backward(&self, x: &[T], ds: T, grad: &mut Scorer<T>) {
        match (self, grad) {
            (Scorer::Linear { .. }, Scorer::Linear { w: gw }) => {
                for (g, &xi) in gw.iter_mut().zip(x) {
                    *g += ds * xi;
                }
            }
            (Scorer::Mlp { w1, b1, w2 }, Scorer::Mlp { w1: gw1, b1: gb1, w2: gw2 }) => {
                for r in 0..w1.rows {
                    let pre = dot(w1.row(r), x) + b1[r];
                    gw2[r] += ds * gelu(pre);
                    let dpre = ds * w2[r] * gelu_grad(pre);
                    gb1[r] += dpre;
                    for (g, &xi) in gw1.row_mut(r).iter_mut().zip(x) {
                        *g += dpre * xi;
                    }
                }
            }
            _ => panic!("gradient accumulator has a different scorer kind"),
        }
    }

    pub fn tensors(&self) -> Vec<(&'static str, &[T])> {
        match self {
            Scorer::Linear { w } => vec![("w", w)],
            Scorer::Mlp { w1, b1, w2 } => vec![("w1", &w1.data), ("b1", b1), ("w2", w2)],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [T])> {
        match self {
            Scorer::Linear { w } => vec![("w", w)],
            Scorer::Mlp { w1, b1, w2 } => vec![("w1", &mut w1.data), ("b1", b1), ("w2", w2)],
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.iter_mut().for_each(|v| *v = T::zero());
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSummary {
    pub steps: usize,
    pub loss_trace: Vec<f64>,
    pub val_ndcg_before: Option<f64>,
    pub val_ndcg_after: Option<f64>,
}

/// A trained (or freshly initialized) ranker for one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct RankerModel<T> {
    pub variant: String,
    pub layout: FeatureLayout,
    /// Per-column standardization `(x - shift) * scale` applied before the scorer.
    pub shift: Vec<T>,
    pub scale: Vec<T>,
    pub scorer: Scorer<T>,
    pub seed: u64,
    pub config_hash: Option<String>,
    pub summary: TrainingSummary,
}

impl<T: Scalar> RankerModel<T> {
    pub fn new(variant: impl Into<String>, layout: FeatureLayout, hidden: Option<usize>, seed: u64) -> Self {
        let n = layout.len();
        let scorer = Scorer::init(&layout, hidden, seed);
        RankerModel {
            variant: variant.into(),
            layout,
            shift: vec![T::zero(); n],
            scale: vec![T::one(); n],
            scorer,
            seed,
            config_hash: None,
            summary: TrainingSummary::default(),
        }
    }

    pub fn standardize(&self, raw: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend(
            raw.iter()
                .zip(&self.shift)
                .zip(&self.scale)
                .map(|((&x, &m), &s)| (x - m) * s),
        );
    }

    /// Score of one item whose features are already in model column order.
    pub fn score(&self, features: &[T]) -> Result<T> {
        if features.len() != self.layout.len() {
            return Err(Error::Layout(format!(
                "model {} expects {} columns, got {}",
                self.variant,
                self.layout.len(),
                features.len()
            )));
        }
        let mut x = Vec::with_capacity(features.len());
        self.standardize(features, &mut x);
        Ok(self.scorer.forward(&x))
    }

    /// Scores items given in an arbitrary layout, selecting our columns by name.
    pub fn score_with_layout(&self, layout: &FeatureLayout, rows: &[Vec<T>]) -> Result<Vec<T>> {
        let idx = self.layout.project_from(layout)?;
        let mut picked = Vec::with_capacity(idx.len());
        rows.iter()
            .map(|row| {
                if row.len() != layout.len() {
                    return Err(Error::Layout(format!(
                        "row has {} values for {} columns",
                        row.len(),
                        layout.len()
                    )));
                }
                picked.clear();
                picked.extend(idx.iter().map(|&i| row[i]));
                self.score(&picked)
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.scorer
            .tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# ctxrank ranker model\n");
        writeln!(out, "variant={}", self.variant).unwrap();
        writeln!(out, "columns={}", self.layout.columns().join(",")).unwrap();
        writeln!(out, "seed={}", self.seed).unwrap();
        if let Some(h) = &self.config_hash {
            writeln!(out, "config_hash={h}").unwrap();
        }
        match &self.scorer {
            Scorer::Linear { .. } => writeln!(out, "scorer=linear").unwrap(),
            Scorer::Mlp { w1, .. } => writeln!(out, "scorer=mlp\nhidden={}", w1.rows).unwrap(),
        }
        writeln!(out, "steps={}", self.summary.steps).unwrap();
        for (k, v) in [
            ("val_ndcg_before", self.summary.val_ndcg_before),
            ("val_ndcg_after", self.summary.val_ndcg_after),
        ] {
            if let Some(v) = v {
                writeln!(out, "{k}={v}").unwrap();
            }
        }
        let mut arrays: Vec<(&str, &[T])> = vec![("shift", &self.shift), ("scale", &self.scale)];
        arrays.extend(self.scorer.tensors());
        for (name, values) in arrays {
            write!(out, "{name}\t{}\t", values.len()).unwrap();
            write_values(&mut out, values);
            out.push('\n');
        }
        write!(out, "loss_trace\t{}\t", self.summary.loss_trace.len()).unwrap();
        write_values(&mut out, &self.summary.loss_trace);
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut header = HashMap::new();
        let mut arrays: HashMap<String, (usize, Vec<f64>)> = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((name, rest)) = line.split_once('\t') {
                let (count, values) = rest
                    .split_once('\t')
                    .ok_or_else(|| Error::parse(line_no, "array line needs name, count, values"))?;
                let count: usize = count
                    .parse()
                    .map_err(|_| Error::parse(line_no, "bad array length"))?;
                let values = parse_values::<f64>(values, line_no)?;
                if values.len() != count {
                    return Err(Error::parse(line_no, format!("{name}: expected {count} values")));
                }
                arrays.insert(name.to_owned(), (line_no, values));
            } else if let Some((k, v)) = line.split_once('=') {
                header.insert(k.to_owned(), v.to_owned());
            } else {
                return Err(Error::parse(line_no, "expected key=value or array line"));
            }
        }
        let get = |k: &str| {
            header
                .get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::parse(0, format!("missing header field {k}")))
        };
        let num = |k: &str| -> Result<u64> {
            get(k)?
                .parse()
                .map_err(|_| Error::parse(0, format!("bad header field {k}")))
        };
        let columns = get("columns")?;
        let layout = FeatureLayout::new(if columns.is_empty() {
            Vec::new()
        } else {
            columns.split(',').map(str::to_owned).collect()
        })?;
        let n = layout.len();
        let hidden = match get("scorer")? {
            "linear" => None,
            "mlp" => Some(num("hidden")? as usize),
            other => return Err(Error::parse(0, format!("unknown scorer {other}"))),
        };
        let mut model = RankerModel::new(get("variant")?, layout, hidden, num("seed")?);
        model.config_hash = header.get("config_hash").cloned();
        let opt = |k: &str| -> Result<Option<f64>> {
            header
                .get(k)
                .map(|v| v.parse().map_err(|_| Error::parse(0, format!("bad header field {k}"))))
                .transpose()
        };
        let mut take = |name: &str, expected: usize| -> Result<Vec<T>> {
            let (line, values) = arrays
                .remove(name)
                .ok_or_else(|| Error::parse(0, format!("missing array {name}")))?;
            if expected != usize::MAX && values.len() != expected {
                return Err(Error::parse(line, format!("{name}: wrong length for layout")));
            }
            Ok(values.into_iter().map(T::of).collect())
        };
        model.shift = take("shift", n)?;
        model.scale = take("scale", n)?;
        let names: Vec<(&'static str, usize)> =
            model.scorer.tensors().iter().map(|(k, t)| (*k, t.len())).collect();
        for ((name, len), (_, slot)) in names.into_iter().zip(model.scorer.tensors_mut()) {
            slot.copy_from_slice(&take(name, len)?);
        }
        let loss_trace = take("loss_trace", usize::MAX)?.into_iter().map(|v| v.as_f64()).collect();
        model.summary = TrainingSummary {
            steps: num("steps")? as usize,
            loss_trace,
            val_ndcg_before: opt("val_ndcg_before")?,
            val_ndcg_after: opt("val_ndcg_after")?,
        };
        Ok(model)
    }
}
