//! Dense vectors, cosine similarity and a deterministic hashed text
//! embedder, plus a file-backed table so externally trained embeddings can
//! replace the hashed ones.
//!
//! Hashed embedding: the text is lowercased and whitespace-collapsed, then
//! every word contributes the token `w:<word>` and every character trigram of
//! `" " + text + " "` contributes `t:<trigram>`. Each token is hashed with
//! 64-bit FNV-1a whose initial state is the embedder seed; bit 0 picks the
//! sign (`0` → +1), `(h >> 1) % dim` picks the bucket. The summed vector is
//! scaled to unit L2 norm.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::Hasher;

use fnv::FnvHasher;

use crate::error::{Error, Result};
use crate::ncd::normalize_text;
use crate::scalar::Scalar;

/// Fixed-length vector of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector<T>(Vec<T>);

impl<T: Scalar> Vector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("vector must have positive dimension".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("vector has non-finite entries".into()));
        }
        Ok(Vector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![T::zero(); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn dot(&self, other: &Self) -> T {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, alpha: T) -> Self {
        Vector(self.0.iter().map(|&v| v * alpha).collect())
    }

    /// Converts to another precision.
    pub fn cast<U: Scalar>(&self) -> Vector<U> {
        Vector(self.0.iter().map(|v| U::of(v.as_f64())).collect())
    }
}

impl<T> std::ops::Neg for Vector<T>
where
    T: Scalar,
{
    type Output = Self;
    fn neg(self) -> Self {
        Vector(self.0.into_iter().map(|v| -v).collect())
    }
}

impl<T> AsRef<[T]> for Vector<T> {
    fn as_ref(&self) -> &[T] {
        &self.0
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `u·v / (‖u‖‖v‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity<T: Scalar>(u: &Vector<T>, v: &Vector<T>) -> Result<T> {
    if u.dim() != v.dim() {
        return Err(Error::DimMismatch {
            expected: u.dim(),
            found: v.dim(),
        });
    }
    let nu = u.norm();
    let nv = v.norm();
    if nu == T::zero() || nv == T::zero() {
        return Err(Error::ZeroVector);
    }
    let c = u.dot(v) / (nu * nv);
    Ok(c.max(-T::one()).min(T::one()))
}

/// Anything that maps text to a vector of fixed dimension.
pub trait TextEmbedder<T: Scalar> {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vector<T>>;
}

/// Signed feature-hashing embedder over word unigrams and character trigrams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder {
            dim: Self::DEFAULT_DIM,
            seed: Self::DEFAULT_SEED,
        }
    }
}

impl HashEmbedder {
    pub const DEFAULT_DIM: usize = 64;
    /// The standard FNV-1a 64-bit offset basis.
    pub const DEFAULT_SEED: u64 = 0xcbf2_9ce4_8422_2325;

    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dim must be positive".into()));
        }
        Ok(HashEmbedder { dim, seed })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn bump(&self, acc: &mut [f64], token: &str) {
        let mut h = FnvHasher::with_key(self.seed);
        h.write(token.as_bytes());
        let h = h.finish();
        let bucket = ((h >> 1) % self.dim as u64) as usize;
        acc[bucket] += if h & 1 == 0 { 1.0 } else { -1.0 };
    }

    pub fn embed_text<T: Scalar>(&self, text: &str) -> Result<Vector<T>> {
        let norm = normalize_text(text);
        if norm.is_empty() {
            return Err(Error::EmptyText);
        }
        let mut acc = vec![0.0f64; self.dim];
        let mut token = String::new();
        for word in norm.split(' ') {
            token.clear();
            token.push_str("w:");
            token.push_str(word);
            self.bump(&mut acc, &token);
        }
        let padded: Vec<char> = std::iter::once(' ')
            .chain(norm.chars())
            .chain(std::iter::once(' '))
            .collect();
        for tri in padded.windows(3) {
            token.clear();
            token.push_str("t:");
            token.extend(tri);
            self.bump(&mut acc, &token);
        }
        let len = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if len == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(Vector(acc.into_iter().map(|v| T::of(v / len)).collect()))
    }
}

impl<T: Scalar> TextEmbedder<T> for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vector<T>> {
        self.embed_text(text)
    }
}

/// Externally supplied embeddings keyed by normalized text.
///
/// File format: a `dim=<n>` header line, then `key<TAB>v1,v2,...,vn` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    dim: usize,
    map: HashMap<String, Vector<T>>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            map: HashMap::new(),
        }
    }

    pub fn insert(&mut self, key: &str, v: Vector<T>) -> Result<()> {
        if v.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: v.dim(),
            });
        }
        let key = normalize_text(key);
        if self.map.contains_key(&key) {
            return Err(Error::InvalidArgument(format!("duplicate embedding key {key:?}")));
        }
        self.map.insert(key, v);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&Vector<T>> {
        self.map.get(&normalize_text(key))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Serializes rows sorted by key.
    pub fn to_text(&self) -> String {
        let mut keys: Vec<&String> = self.map.keys().collect();
        keys.sort();
        let mut out = format!("dim={}\n", self.dim);
        for key in keys {
            out.push_str(key);
            out.push('\t');
            for (i, v) in self.map[key].as_slice().iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{v}").expect("writing to String");
            }
            out.push('\n');
        }
        out
    }
}

/// Parses an embedding table. Errors name the 1-based data row.
pub fn load_embedding_table<T: Scalar>(text: &str) -> Result<EmbeddingTable<T>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing dim header"))?;
    let dim: usize = header
        .strip_prefix("dim=")
        .and_then(|d| d.trim().parse().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::parse(1, format!("bad header {header:?}, expected dim=<n>")))?;
    let mut table = EmbeddingTable::new(dim);
    for (idx, line) in lines.filter(|l| !l.is_empty()).enumerate() {
        let row = idx + 1;
        let (key, values) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(row, "row needs key<TAB>values"))?;
        let values = values
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map(T::of)
                    .map_err(|_| Error::parse(row, format!("bad value {v:?}")))
            })
            .collect::<Result<Vec<T>>>()?;
        if values.len() != dim {
            return Err(Error::parse(
                row,
                format!("row has {} values, table dim is {dim}", values.len()),
            ));
        }
        let v = Vector::new(values).map_err(|e| Error::parse(row, e.to_string()))?;
        table.insert(key, v).map_err(|e| Error::parse(row, e.to_string()))?;
    }
    Ok(table)
}

impl<T: Scalar> TextEmbedder<T> for EmbeddingTable<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vector<T>> {
        self.get(text)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("no embedding for {text:?}")))
    }
}
